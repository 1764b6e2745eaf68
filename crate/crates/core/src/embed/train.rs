use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{build_batch, AugmentationConfig, TrainBatch};
use super::encoder::{Encoder, EncoderPair};
use super::loss::{batch_loss, batch_loss_value, LossConfig};
use super::views::DomainViews;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::world::MapGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossConfig<f64>,
    pub aug: AugmentationConfig,
    pub epochs: usize,
    /// Plain SGD step size.
    pub lr: f64,
    /// Locations per batch (`N_B`).
    pub batch_locations: usize,
    /// Augmentations per location (`K`).
    pub augmentations: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            aug: AugmentationConfig::default(),
            epochs: 10,
            lr: 0.05,
            batch_locations: 10,
            augmentations: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub encoders: EncoderPair<T>,
    /// Loss on a fixed probe set before training.
    pub initial_loss: f64,
    /// Loss on the same probe set after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn cast_loss<T: Real>(c: &LossConfig<f64>) -> LossConfig<T> {
    LossConfig {
        alpha: T::of(c.alpha),
        lambdas: c.lambdas.map(T::of),
        scale: T::of(c.scale),
        dim: c.dim,
    }
}

fn batches<T: Real>(
    g: &MapGraph,
    views: &DomainViews,
    ids: &mut [u32],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainBatch<T>>> {
    ids.shuffle(rng);
    ids.chunks(cfg.batch_locations)
        .filter(|c| c.len() >= 2)
        .map(|c| build_batch(g, views, c, cfg.augmentations, &cfg.aug, rng))
        .collect()
}

fn probe_loss<T: Real>(
    probe: &[TrainBatch<T>],
    pair: &EncoderPair<T>,
    loss: &LossConfig<T>,
) -> Result<f64> {
    let mut sum = 0.0;
    for b in probe {
        sum += batch_loss_value(b, &pair.map, &pair.image, loss)?.as_f64();
    }
    Ok(sum / probe.len() as f64)
}

/// Trains the map-side and image-side encoders with SGD on every location
/// of `g`. Deterministic for a fixed `cfg.seed` (and `cfg.aug.seed`).
pub fn train_encoders<T: Real>(
    g: &MapGraph,
    views: &DomainViews,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let ids: Vec<u32> = g.locations().iter().map(|l| l.id).collect();
    train_encoders_on(g, views, &ids, cfg)
}

/// As [`train_encoders`], restricted to the locations in `ids`.
pub fn train_encoders_on<T: Real>(
    g: &MapGraph,
    views: &DomainViews,
    ids: &[u32],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.loss.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    if g.latent_dim() == 0 {
        return Err(Error::invalid("graph has no latent features"));
    }
    if g.latent_dim() != views.latent_dim() {
        return Err(Error::DimensionMismatch { expected: views.latent_dim(), got: g.latent_dim() });
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::invalid("training ids contain duplicates"));
    }
    for &id in ids {
        g.location(id)?;
    }
    if cfg.batch_locations < 2 || cfg.batch_locations > ids.len() {
        return Err(Error::invalid(format!(
            "batch_locations must be in [2, {}], got {}",
            ids.len(),
            cfg.batch_locations
        )));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid("learning rate must be finite and >= 0"));
    }

    let loss_cfg: LossConfig<T> = cast_loss(&cfg.loss);
    let lr = T::of(cfg.lr);
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let map = Encoder::random(g.latent_dim(), cfg.loss.dim, &mut init_rng);
    let image = Encoder::random(g.latent_dim(), cfg.loss.dim, &mut init_rng);
    let mut pair = EncoderPair { map, image, scale: loss_cfg.scale, views: *views.config() };

    let mut ids = ids.to_vec();
    let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.aug.seed);
    probe_rng.set_stream(1);
    let probe: Vec<TrainBatch<T>> = batches(g, views, &mut ids.clone(), cfg, &mut probe_rng)?;
    let initial_loss = probe_loss(&probe, &pair, &loss_cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ cfg.aug.seed.rotate_left(32));
    rng.set_stream(2);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        for (bi, batch) in batches::<T>(g, views, &mut ids, cfg, &mut rng)?.iter().enumerate() {
            let (loss, grads) = batch_loss(batch, &pair.map, &pair.image, &loss_cfg)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss: loss.as_f64() });
            }
            pair.map.apply_step(&grads.map, lr);
            pair.image.apply_step(&grads.image, lr);
            if !pair.map.is_finite() || !pair.image.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss: f64::NAN });
            }
        }
        let l = probe_loss(&probe, &pair, &loss_cfg)?;
        if !l.is_finite() {
            return Err(Error::Diverged { epoch, batch: usize::MAX, loss: l });
        }
        epoch_losses.push(l);
    }
    Ok(TrainOutcome { encoders: pair, initial_loss, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ViewConfig;
    use crate::world::{generate_synthetic_world, Layout, SyntheticWorldConfig};

    fn world() -> MapGraph {
        generate_synthetic_world(&SyntheticWorldConfig {
            layout: Layout::Grid { cols: 8, rows: 8, block: 1 },
            latent_dim: 8,
            ..Default::default()
        })
        .unwrap()
    }

    fn cfg(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig { epochs, lr, ..Default::default() }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let g = world();
        let views = DomainViews::new(ViewConfig::default(), 8).unwrap();
        let out = train_encoders::<f64>(&g, &views, &cfg(3, 0.0)).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(0);
        let map = Encoder::<f64>::random(8, 16, &mut init_rng);
        assert_eq!(out.encoders.map, map);
        assert!(out.epoch_losses.iter().all(|&l| l == out.initial_loss));
    }

    #[test]
    fn deterministic_and_improving() {
        let g = world();
        let views = DomainViews::new(ViewConfig::default(), 8).unwrap();
        let a = train_encoders::<f64>(&g, &views, &cfg(5, 0.05)).unwrap();
        let b = train_encoders::<f64>(&g, &views, &cfg(5, 0.05)).unwrap();
        assert_eq!(a.encoders, b.encoders);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert!(a.epoch_losses.last().unwrap() <= a.epoch_losses.first().unwrap());
        assert!(a.epoch_losses[0] < a.initial_loss);
    }

    #[test]
    fn huge_learning_rate_is_caught_or_finite() {
        let g = world();
        let views = DomainViews::new(ViewConfig::default(), 8).unwrap();
        match train_encoders::<f64>(&g, &views, &cfg(2, 1e300)) {
            Ok(out) => assert!(out.encoders.map.is_finite()),
            Err(e) => assert!(matches!(e, Error::Diverged { .. } | Error::InvalidInput(_)), "{e}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = world();
        let views = DomainViews::new(ViewConfig::default(), 8).unwrap();
        assert!(train_encoders::<f64>(&g, &views, &cfg(0, 0.1)).is_err());
        let wrong_views = DomainViews::new(ViewConfig::default(), 4).unwrap();
        assert!(train_encoders::<f64>(&g, &wrong_views, &cfg(1, 0.1)).is_err());
        assert!(train_encoders_on::<f64>(&g, &views, &[0, 1, 1, 2], &cfg(1, 0.1)).is_err());
        assert!(train_encoders_on::<f64>(&g, &views, &[0, 999], &cfg(1, 0.1)).is_err());
        assert!(train_encoders_on::<f64>(&g, &views, &[0, 1, 2], &cfg(1, 0.1)).is_err());
    }

    #[test]
    fn subset_training_ignores_other_locations() {
        let g = world();
        let views = DomainViews::new(ViewConfig::default(), 8).unwrap();
        let ids: Vec<u32> = (0..40).collect();
        let a = train_encoders_on::<f64>(&g, &views, &ids, &cfg(2, 0.05)).unwrap();
        let mut moved = g.locations().to_vec();
        for l in moved.iter_mut().filter(|l| l.id >= 40) {
            l.latent.iter_mut().for_each(|x| *x += 5.0);
        }
        let h = MapGraph::from_locations(moved).unwrap();
        let b = train_encoders_on::<f64>(&h, &views, &ids, &cfg(2, 0.05)).unwrap();
        assert_eq!(a.encoders, b.encoders);
    }
}
