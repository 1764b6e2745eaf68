use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::views::{DomainViews, TileScale};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::world::MapGraph;

/// `N_B` locations with `K` augmented latents per domain. Entry `i * k + a`
/// is augmentation `a` of location `i`; augmentation indices are aligned
/// across the two domains.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch<T> {
    pub location_ids: Vec<u32>,
    pub k: usize,
    pub map: Vec<Vec<T>>,
    pub image: Vec<Vec<T>>,
}

impl<T: Real> TrainBatch<T> {
    pub fn location_count(&self) -> usize {
        self.location_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.location_ids.len();
        if n < 2 {
            return Err(Error::invalid(format!("a batch needs >= 2 locations for negatives, got {n}")));
        }
        if self.k == 0 {
            return Err(Error::invalid("a batch needs >= 1 augmentation per location"));
        }
        for (name, side) in [("map", &self.map), ("image", &self.image)] {
            if side.len() != n * self.k {
                return Err(Error::invalid(format!(
                    "{name} side has {} latents, expected {}",
                    side.len(),
                    n * self.k
                )));
            }
        }
        let dim = self.map[0].len();
        if let Some(bad) = self.map.iter().chain(&self.image).find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePick {
    /// One of the two tile scales, chosen uniformly per location per batch.
    Random,
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub jitter_sigma: f64,
    pub scale_pick: ScalePick,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig { jitter_sigma: 0.1, scale_pick: ScalePick::Random, seed: 0 }
    }
}

/// Builds a batch from the given locations: per location one tile scale,
/// then `k` jittered copies of that tile and of the street-level view.
pub fn build_batch<T: Real, R: Rng + ?Sized>(
    g: &MapGraph,
    views: &DomainViews,
    ids: &[u32],
    k: usize,
    aug: &AugmentationConfig,
    rng: &mut R,
) -> Result<TrainBatch<T>> {
    if !(aug.jitter_sigma >= 0.0) {
        return Err(Error::invalid("jitter_sigma must be >= 0"));
    }
    let mut map = Vec::with_capacity(ids.len() * k);
    let mut image = Vec::with_capacity(ids.len() * k);
    for &id in ids {
        let loc = g.location(id)?;
        let scale = match aug.scale_pick {
            ScalePick::Random => {
                if rng.random::<bool>() {
                    TileScale::S1
                } else {
                    TileScale::S2
                }
            }
            ScalePick::S1 => TileScale::S1,
            ScalePick::S2 => TileScale::S2,
        };
        let tile = views.map_view(loc, scale)?;
        let street = views.image_view(loc)?;
        for _ in 0..k {
            map.push(jitter(&tile, aug.jitter_sigma, rng));
            image.push(jitter(&street, aug.jitter_sigma, rng));
        }
    }
    let batch = TrainBatch { location_ids: ids.to_vec(), k, map, image };
    batch.validate()?;
    Ok(batch)
}

fn jitter<T: Real, R: Rng + ?Sized>(v: &[f64], sigma: f64, rng: &mut R) -> Vec<T> {
    v.iter()
        .map(|&x| {
            let noise = if sigma > 0.0 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            T::of(x + noise)
        })
        .collect()
}
