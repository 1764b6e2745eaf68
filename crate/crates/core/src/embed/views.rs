use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Location;

/// Map tile scale. Localization and retrieval use `S1`; training samples
/// between both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TileScale {
    S1,
    S2,
}

/// How a location's latent appears in each domain.
///
/// Each domain sees `M z + b + r`, where `M` and `b` are fixed per domain
/// and `r` is a fixed per-location residual (content one domain shows and
/// the other does not). The encoders have to learn to undo the mixing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewConfig {
    pub seed: u64,
    /// Off-identity strength of the per-domain mixing matrices.
    pub mix_strength: f64,
    pub bias_scale: f64,
    pub image_residual: f64,
    pub s1_residual: f64,
    pub s2_residual: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            seed: 0x5EED,
            mix_strength: 0.5,
            bias_scale: 0.5,
            image_residual: 0.3,
            s1_residual: 0.1,
            s2_residual: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainViews {
    cfg: ViewConfig,
    dim: usize,
    mix_map: Vec<f64>,
    mix_image: Vec<f64>,
    bias_map: Vec<f64>,
    bias_image: Vec<f64>,
}

const DOMAIN_IMAGE: u64 = 1;
const DOMAIN_S1: u64 = 2;
const DOMAIN_S2: u64 = 3;

impl DomainViews {
    pub fn new(cfg: ViewConfig, latent_dim: usize) -> Result<DomainViews> {
        if latent_dim == 0 {
            return Err(Error::invalid("views need a graph with latent features"));
        }
        for (name, v) in [
            ("image_residual", cfg.image_residual),
            ("s1_residual", cfg.s1_residual),
            ("s2_residual", cfg.s2_residual),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = latent_dim;
        let s = cfg.mix_strength / (d as f64).sqrt();
        let mix = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d * d)
                .map(|i| {
                    let eye = if i / d == i % d { 1.0 } else { 0.0 };
                    eye + s * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        };
        let mix_map = mix(&mut rng);
        let mix_image = mix(&mut rng);
        let bias = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| cfg.bias_scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let bias_map = bias(&mut rng);
        let bias_image = bias(&mut rng);
        Ok(DomainViews { cfg, dim: d, mix_map, mix_image, bias_map, bias_image })
    }

    pub fn config(&self) -> &ViewConfig {
        &self.cfg
    }

    pub fn latent_dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, id: u32, domain: u64, sigma: f64) -> Vec<f64> {
        if sigma == 0.0 {
            return vec![0.0; self.dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(domain);
        (0..self.dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn apply(&self, mix: &[f64], bias: &[f64], latent: &[f64], residual: Vec<f64>) -> Vec<f64> {
        let d = self.dim;
        debug_assert_eq!(latent.len(), d);
        residual
            .into_iter()
            .enumerate()
            .map(|(r, res)| {
                let row = &mix[r * d..(r + 1) * d];
                row.iter().zip(latent).map(|(m, z)| m * z).sum::<f64>() + bias[r] + res
            })
            .collect()
    }

    fn check(&self, loc: &Location) -> Result<()> {
        if loc.latent.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: loc.latent.len() });
        }
        Ok(())
    }

    /// Map-tile latent of a location at the given scale.
    pub fn map_view(&self, loc: &Location, scale: TileScale) -> Result<Vec<f64>> {
        self.check(loc)?;
        let (domain, sigma) = match scale {
            TileScale::S1 => (DOMAIN_S1, self.cfg.s1_residual),
            TileScale::S2 => (DOMAIN_S2, self.cfg.s2_residual),
        };
        let r = self.residual(loc.id, domain, sigma);
        Ok(self.apply(&self.mix_map, &self.bias_map, &loc.latent, r))
    }

    /// Street-level latent of a location, before any query noise.
    pub fn image_view(&self, loc: &Location) -> Result<Vec<f64>> {
        self.check(loc)?;
        let r = self.residual(loc.id, DOMAIN_IMAGE, self.cfg.image_residual);
        Ok(self.apply(&self.mix_image, &self.bias_image, &loc.latent, r))
    }
}
