use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::descriptor::{normalize_scale, Descriptor};
use super::loss::LossConfig;
use super::views::ViewConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Affine map from latent space to descriptor space, row-major
/// `out_dim x in_dim` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Encoder<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Encoder {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Gaussian weights with variance `1 / in_dim`, zero bias.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| T::of(s * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Encoder { in_dim, out_dim, weights, bias: vec![T::zero(); out_dim] }
    }

    /// Pre-normalization output `W a + b`.
    pub fn project(&self, latent: &[T]) -> Result<Vec<T>> {
        if latent.len() != self.in_dim {
            return Err(Error::DimensionMismatch { expected: self.in_dim, got: latent.len() });
        }
        Ok(self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(latent).map(|(&w, &a)| w * a).sum::<T>() + b)
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn apply_step(&mut self, grad: &EncoderGrad<T>, lr: T) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * *g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * *g;
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flat parameter view: weights followed by bias.
    pub fn param(&self, i: usize) -> T {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.bias[i - self.weights.len()]
        }
    }

    pub fn param_mut(&mut self, i: usize) -> &mut T {
        let nw = self.weights.len();
        if i < nw {
            &mut self.weights[i]
        } else {
            &mut self.bias[i - nw]
        }
    }
}

/// Gradient with the same shape as an [`Encoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> EncoderGrad<T> {
    pub fn zeros_like(enc: &Encoder<T>) -> Self {
        EncoderGrad {
            weights: vec![T::zero(); enc.weights.len()],
            bias: vec![T::zero(); enc.bias.len()],
        }
    }

    pub fn param(&self, i: usize) -> T {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.bias[i - self.weights.len()]
        }
    }
}

/// `normalize_scale(W a + b, scale)`.
pub fn encode<T: Real>(latent: &[T], enc: &Encoder<T>, cfg: &LossConfig<T>) -> Result<Descriptor<T>> {
    normalize_scale(&enc.project(latent)?, cfg.scale)
}

/// Trained map-side and image-side encoders, plus the view model they were
/// trained against so descriptors can be regenerated later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderPair<T> {
    pub map: Encoder<T>,
    pub image: Encoder<T>,
    pub scale: T,
    pub views: ViewConfig,
}

impl<T: Real> EncoderPair<T> {
    pub fn encode_map(&self, latent: &[T]) -> Result<Descriptor<T>> {
        normalize_scale(&self.map.project(latent)?, self.scale)
    }

    pub fn encode_image(&self, latent: &[T]) -> Result<Descriptor<T>> {
        normalize_scale(&self.image.project(latent)?, self.scale)
    }
}
