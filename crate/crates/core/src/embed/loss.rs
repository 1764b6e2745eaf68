use serde::{Deserialize, Serialize};

use super::batch::TrainBatch;
use super::encoder::{Encoder, EncoderGrad};
use crate::error::{Error, Result};
use crate::scalar::{euclidean, norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    /// Steepness of the soft margin.
    pub alpha: T,
    /// Weights of the four constraint families: map-anchored cross-domain,
    /// image-anchored cross-domain, map intra-domain, image intra-domain.
    pub lambdas: [T; 4],
    /// Hypersphere radius.
    pub scale: T,
    pub dim: usize,
}

impl<T: Real> Default for LossConfig<T> {
    fn default() -> Self {
        LossConfig {
            alpha: T::of(0.2),
            lambdas: [T::one(); 4],
            scale: T::of(32.0),
            dim: 16,
        }
    }
}

impl<T: Real> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        if !(self.scale > T::zero()) {
            return Err(Error::invalid("scale must be > 0"));
        }
        if self.lambdas.iter().any(|&l| !(l >= T::zero())) {
            return Err(Error::invalid("lambdas must be >= 0"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("descriptor dimension must be >= 1"));
        }
        Ok(())
    }
}

/// `ln(1 + e^(alpha d))`, evaluated as `max(z, 0) + ln(1 + e^-|z|)`.
pub fn soft_margin_loss<T: Real>(d: T, alpha: T) -> T {
    softplus(alpha * d)
}

/// Derivative of [`soft_margin_loss`] in `d`: `alpha * sigmoid(alpha d)`.
pub fn soft_margin_grad<T: Real>(d: T, alpha: T) -> T {
    alpha * sigmoid(alpha * d)
}

pub(crate) fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `(matched, unmatched)` pair counts for `n_b` locations with `k`
/// augmentations each.
pub fn pair_counts(n_b: usize, k: usize) -> (usize, usize) {
    let k2 = k * k;
    (n_b * k2, n_b * n_b.saturating_sub(1) * k2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrads<T> {
    pub map: EncoderGrad<T>,
    pub image: EncoderGrad<T>,
}

/// Loss and exact gradients for one batch.
///
/// All triplets are mined. Each of the four constraint families is averaged
/// over its own triplet count, weighted by its lambda, and the weighted
/// family means are averaged over the families that contain at least one
/// triplet (the intra-domain families are empty when `K = 1`).
pub fn batch_loss<T: Real>(
    batch: &TrainBatch<T>,
    map_enc: &Encoder<T>,
    image_enc: &Encoder<T>,
    cfg: &LossConfig<T>,
) -> Result<(T, BatchGrads<T>)> {
    let (loss, grads) = evaluate(batch, map_enc, image_enc, cfg, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Loss only; skips the backward pass.
pub fn batch_loss_value<T: Real>(
    batch: &TrainBatch<T>,
    map_enc: &Encoder<T>,
    image_enc: &Encoder<T>,
    cfg: &LossConfig<T>,
) -> Result<T> {
    Ok(evaluate(batch, map_enc, image_enc, cfg, false)?.0)
}

struct Embedded<T> {
    /// Pre-normalization outputs.
    raw: Vec<Vec<T>>,
    raw_norm: Vec<T>,
    out: Vec<Vec<T>>,
}

fn embed_all<T: Real>(
    latents: impl Iterator<Item = (bool, Vec<T>)>,
    map_enc: &Encoder<T>,
    image_enc: &Encoder<T>,
    scale: T,
) -> Result<Embedded<T>> {
    let mut e = Embedded { raw: vec![], raw_norm: vec![], out: vec![] };
    for (is_map, latent) in latents {
        let enc = if is_map { map_enc } else { image_enc };
        let u = enc.project(&latent)?;
        let n = norm(&u);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::invalid("encoder output has zero or non-finite norm"));
        }
        e.out.push(u.iter().map(|&x| scale * x / n).collect());
        e.raw_norm.push(n);
        e.raw.push(u);
    }
    Ok(e)
}

fn evaluate<T: Real>(
    batch: &TrainBatch<T>,
    map_enc: &Encoder<T>,
    image_enc: &Encoder<T>,
    cfg: &LossConfig<T>,
    want_grads: bool,
) -> Result<(T, Option<BatchGrads<T>>)> {
    cfg.validate()?;
    batch.validate()?;
    if map_enc.out_dim != cfg.dim || image_enc.out_dim != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: if map_enc.out_dim != cfg.dim { map_enc.out_dim } else { image_enc.out_dim },
        });
    }
    let n = batch.location_count();
    let k = batch.k;
    let nk = n * k;
    let total = 2 * nk;

    let latents = batch
        .map
        .iter()
        .map(|v| (true, v.clone()))
        .chain(batch.image.iter().map(|v| (false, v.clone())));
    let emb = embed_all(latents, map_enc, image_enc, cfg.scale)?;

    let mut dist = vec![T::zero(); total * total];
    for a in 0..total {
        for b in a + 1..total {
            let d = euclidean(&emb.out[a], &emb.out[b]);
            dist[a * total + b] = d;
            dist[b * total + a] = d;
        }
    }

    // (anchor block, positive block, negative block, skip k == l)
    let map_base = 0;
    let image_base = nk;
    let families = [
        (map_base, image_base, image_base, false),
        (image_base, map_base, map_base, false),
        (map_base, map_base, map_base, true),
        (image_base, image_base, image_base, true),
    ];
    let family_count = |skip: bool| n * k * (if skip { k - 1 } else { k }) * (n - 1) * k;
    let active = families.iter().filter(|f| family_count(f.3) > 0).count();
    let active_t = T::of(active as f64);

    let mut coeff = if want_grads { vec![T::zero(); total * total] } else { Vec::new() };
    let alpha = cfg.alpha;
    let mut loss = T::zero();

    for (f, &(anchor_base, pos_base, neg_base, skip)) in families.iter().enumerate() {
        let count = family_count(skip);
        if count == 0 {
            continue;
        }
        let weight = cfg.lambdas[f] / (T::of(count as f64) * active_t);
        let mut family_sum = T::zero();
        for i in 0..n {
            for ka in 0..k {
                let a = anchor_base + i * k + ka;
                let row = &dist[a * total..(a + 1) * total];
                for l in 0..k {
                    if skip && l == ka {
                        continue;
                    }
                    let p = pos_base + i * k + l;
                    let d_pos = row[p];
                    for j in (0..n).filter(|&j| j != i) {
                        for m in 0..k {
                            let q = neg_base + j * k + m;
                            let z = alpha * (d_pos - row[q]);
                            family_sum += softplus(z);
                            if want_grads {
                                let g = weight * alpha * sigmoid(z);
                                coeff[a * total + p] += g;
                                coeff[a * total + q] -= g;
                            }
                        }
                    }
                }
            }
        }
        loss += weight * family_sum;
    }

    if !want_grads {
        return Ok((loss, None));
    }

    // dL/d(embedding)
    let dim = cfg.dim;
    let mut g_out = vec![vec![T::zero(); dim]; total];
    for a in 0..total {
        for b in 0..total {
            let c = coeff[a * total + b];
            let d = dist[a * total + b];
            if c == T::zero() || d == T::zero() {
                continue;
            }
            let s = c / d;
            for t in 0..dim {
                let diff = emb.out[a][t] - emb.out[b][t];
                g_out[a][t] += s * diff;
                g_out[b][t] -= s * diff;
            }
        }
    }

    let mut grads = BatchGrads {
        map: EncoderGrad::zeros_like(map_enc),
        image: EncoderGrad::zeros_like(image_enc),
    };
    for (idx, g) in g_out.iter().enumerate() {
        let (grad, latent) = if idx < nk {
            (&mut grads.map, &batch.map[idx])
        } else {
            (&mut grads.image, &batch.image[idx - nk])
        };
        // d(s u/|u|)/du = (s/|u|)(I - u u^T / |u|^2)
        let u = &emb.raw[idx];
        let un = emb.raw_norm[idx];
        let proj = u.iter().zip(g).map(|(&ui, &gi)| ui * gi).sum::<T>() / (un * un);
        let factor = cfg.scale / un;
        let in_dim = latent.len();
        for r in 0..dim {
            let gu = factor * (g[r] - u[r] * proj);
            grad.bias[r] += gu;
            let row = &mut grad.weights[r * in_dim..(r + 1) * in_dim];
            for (w, &a) in row.iter_mut().zip(latent) {
                *w += gu * a;
            }
        }
    }
    Ok((loss, Some(grads)))
}
