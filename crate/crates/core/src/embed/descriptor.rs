use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{euclidean, norm, Real};

/// Embedded descriptor. Produced by [`normalize_scale`] it lies on the
/// sphere of the configured radius; loaded from a store it is taken as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Descriptor<T>(Vec<T>);

impl<T: Real> Descriptor<T> {
    pub fn from_raw(values: Vec<T>) -> Self {
        Descriptor(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn distance(&self, other: &Descriptor<T>) -> T {
        euclidean(&self.0, &other.0)
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn cast<U: Real>(&self) -> Descriptor<U> {
        Descriptor(self.0.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

/// `scale * v / |v|`.
pub fn normalize_scale<T: Real>(v: &[T], scale: T) -> Result<Descriptor<T>> {
    // Rescale by the largest magnitude first so huge or tiny inputs do not
    // overflow or underflow the squared norm.
    let peak = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !(peak > T::zero()) || !peak.is_finite() {
        return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
    }
    let scaled: Vec<T> = v.iter().map(|&x| x / peak).collect();
    let n = norm(&scaled);
    Ok(Descriptor(scaled.into_iter().map(|x| scale * x / n).collect()))
}
