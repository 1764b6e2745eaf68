//! Route-based geolocalization with cross-domain embedded descriptors.
//!
//! Map locations and street-level observations are embedded into a shared
//! low-dimensional space by two per-domain encoders. A sequence of
//! observations is localized by searching every candidate route on the road
//! graph for the one whose concatenated map descriptors are closest.
//!
//! The numeric core ([`embed`], [`retrieval`], [`localize`]) is generic over
//! the floating point type through [`Real`]; the aliases below fix it to
//! `f64`, which is what the benchmark harness uses.

pub mod baselines;
pub mod bench;
pub mod embed;
pub mod error;
pub mod localize;
pub mod retrieval;
pub mod scalar;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Real;

pub use world::{Location, MapGraph, Route, SyntheticWorldConfig, Tag, TagSet, TurnPattern};

/// 64-bit descriptor.
pub type Descriptor = embed::Descriptor<f64>;
/// 32-bit descriptor, the on-disk precision of descriptor stores.
pub type Descriptor32 = embed::Descriptor<f32>;
pub type Encoder = embed::Encoder<f64>;
pub type EncoderPair = embed::EncoderPair<f64>;
pub type LossConfig = embed::LossConfig<f64>;
pub type TrainBatch = embed::TrainBatch<f64>;
pub type DescriptorStore = embed::DescriptorStore<f64>;
pub type RouteDescriptor = localize::RouteDescriptor<f64>;
pub type CandidateSet = localize::CandidateSet<f64>;
pub type Ranked = localize::Ranked<f64>;
