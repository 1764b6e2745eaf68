//! Cross-domain embedding: descriptors on a fixed-radius hypersphere, the
//! weighted soft-margin ranking loss with bidirectional cross-domain and
//! intra-domain constraints, and a linear-encoder trainer.

mod batch;
mod descriptor;
mod encoder;
mod loss;
mod store;
mod train;
mod views;

pub use batch::{build_batch, AugmentationConfig, ScalePick, TrainBatch};
pub use descriptor::{normalize_scale, Descriptor};
pub use encoder::{encode, Encoder, EncoderGrad, EncoderPair};
pub use loss::{
    batch_loss, batch_loss_value, pair_counts, soft_margin_grad, soft_margin_loss, BatchGrads,
    LossConfig,
};
pub use store::DescriptorStore;
pub use train::{train_encoders, train_encoders_on, TrainConfig, TrainOutcome};
pub use views::{DomainViews, TileScale, ViewConfig};
