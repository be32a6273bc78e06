//! Siamese patch-inconsistency model.
//!
//! A shared extractor `f` maps each 64×64 patch to a 256-dimensional vector.
//! The head `g` receives the pointwise squared difference of two such
//! vectors and emits a logit `z`; `p = logistic(z)` is the probability that
//! exactly one of the patches was hue-modified. The backbone runs in f32 and
//! the head in f64.

mod adam;
mod backbone;
mod checkpoint;
mod head;
mod loss;
pub mod nn;
mod siamese;
mod train;

pub use adam::Adam;
pub use backbone::{pack_patches, Backbone, BackboneConfig, BackboneKind, InputFilter, FEATURE_DIM};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta};
pub use head::{Head, HeadTrace, HIDDEN_UNITS};
pub use loss::{pair_bce, pair_bce_grad_logit, pair_loss, PROB_EPS};
pub use siamese::{logistic, pointwise_sq_diff, FeatureVector, SiameseModel};
pub use train::{
    evaluate_pairs, train, train_with_progress, validation_indices, EpochRecord, TrainConfig, TrainOutcome,
    TrainSummary,
};
