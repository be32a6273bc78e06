//! From pairwise patch scores to a full-resolution heatmap and mask.
//!
//! Every grid patch goes through the backbone exactly once; all pair scores
//! are then computed from the cached features. Each anchor patch yields one
//! map of scores against all others. The maps are fused by mean shift,
//! resampled to image size and thresholded.
//!
//! The fused map reflects whichever patches are in the majority. When most
//! of the image is modified the heatmap comes out inverted; no attempt is made
//! to detect this, see [`LocalizeParams::invert`].

mod fusion;
mod heatmap;
mod maps;
mod pipeline;

pub use fusion::{default_bandwidth, fuse_mean_shift, Fusion, MeanShiftParams};
pub use heatmap::{
    binarize, fit_from_moments, gaussian_tail_threshold, gaussian_tail_threshold_values, normal_upper_quantile,
    upsample_heatmap, BinaryMask, Heatmap, ThresholdFit,
};
pub use maps::{inconsistency_map, precompute_features, InconsistencyMap, PairScores};
pub use pipeline::{
    localize_pipeline, Localization, LocalizeParams, LocalizeRecord, ThresholdMode, DEFAULT_STRIDE, DEFAULT_TAIL,
    FIXED_TAU, TAU_FLOOR,
};
