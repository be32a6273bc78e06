//! Localization of local hue modification by Siamese patch matching.
//!
//! The crate covers the whole experimental loop: synthesizing hue-modified
//! forgeries on top of simulated camera output ([`colorops`], [`dataset`]),
//! training a weight-tied patch-inconsistency model ([`model`]), fusing
//! all-pairs patch scores into a thresholded heatmap ([`localize`]), a
//! deterministic CFA-artifact baseline ([`baseline_choi`]) and pixel-level
//! scoring ([`eval`]).

pub mod baseline_choi;
pub mod colorops;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod localize;
pub mod mask;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
