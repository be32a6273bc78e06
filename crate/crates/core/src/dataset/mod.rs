//! Forgery synthesis: convex masks, local hue modification, test-set recipes,
//! training pairs and patch grids.

mod convex;
mod forgery;
mod grid;
mod pairs;
mod recipe;
mod sources;

pub use convex::{convex_hull, random_convex_mask, rasterize_convex, DEFAULT_BOX};
pub use forgery::apply_local_hue_mod;
pub use grid::{extract_patch_grid, PatchGrid};
pub use pairs::{
    sample_training_pair, training_angles, JpegOrder, PairMode, PairProvenance, PairSampler, TrainingPair, MAX_TRAIN_QF,
    MIN_TRAIN_QF, PATCH_SIZE,
};
pub use recipe::{
    default_angles, make_test_set, read_manifest, write_manifest, write_test_set, ForgeryCase, ManifestRecord,
    Recipe, TestSetParams, MANIFEST_FILE, SECOND_PASS_QUALITY,
};
pub use sources::{synthetic_scene, SceneParams};

/// Ground-truth mask of a forgery case (true = forged).
pub type ForgeryMask = crate::mask::Mask;
