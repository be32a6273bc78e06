use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fusion::{fuse_mean_shift, Fusion, MeanShiftParams};
use super::heatmap::{binarize, gaussian_tail_threshold, upsample_heatmap, BinaryMask, Heatmap};
use super::maps::{precompute_features, InconsistencyMap, PairScores};
use crate::colorops::ImageRaster;
use crate::dataset::PatchGrid;
use crate::error::{Error, Result};
use crate::model::SiameseModel;

pub const DEFAULT_STRIDE: usize = 32;
pub const DEFAULT_TAIL: f64 = 0.05;
pub const TAU_FLOOR: f64 = 0.5;
pub const FIXED_TAU: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Gaussian right-tail fit to the heatmap, floored.
    Adaptive { tail: f64, floor: f64 },
    Fixed { tau: f64 },
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Adaptive { tail: DEFAULT_TAIL, floor: TAU_FLOOR }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Adaptive { tail, floor } if *tail == DEFAULT_TAIL && *floor == TAU_FLOOR => {
                f.write_str("adaptive")
            }
            ThresholdMode::Adaptive { tail, floor } => write!(f, "adaptive:{tail}:{floor}"),
            ThresholdMode::Fixed { tau } => write!(f, "fixed:{tau}"),
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = Error;

    /// `adaptive`, `adaptive:<tail>:<floor>` or `fixed:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("bad threshold mode {s:?}"));
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let mode = match parts.as_slice() {
            ["adaptive"] => ThresholdMode::default(),
            ["adaptive", tail, floor] => ThresholdMode::Adaptive { tail: num(tail)?, floor: num(floor)? },
            ["fixed", tau] => ThresholdMode::Fixed { tau: num(tau)? },
            _ => return Err(bad()),
        };
        match mode {
            ThresholdMode::Adaptive { tail, floor } if !(tail > 0.0 && tail < 1.0) || !(0.0..=1.0).contains(&floor) => {
                Err(bad())
            }
            ThresholdMode::Fixed { tau } if !(0.0..=1.0).contains(&tau) => Err(bad()),
            m => Ok(m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeParams {
    pub stride: usize,
    pub threshold: ThresholdMode,
    pub mean_shift: MeanShiftParams,
    /// Use `1 - heatmap`; for images where forged patches are the majority.
    pub invert: bool,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            stride: DEFAULT_STRIDE,
            threshold: ThresholdMode::default(),
            mean_shift: MeanShiftParams::default(),
            invert: false,
        }
    }
}

/// Per-image summary kept in the results manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRecord {
    pub tau: f64,
    pub mu: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: f64,
    pub patches: usize,
    pub backbone_calls: usize,
    pub forged_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct Localization {
    pub grid: PatchGrid,
    pub scores: PairScores,
    pub fused: Fusion,
    pub heatmap: Heatmap,
    pub mask: BinaryMask,
    pub record: LocalizeRecord,
}

impl Localization {
    pub fn maps(&self) -> Result<Vec<InconsistencyMap>> {
        self.scores.maps(&self.grid)
    }
}

/// Grid → cached features → all-pairs maps → fusion → upsampling → threshold.
pub fn localize_pipeline(img: &ImageRaster, model: &SiameseModel, params: &LocalizeParams) -> Result<Localization> {
    let size = model.patch_size();
    let grid = PatchGrid::new(img.height(), img.width(), size, size, params.stride)?;
    let calls_before = model.backbone_calls();
    let features = precompute_features(model, img, &grid)?;
    let backbone_calls = model.backbone_calls() - calls_before;
    let scores = PairScores::compute(model, &features)?;
    let maps = scores.maps(&grid)?;
    let fused = fuse_mean_shift(&maps, &params.mean_shift)?;
    let mut heatmap = upsample_heatmap(&fused.map, &grid)?;
    if params.invert {
        heatmap = heatmap.inverted();
    }
    let fit = gaussian_tail_threshold(&heatmap, DEFAULT_TAIL, TAU_FLOOR)?;
    let (tau, fit) = match params.threshold {
        ThresholdMode::Adaptive { tail, floor } => {
            let f = gaussian_tail_threshold(&heatmap, tail, floor)?;
            (f.tau, f)
        }
        ThresholdMode::Fixed { tau } => (tau, fit),
    };
    let mask = binarize(&heatmap, tau);
    let record = LocalizeRecord {
        tau,
        mu: fit.mu,
        sigma: fit.sigma,
        iterations: fused.iterations,
        converged: fused.converged,
        bandwidth: fused.bandwidth,
        patches: grid.len(),
        backbone_calls,
        forged_fraction: mask.mask.fraction(),
    };
    Ok(Localization { grid, scores, fused, heatmap, mask, record })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_mode_parsing() {
        assert_eq!("adaptive".parse::<ThresholdMode>().unwrap(), ThresholdMode::default());
        assert_eq!("fixed:0.8".parse::<ThresholdMode>().unwrap(), ThresholdMode::Fixed { tau: 0.8 });
        assert_eq!(
            "adaptive:0.1:0.6".parse::<ThresholdMode>().unwrap(),
            ThresholdMode::Adaptive { tail: 0.1, floor: 0.6 }
        );
        for bad in ["fixed", "fixed:2", "adaptive:0:0.5", "gauss"] {
            assert!(bad.parse::<ThresholdMode>().is_err(), "{bad}");
        }
        for m in [ThresholdMode::default(), ThresholdMode::Fixed { tau: 0.8 }] {
            assert_eq!(m.to_string().parse::<ThresholdMode>().unwrap(), m);
        }
    }
}
