use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorops::ImageRaster;
use crate::dataset::PatchGrid;
use crate::error::{Error, Result};
use crate::model::{FeatureVector, SiameseModel};

/// Scores laid out on the patch grid.
///
/// An anchored map holds the scores of every patch against patch `anchor`;
/// its own cell carries the self-pair constant and is not evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub anchor: Option<usize>,
}

impl InconsistencyMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, anchor: Option<usize>) -> Result<Self> {
        if values.len() != rows * cols || values.is_empty() {
            return Err(Error::Shape { expected: format!("{rows}x{cols} values"), actual: values.len().to_string() });
        }
        if let Some(a) = anchor.filter(|&a| a >= values.len()) {
            return Err(Error::Parameter(format!("anchor {a} outside a {rows}x{cols} map")));
        }
        Ok(Self { rows, cols, values, anchor })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Whether cell `k` carries evidence (every cell but the anchor's own).
    pub fn observed(&self, k: usize) -> bool {
        self.anchor != Some(k)
    }
}

/// Extracts every grid patch once; row `k` is the feature of patch `k`.
pub fn precompute_features(model: &SiameseModel, img: &ImageRaster, grid: &PatchGrid) -> Result<Vec<FeatureVector>> {
    grid.check_image(img)?;
    (0..grid.len())
        .into_par_iter()
        .map(|k| model.feature_extract(&grid.patch(img, k)?))
        .collect()
}

/// Symmetric `N × N` matrix of pair probabilities from cached features.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScores {
    n: usize,
    values: Vec<f64>,
}

impl PairScores {
    /// Evaluates each unordered pair once and mirrors it; the diagonal holds
    /// the self-pair constant.
    pub fn compute(model: &SiameseModel, features: &[FeatureVector]) -> Result<Self> {
        let n = features.len();
        let c = model.self_score();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| model.predict_features(&features[i], &features[j])).collect())
            .collect::<Result<_>>()?;
        let mut values = vec![c; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &p) in row.iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = p;
                values[j * n + i] = p;
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// The map anchored at patch `k`.
    pub fn map(&self, k: usize, grid: &PatchGrid) -> Result<InconsistencyMap> {
        if k >= self.n {
            return Err(Error::Parameter(format!("anchor {k} out of range for {} patches", self.n)));
        }
        if grid.len() != self.n {
            return Err(Error::Shape { expected: format!("{} patches", grid.len()), actual: self.n.to_string() });
        }
        InconsistencyMap::new(grid.rows, grid.cols, self.row(k).to_vec(), Some(k))
    }

    pub fn maps(&self, grid: &PatchGrid) -> Result<Vec<InconsistencyMap>> {
        (0..self.n).map(|k| self.map(k, grid)).collect()
    }
}

/// Scores of every patch against anchor `k`, arranged on the grid.
pub fn inconsistency_map(
    k: usize,
    features: &[FeatureVector],
    model: &SiameseModel,
    grid: &PatchGrid,
) -> Result<InconsistencyMap> {
    if k >= features.len() {
        return Err(Error::Parameter(format!("anchor {k} out of range for {} patches", features.len())));
    }
    if grid.len() != features.len() {
        return Err(Error::Shape { expected: format!("{} patches", grid.len()), actual: features.len().to_string() });
    }
    let c = model.self_score();
    let values = features
        .iter()
        .enumerate()
        .map(|(m, f)| if m == k { Ok(c) } else { model.predict_features(&features[k], f) })
        .collect::<Result<Vec<_>>>()?;
    InconsistencyMap::new(grid.rows, grid.cols, values, Some(k))
}
