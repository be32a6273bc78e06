use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::backbone::{pack_patches, Backbone, BackboneConfig, BackboneKind};
use super::head::{Head, HIDDEN_UNITS};
use crate::colorops::ImageRaster;
use crate::error::{Error, Result};
use crate::rng::{domain, tagged_rng};

/// Output of the feature extractor; always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("feature {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Elementwise `(u - v)²`. Symmetric bit for bit since negation is exact.
pub fn pointwise_sq_diff(u: &FeatureVector, v: &FeatureVector) -> Result<FeatureVector> {
    if u.len() != v.len() {
        return Err(Error::Shape { expected: u.len().to_string(), actual: v.len().to_string() });
    }
    Ok(FeatureVector(u.0.iter().zip(&v.0).map(|(a, b)| (a - b) * (a - b)).collect()))
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weight-tied feature extractor plus comparison head.
#[derive(Debug)]
pub struct SiameseModel {
    backbone: Backbone,
    params: Vec<f32>,
    head: Head,
    calls: AtomicUsize,
}

impl Clone for SiameseModel {
    fn clone(&self) -> Self {
        Self {
            backbone: self.backbone.clone(),
            params: self.params.clone(),
            head: self.head.clone(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl SiameseModel {
    /// A freshly initialized model; all randomness comes from `seed`.
    pub fn new(config: BackboneConfig, seed: u64) -> Result<Self> {
        let backbone = Backbone::new(config)?;
        let params = backbone.init_params(&mut tagged_rng(seed, domain::INIT, 0));
        let head = Head::init(backbone.feature_dim(), HIDDEN_UNITS, &mut tagged_rng(seed, domain::INIT, 1));
        Ok(Self { backbone, params, head, calls: AtomicUsize::new(0) })
    }

    pub fn from_parts(config: BackboneConfig, params: Vec<f32>, head: Head) -> Result<Self> {
        let backbone = Backbone::new(config)?;
        if params.len() != backbone.n_params() {
            return Err(Error::Shape {
                expected: format!("{} backbone parameters", backbone.n_params()),
                actual: params.len().to_string(),
            });
        }
        if head.dim() != backbone.feature_dim() {
            return Err(Error::Shape {
                expected: format!("head over {} features", backbone.feature_dim()),
                actual: head.dim().to_string(),
            });
        }
        Ok(Self { backbone, params, head, calls: AtomicUsize::new(0) })
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn kind(&self) -> BackboneKind {
        self.backbone.kind()
    }

    pub fn config(&self) -> &BackboneConfig {
        self.backbone.config()
    }

    pub fn patch_size(&self) -> usize {
        self.backbone.config().patch_size
    }

    pub fn backbone_params(&self) -> &[f32] {
        &self.params
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub(crate) fn parts_mut(&mut self) -> (&Backbone, &mut Vec<f32>, &mut Head) {
        (&self.backbone, &mut self.params, &mut self.head)
    }

    /// Number of patches passed through the backbone since the last reset.
    pub fn backbone_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_backbone_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn feature_extract(&self, patch: &ImageRaster) -> Result<FeatureVector> {
        Ok(self.feature_extract_batch(&[patch])?.pop().expect("one feature per patch"))
    }

    /// Features for several patches in one batched pass.
    pub fn feature_extract_batch(&self, patches: &[&ImageRaster]) -> Result<Vec<FeatureVector>> {
        let n = patches.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let x = pack_patches(patches, self.patch_size(), self.config().input_filter)?;
        self.calls.fetch_add(n, Ordering::Relaxed);
        let y = self.backbone.forward(&self.params, x, n, None);
        let dim = self.backbone.feature_dim();
        (0..n)
            .map(|i| FeatureVector::new((0..dim).map(|f| y[f * n + i] as f64).collect()))
            .collect()
    }

    /// The logit `g(sq_diff(u, v))`.
    pub fn score_features(&self, u: &FeatureVector, v: &FeatureVector) -> Result<f64> {
        let d = pointwise_sq_diff(u, v)?;
        if d.len() != self.head.dim() {
            return Err(Error::Shape { expected: self.head.dim().to_string(), actual: d.len().to_string() });
        }
        Ok(self.head.forward(d.as_slice()))
    }

    pub fn predict_features(&self, u: &FeatureVector, v: &FeatureVector) -> Result<f64> {
        Ok(logistic(self.score_features(u, v)?))
    }

    /// Probability that the two patches are inconsistent.
    pub fn predict_inconsistency(&self, a: &ImageRaster, b: &ImageRaster) -> Result<f64> {
        let u = self.feature_extract(a)?;
        let v = self.feature_extract(b)?;
        self.predict_features(&u, &v)
    }

    /// `logistic(g(0))`: the score of any patch against itself.
    pub fn self_score(&self) -> f64 {
        logistic(self.head.forward(&vec![0.0; self.head.dim()]))
    }
}
