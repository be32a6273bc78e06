//! Feature extractors mapping a 64×64 RGB patch to a 256-dimensional vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::nn::{backward_seq, forward_seq, visit_params, Cache, Layer, NetBuilder, Shape};
use crate::colorops::ImageRaster;
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackboneKind {
    #[serde(rename = "small-cnn")]
    SmallCnn,
    #[serde(rename = "resnet50")]
    Resnet50,
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::SmallCnn => "small-cnn",
            BackboneKind::Resnet50 => "resnet50",
        })
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small-cnn" => Ok(BackboneKind::SmallCnn),
            "resnet50" => Ok(BackboneKind::Resnet50),
            other => Err(Error::Parameter(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Fixed transform applied to pixel values before the first convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFilter {
    /// Centered and scaled intensities.
    Raw,
    /// Per-channel difference from the mean of the 4-connected neighbours
    /// (edges replicated). Suppresses scene content and keeps the
    /// interpolation residue left by demosaicing.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub input_filter: InputFilter,
    pub patch_size: usize,
    /// Channel widths of the four small-CNN blocks; ignored by resnet50.
    pub widths: [usize; 4],
    pub feature_dim: usize,
}

impl BackboneConfig {
    pub fn small_cnn() -> Self {
        Self {
            kind: BackboneKind::SmallCnn,
            input_filter: InputFilter::Residual,
            patch_size: 64,
            widths: [16, 32, 64, 64],
            feature_dim: FEATURE_DIM,
        }
    }

    pub fn resnet50() -> Self {
        Self { kind: BackboneKind::Resnet50, input_filter: InputFilter::Raw, ..Self::small_cnn() }
    }

    pub fn for_kind(kind: BackboneKind) -> Self {
        match kind {
            BackboneKind::SmallCnn => Self::small_cnn(),
            BackboneKind::Resnet50 => Self::resnet50(),
        }
    }
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::small_cnn()
    }
}

/// Architecture only; parameters are held by the caller as one flat buffer.
#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    input: Shape,
    layers: Vec<Layer>,
    n_params: usize,
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        let min = match config.kind {
            BackboneKind::SmallCnn => 16,
            BackboneKind::Resnet50 => 32,
        };
        if config.patch_size < min {
            return Err(Error::Parameter(format!("{} needs patches of at least {min} pixels", config.kind)));
        }
        if config.feature_dim == 0 || config.widths.contains(&0) {
            return Err(Error::Parameter("layer widths must be positive".into()));
        }
        let input = Shape::new(3, config.patch_size, config.patch_size);
        let mut b = NetBuilder::new(input);
        let layers = match config.kind {
            BackboneKind::SmallCnn => small_cnn(&mut b, &config),
            BackboneKind::Resnet50 => resnet50(&mut b, config.feature_dim),
        };
        debug_assert_eq!(b.shape(), Shape::new(config.feature_dim, 1, 1));
        Ok(Self { config, input, layers, n_params: b.n_params() })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn kind(&self) -> BackboneKind {
        self.config.kind
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    /// He-normal weights, zero biases; the last layer of every residual
    /// branch starts at zero so each block is initially the identity.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f32> {
        let mut params = vec![0f32; self.n_params];
        visit_params(&self.layers, &mut |layer, zero| {
            let (at, len, fan_in, gain) = match layer {
                Layer::Conv(c) => (c.weight, c.out_c * c.in_c * c.k * c.k, c.in_c * c.k * c.k, 2.0),
                Layer::Dense(d) => (d.weight, d.inputs * d.outputs, d.inputs, 1.0),
                _ => return,
            };
            if zero {
                return;
            }
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[at..at + len] {
                *p = normal.sample(rng) as f32;
            }
        });
        params
    }

    /// Forward pass over `n` packed patches (see [`pack_patches`]); returns a
    /// `feature_dim × n` matrix.
    pub fn forward(&self, params: &[f32], x: Vec<f32>, n: usize, cache: Option<&mut Vec<Cache>>) -> Vec<f32> {
        assert_eq!(params.len(), self.n_params, "parameter buffer does not match backbone");
        assert_eq!(x.len(), self.input.len() * n, "input batch has the wrong size");
        forward_seq(&self.layers, params, x, n, cache)
    }

    /// Accumulates parameter gradients for a `feature_dim × n` output gradient.
    pub fn backward(&self, params: &[f32], cache: &[Cache], dy: Vec<f32>, n: usize, grads: &mut [f32]) {
        backward_seq(&self.layers, params, cache, dy, n, grads, false);
    }
}

fn small_cnn(b: &mut NetBuilder, config: &BackboneConfig) -> Vec<Layer> {
    let [w1, w2, w3, w4] = config.widths;
    vec![
        b.conv(w1, 5, 2, 2),
        b.relu(),
        b.conv(w2, 3, 2, 1),
        b.relu(),
        b.conv(w3, 3, 2, 1),
        b.relu(),
        b.conv(w4, 3, 2, 1),
        b.relu(),
        b.global_avg_pool(),
        b.dense(config.feature_dim),
    ]
}

fn resnet50(b: &mut NetBuilder, feature_dim: usize) -> Vec<Layer> {
    let mut layers = vec![b.conv(64, 7, 2, 3), b.relu(), b.max_pool(3, 2, 1)];
    let stages = [(3, 64, 1), (4, 128, 2), (6, 256, 2), (3, 512, 2)];
    for (blocks, mid, stride) in stages {
        for i in 0..blocks {
            let s = if i == 0 { stride } else { 1 };
            let out = mid * 4;
            let project = s != 1 || b.shape().c != out;
            layers.push(b.residual(
                |b| vec![b.conv(mid, 1, 1, 0), b.relu(), b.conv(mid, 3, s, 1), b.relu(), b.conv(out, 1, 1, 0)],
                |b| if project { vec![b.conv(out, 1, s, 0)] } else { Vec::new() },
            ));
            layers.push(b.relu());
        }
    }
    layers.push(b.global_avg_pool());
    layers.push(b.dense(feature_dim));
    layers
}

/// Packs patches into the `[3][n][H][W]` layout, applying `filter`.
pub fn pack_patches(patches: &[&ImageRaster], size: usize, filter: InputFilter) -> Result<Vec<f32>> {
    let n = patches.len();
    let hw = size * size;
    let mut x = vec![0f32; 3 * n * hw];
    for (i, p) in patches.iter().enumerate() {
        if p.height() != size || p.width() != size {
            return Err(Error::Shape {
                expected: format!("{size}x{size}x3"),
                actual: format!("{}x{}x3", p.height(), p.width()),
            });
        }
        match filter {
            InputFilter::Raw => {
                for (j, px) in p.as_raw().chunks_exact(3).enumerate() {
                    for c in 0..3 {
                        x[(c * n + i) * hw + j] = (px[c] as f32 - 127.5) / 64.0;
                    }
                }
            }
            InputFilter::Residual => {
                let raw = p.as_raw();
                let at = |y: usize, xx: usize, c: usize| raw[(y * size + xx) * 3 + c] as f32;
                for c in 0..3 {
                    let plane = &mut x[(c * n + i) * hw..][..hw];
                    for y in 0..size {
                        let (up, down) = (y.saturating_sub(1), (y + 1).min(size - 1));
                        for xx in 0..size {
                            let (left, right) = (xx.saturating_sub(1), (xx + 1).min(size - 1));
                            let ring = at(up, xx, c) + at(down, xx, c) + at(y, left, c) + at(y, right, c);
                            plane[y * size + xx] = (at(y, xx, c) - 0.25 * ring) / 8.0;
                        }
                    }
                }
            }
        }
    }
    Ok(x)
}
