use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::maps::InconsistencyMap;
use crate::dataset::PatchGrid;
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Full-resolution forgery evidence in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

const RAW_MAGIC: &[u8; 8] = b"HMAPF32\0";

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Shape { expected: format!("{height}x{width} values"), actual: values.len().to_string() });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("heatmap value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Result<Self> {
        Self::new(height, width, vec![v; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `1 - v` everywhere.
    pub fn inverted(&self) -> Self {
        Self { values: self.values.iter().map(|v| 1.0 - v).collect(), ..*self }
    }

    /// Header `HMAPF32\0`, `u32` height, `u32` width, then values as little-endian `f32`.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Codec(format!("raw heatmap: {m}"));
        if bytes.len() < 16 || &bytes[..8] != RAW_MAGIC {
            return Err(bad("missing header"));
        }
        let h = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let w = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        if bytes.len() - 16 != 4 * h * w {
            return Err(bad("payload length does not match the header"));
        }
        let values = bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Self::new(h, w, values)
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_raw_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        Self::from_raw_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// 8-bit grayscale rendering, `round(255 v)`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(y as usize, x as usize) * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray().save(path).map_err(|e| Error::Codec(format!("{}: {e}", path.display())))
    }
}

/// Bilinear resampling of a grid map to image size.
///
/// Cell `(i, j)` sits at the center pixel of patch `(i, j)`; pixels beyond the
/// outermost centers take the nearest cell's value.
pub fn upsample_heatmap(map: &InconsistencyMap, grid: &PatchGrid) -> Result<Heatmap> {
    if map.rows != grid.rows || map.cols != grid.cols {
        return Err(Error::Shape {
            expected: format!("{}x{} map", grid.rows, grid.cols),
            actual: format!("{}x{}", map.rows, map.cols),
        });
    }
    let (c0y, c0x) = grid.center(0);
    let s = grid.stride as f64;
    // Fractional cell coordinate and interpolation weights along one axis.
    let axis = |p: usize, c0: usize, cells: usize| -> (usize, usize, f64) {
        let t = ((p as f64 - c0 as f64) / s).clamp(0.0, (cells - 1) as f64);
        let i0 = (t.floor() as usize).min(cells - 1);
        let i1 = (i0 + 1).min(cells - 1);
        (i0, i1, t - i0 as f64)
    };
    let xs: Vec<_> = (0..grid.image_width).map(|x| axis(x, c0x, grid.cols)).collect();
    let mut values = Vec::with_capacity(grid.image_height * grid.image_width);
    for y in 0..grid.image_height {
        let (i0, i1, fy) = axis(y, c0y, grid.rows);
        for &(j0, j1, fx) in &xs {
            let top = map.get(i0, j0) + fx * (map.get(i0, j1) - map.get(i0, j0));
            let bottom = map.get(i1, j0) + fx * (map.get(i1, j1) - map.get(i1, j0));
            let v = top + fy * (bottom - top);
            values.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Heatmap::new(grid.image_height, grid.image_width, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub mu: f64,
    pub sigma: f64,
    /// `mu + z·sigma` before the floor is applied.
    pub t: f64,
    pub tau: f64,
}

/// Upper `tail` quantile of the standard normal.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - tail)
}

/// Threshold from a Gaussian fitted to `values` (population moments), so
/// that the upper `tail` mass is marked; never below `floor`.
pub fn gaussian_tail_threshold_values(values: &[f32], tail: f64, floor: f64) -> Result<ThresholdFit> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Parameter(format!("tail mass {tail} outside (0, 1)")));
    }
    if values.is_empty() {
        return Err(Error::Parameter("no values to fit".into()));
    }
    let n = values.len() as f64;
    let mu = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sigma = (values.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / n).sqrt();
    Ok(fit_from_moments(mu, sigma, tail, floor))
}

pub fn fit_from_moments(mu: f64, sigma: f64, tail: f64, floor: f64) -> ThresholdFit {
    if sigma <= 0.0 {
        return ThresholdFit { mu, sigma, t: mu, tau: floor };
    }
    let t = mu + normal_upper_quantile(tail) * sigma;
    ThresholdFit { mu, sigma, t, tau: t.max(floor) }
}

pub fn gaussian_tail_threshold(heatmap: &Heatmap, tail: f64, floor: f64) -> Result<ThresholdFit> {
    gaussian_tail_threshold_values(heatmap.values(), tail, floor)
}

/// A decision mask with the threshold that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    pub mask: Mask,
    pub tau: f64,
}

/// Marks pixels strictly above `tau`.
pub fn binarize(heatmap: &Heatmap, tau: f64) -> BinaryMask {
    let data = heatmap.values().iter().map(|&v| v as f64 > tau).collect();
    let mask = Mask::from_vec(heatmap.height(), heatmap.width(), data).expect("sizes match");
    BinaryMask { mask, tau }
}
