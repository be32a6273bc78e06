//! Mean-shift fusion of per-anchor maps into one map.
//!
//! Each map is a point in `R^D` (`D` = grid cells). An anchor's own cell is
//! treated as missing: distances use only the cells both sides observe,
//! rescaled to the full dimension, and each coordinate of the update averages
//! only the maps that observe it. Updates are taken in delta form, so a point
//! that already coincides with every map stays bit-identical.

use serde::{Deserialize, Serialize};

use super::maps::InconsistencyMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftParams {
    /// Gaussian kernel width; `None` picks it from the data (see [`default_bandwidth`]).
    pub bandwidth: Option<f64>,
    /// Stop once the step length falls to `tol` times the current point's norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self { bandwidth: None, tol: 1e-4, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub map: InconsistencyMap,
    pub bandwidth: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MIN_BANDWIDTH: f64 = 1e-6;

fn check(maps: &[InconsistencyMap]) -> Result<(usize, usize)> {
    let first = maps.first().ok_or_else(|| Error::Parameter("no maps to fuse".into()))?;
    if let Some(m) = maps.iter().find(|m| m.rows != first.rows || m.cols != first.cols) {
        return Err(Error::Shape {
            expected: format!("{}x{}", first.rows, first.cols),
            actual: format!("{}x{}", m.rows, m.cols),
        });
    }
    Ok((first.rows, first.cols))
}

/// Squared distance between a full point and a map over the map's observed cells,
/// rescaled to all `D` cells.
fn sq_dist_to(point: &[f64], map: &InconsistencyMap) -> f64 {
    let d = point.len();
    let mut acc = 0.0;
    for (k, (&p, &v)) in point.iter().zip(&map.values).enumerate() {
        if map.observed(k) {
            acc += (p - v) * (p - v);
        }
    }
    let seen = d - usize::from(map.anchor.is_some_and(|a| a < d));
    if seen == 0 {
        0.0
    } else {
        acc * d as f64 / seen as f64
    }
}

fn sq_dist_between(a: &InconsistencyMap, b: &InconsistencyMap) -> f64 {
    let d = a.len();
    let (mut acc, mut seen) = (0.0, 0usize);
    for k in 0..d {
        if a.observed(k) && b.observed(k) {
            acc += (a.values[k] - b.values[k]).powi(2);
            seen += 1;
        }
    }
    if seen == 0 {
        0.0
    } else {
        acc * d as f64 / seen as f64
    }
}

/// Half the median pairwise distance between maps, floored at 1e-6.
pub fn default_bandwidth(maps: &[InconsistencyMap]) -> Result<f64> {
    check(maps)?;
    let n = maps.len();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist_between(&maps[i], &maps[j]).sqrt());
        }
    }
    if d.is_empty() {
        return Ok(MIN_BANDWIDTH);
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    Ok((median / 2.0).max(MIN_BANDWIDTH))
}

/// Coordinate-wise mean over the maps observing each cell; a cell nobody
/// observes takes the first map's value there.
fn observed_mean(maps: &[InconsistencyMap]) -> Vec<f64> {
    let d = maps[0].len();
    (0..d)
        .map(|k| {
            let (mut mean, mut count) = (0.0, 0usize);
            for m in maps.iter().filter(|m| m.observed(k)) {
                count += 1;
                mean += (m.values[k] - mean) / count as f64;
            }
            if count == 0 {
                maps[0].values[k]
            } else {
                mean
            }
        })
        .collect()
}

/// Fuses maps by Gaussian mean shift started at their coordinate-wise mean.
pub fn fuse_mean_shift(maps: &[InconsistencyMap], params: &MeanShiftParams) -> Result<Fusion> {
    let (rows, cols) = check(maps)?;
    if !(params.tol >= 0.0) {
        return Err(Error::Parameter("tolerance must be non-negative".into()));
    }
    let h = match params.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::Parameter(format!("bandwidth {h} must be positive"))),
        None => default_bandwidth(maps)?,
    };
    let d = rows * cols;
    let mut point = observed_mean(maps);
    let mut iterations = 0;
    let mut converged = false;
    let mut logw = vec![0f64; maps.len()];
    while iterations < params.max_iter {
        for (lw, m) in logw.iter_mut().zip(maps) {
            *lw = -sq_dist_to(&point, m) / (2.0 * h * h);
        }
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let mut step = vec![0f64; d];
        for (k, s) in step.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for (m, &wm) in maps.iter().zip(&w) {
                if m.observed(k) {
                    num += wm * (m.values[k] - point[k]);
                    den += wm;
                }
            }
            if den > 0.0 {
                *s = num / den;
            }
        }
        iterations += 1;
        let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        for (p, s) in point.iter_mut().zip(&step) {
            *p += s;
        }
        let norm = point.iter().map(|p| p * p).sum::<f64>().sqrt();
        if step_norm <= params.tol * norm {
            converged = true;
            break;
        }
    }
    for p in &mut point {
        *p = p.clamp(0.0, 1.0);
    }
    Ok(Fusion { map: InconsistencyMap::new(rows, cols, point, None)?, bandwidth: h, iterations, converged })
}
