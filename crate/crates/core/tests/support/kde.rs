//! Brute-force Gaussian kernel-density mode search, independent of any
//! mean-shift iteration.

/// Log of `Σ exp(-‖x - p‖² / 2h²)`.
pub fn log_density(points: &[Vec<f64>], x: &[f64], h: f64) -> f64 {
    let e: Vec<f64> = points
        .iter()
        .map(|p| -p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * h * h))
        .collect();
    let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + e.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Exhaustive lattice search over `[0, 1]^d`, then local refinement; `d ≤ 2`.
pub fn grid_mode(points: &[Vec<f64>], h: f64, cells: usize) -> Vec<f64> {
    let d = points[0].len();
    assert!(d <= 2, "grid search is for one or two dimensions");
    let axis: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
    let mut best = (f64::NEG_INFINITY, vec![0.0; d]);
    let mut visit = |x: Vec<f64>| {
        let v = log_density(points, &x, h);
        if v > best.0 {
            best = (v, x);
        }
    };
    if d == 1 {
        axis.iter().for_each(|&a| visit(vec![a]));
    } else {
        for &a in &axis {
            for &b in &axis {
                visit(vec![a, b]);
            }
        }
    }
    pattern_search(points, h, best.1, 1.0 / cells as f64)
}

/// Compass search: probe ±step along each axis, halve on failure.
pub fn pattern_search(points: &[Vec<f64>], h: f64, mut x: Vec<f64>, mut step: f64) -> Vec<f64> {
    let mut fx = log_density(points, &x, h);
    while step > 1e-7 {
        let mut moved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] += dir * step;
                let fy = log_density(points, &y, h);
                if fy > fx {
                    (x, fx, moved) = (y, fy, true);
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    x
}

/// Highest local mode found by searches started at every point.
pub fn multistart_mode(points: &[Vec<f64>], h: f64) -> Vec<f64> {
    points
        .iter()
        .map(|p| pattern_search(points, h, p.clone(), 0.05))
        .map(|m| (log_density(points, &m, h), m))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one point")
        .1
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
