//! Random convex forgery regions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::{tagged_rng, domain};

/// Side of the square box the forged polygon lives in.
pub const DEFAULT_BOX: usize = 256;

const MIN_POINTS: usize = 8;
const MAX_POINTS: usize = 16;
/// Hulls thinner than this share of the box are redrawn so the region stays a solid blob.
const MIN_AREA_SHARE: f64 = 0.1;

type Point = (f64, f64);

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain); collinear points are dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Marks every pixel whose center lies inside the convex polygon.
///
/// Points are `(x, y)` in pixel units; the pixel at row `y`, column `x` has
/// its center at `(x + 0.5, y + 0.5)`.
pub fn rasterize_convex(poly: &[Point], height: usize, width: usize) -> Mask {
    let mut mask = Mask::new(height, width);
    if poly.len() < 3 {
        return mask;
    }
    for row in 0..height {
        let cy = row as f64 + 0.5;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (ymin, ymax) = (a.1.min(b.1), a.1.max(b.1));
            if cy < ymin || cy > ymax {
                continue;
            }
            if a.1 == b.1 {
                lo = lo.min(a.0.min(b.0));
                hi = hi.max(a.0.max(b.0));
            } else {
                let x = a.0 + (cy - a.1) * (b.0 - a.0) / (b.1 - a.1);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        // Pixel centers x + 0.5 inside [lo, hi].
        let first = (lo - 0.5).ceil().max(0.0) as usize;
        let last = (hi - 0.5).floor();
        if last < 0.0 {
            continue;
        }
        let last = (last as usize).min(width.saturating_sub(1));
        for col in first..=last {
            mask.set(row, col, true);
        }
    }
    mask
}

/// A random convex region inside a `box_size`² box placed uniformly in an `height`×`width` frame.
///
/// The region is the convex hull of 8–16 points drawn uniformly in the box,
/// rasterized by pixel-center sampling. Output is a pure function of the arguments.
pub fn random_convex_mask(height: usize, width: usize, box_size: usize, seed: u64) -> Result<Mask> {
    if box_size == 0 || height < box_size || width < box_size {
        return Err(Error::Parameter(format!(
            "a {box_size}x{box_size} forgery box does not fit in {height}x{width}"
        )));
    }
    let mut rng = tagged_rng(seed, domain::MASK, 0);
    let y0 = rng.random_range(0..=height - box_size);
    let x0 = rng.random_range(0..=width - box_size);
    let side = box_size as f64;
    loop {
        let n = rng.random_range(MIN_POINTS..=MAX_POINTS);
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                (
                    x0 as f64 + rng.random::<f64>() * side,
                    y0 as f64 + rng.random::<f64>() * side,
                )
            })
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() < 3 || polygon_area(&hull) < MIN_AREA_SHARE * side * side {
            continue;
        }
        let mask = rasterize_convex(&hull, height, width);
        if mask.count() > 0 {
            return Ok(mask);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }

    /// Every lattice point exactly on the segment between two true pixels is true.
    fn lattice_convex(mask: &Mask) -> bool {
        let pts: Vec<(i64, i64)> = (0..mask.height())
            .flat_map(|y| (0..mask.width()).map(move |x| (y, x)))
            .filter(|&(y, x)| mask.get(y, x))
            .map(|(y, x)| (y as i64, x as i64))
            .collect();
        // Sampling pairs keeps this quadratic check cheap on large masks.
        let step = (pts.len() / 60).max(1);
        for a in pts.iter().step_by(step) {
            for b in pts.iter().step_by(step) {
                let (dy, dx) = (b.0 - a.0, b.1 - a.1);
                let g = gcd(dy, dx).max(1);
                for t in 0..=g {
                    let (y, x) = (a.0 + dy / g * t, a.1 + dx / g * t);
                    if !mask.get(y as usize, x as usize) {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let hull = convex_hull(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]);
        assert_eq!(hull.len(), 4);
        assert!((polygon_area(&hull) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_box_has_no_placement_freedom() {
        for seed in 0..5 {
            let m = random_convex_mask(256, 256, 256, seed).unwrap();
            assert!(m.count() > 0);
            assert_eq!((m.height(), m.width()), (256, 256));
        }
    }

    #[test]
    fn too_small_frame_rejected() {
        assert!(matches!(random_convex_mask(255, 300, 256, 1), Err(Error::Parameter(_))));
        assert!(random_convex_mask(300, 100, 256, 1).is_err());
    }

    #[test]
    fn same_seed_same_mask() {
        let a = random_convex_mask(400, 500, 256, 99).unwrap();
        let b = random_convex_mask(400, 500, 256, 99).unwrap();
        let c = random_convex_mask(400, 500, 256, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rasterized_triangle_matches_center_rule() {
        let tri = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)];
        let m = rasterize_convex(&tri, 5, 5);
        for y in 0..5 {
            for x in 0..5 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(m.get(y, x), cx + cy <= 4.0, "({y},{x})");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn masks_are_convex_and_boxed(seed: u64, h in 256usize..420, w in 256usize..420) {
            let m = random_convex_mask(h, w, 64, seed).unwrap();
            let (y0, x0, y1, x1) = m.bounding_box().unwrap();
            prop_assert!(y1 - y0 < 64 && x1 - x0 < 64);
            prop_assert!(lattice_convex(&m));
            // Each row of a convex region is a single run.
            for y in 0..m.height() {
                let row: Vec<usize> = (0..m.width()).filter(|&x| m.get(y, x)).collect();
                if let (Some(a), Some(b)) = (row.first(), row.last()) {
                    prop_assert_eq!(b - a + 1, row.len());
                }
            }
        }
    }
}
