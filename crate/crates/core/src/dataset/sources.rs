//! Procedural source scenes standing in for camera captures.
//!
//! A scene is a smooth colored backdrop, a layer of random flat and shaded
//! shapes, mid-frequency texture and per-pixel sensor noise. Passing it through
//! [`simulate_camera`](crate::colorops::simulate_camera) yields an image with
//! genuine demosaicing structure.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::colorops::{hsv_to_rgb, ImageRaster};
use crate::error::Result;
use crate::rng::{domain, tagged_rng, StreamRng};

#[derive(Clone, Debug)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    /// Standard deviation of additive per-channel noise, in 8-bit levels.
    pub noise_sigma: f64,
    pub shapes: (usize, usize),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            height: 768,
            width: 1024,
            noise_sigma: 3.0,
            shapes: (12, 28),
        }
    }
}

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, cos: f64, sin: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn random(rng: &mut StreamRng, h: f64, w: f64) -> Self {
        let cy = rng.random::<f64>() * h;
        let cx = rng.random::<f64>() * w;
        let scale = h.min(w);
        let ry = scale * (0.03 + 0.22 * rng.random::<f64>());
        let rx = scale * (0.03 + 0.22 * rng.random::<f64>());
        let theta = rng.random::<f64>() * std::f64::consts::PI;
        let (sin, cos) = theta.sin_cos();
        if rng.random_bool(0.5) {
            Shape::Ellipse { cy, cx, ry, rx, cos, sin }
        } else {
            Shape::Rect { cy, cx, hy: ry, hx: rx, cos, sin }
        }
    }

    /// Local coordinates (u, v) normalized so the boundary sits at 1, or None when outside.
    fn local(&self, y: f64, x: f64) -> Option<(f64, f64)> {
        let (cy, cx, ry, rx, cos, sin, ellipse) = match *self {
            Shape::Ellipse { cy, cx, ry, rx, cos, sin } => (cy, cx, ry, rx, cos, sin, true),
            Shape::Rect { cy, cx, hy, hx, cos, sin } => (cy, cx, hy, hx, cos, sin, false),
        };
        let (dy, dx) = (y - cy, x - cx);
        let u = (dx * cos + dy * sin) / rx;
        let v = (-dx * sin + dy * cos) / ry;
        let inside = if ellipse { u * u + v * v <= 1.0 } else { u.abs() <= 1.0 && v.abs() <= 1.0 };
        inside.then_some((u, v))
    }

    fn bbox(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let (cy, cx, r) = match *self {
            Shape::Ellipse { cy, cx, ry, rx, .. } => (cy, cx, ry.max(rx)),
            Shape::Rect { cy, cx, hy, hx, .. } => (cy, cx, (hy * hy + hx * hx).sqrt()),
        };
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(h);
        let x1 = ((cx + r).ceil() as usize).min(w);
        (y0, x0, y1, x1)
    }
}

fn random_color(rng: &mut StreamRng) -> [f64; 3] {
    let h = rng.random::<f64>() * 360.0;
    let s = 0.25 + 0.75 * rng.random::<f64>();
    let v = 70.0 + 170.0 * rng.random::<f64>();
    let c = hsv_to_rgb(h, s, v);
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

/// Smooth value noise: bilinear interpolation of a random lattice with `cell`-pixel spacing.
struct ValueNoise {
    lattice: Vec<f64>,
    cols: usize,
    cell: f64,
}

impl ValueNoise {
    fn new(rng: &mut StreamRng, h: usize, w: usize, cell: f64) -> Self {
        let rows = (h as f64 / cell).ceil() as usize + 2;
        let cols = (w as f64 / cell).ceil() as usize + 2;
        let lattice = (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        Self { lattice, cols, cell }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        let (fy, fx) = (y / self.cell, x / self.cell);
        let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (ty, tx) = (smooth(fy - iy as f64), smooth(fx - ix as f64));
        let v = |r: usize, c: usize| self.lattice[r * self.cols + c];
        let top = v(iy, ix) * (1.0 - tx) + v(iy, ix + 1) * tx;
        let bottom = v(iy + 1, ix) * (1.0 - tx) + v(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Renders the `index`-th scene of the family identified by `seed`.
pub fn synthetic_scene(params: &SceneParams, seed: u64, index: u64) -> Result<ImageRaster> {
    let (h, w) = (params.height, params.width);
    let mut rng = tagged_rng(seed, domain::SCENE, index);
    let mut canvas = vec![[0f64; 3]; h * w];

    // Backdrop: a coarse grid of colors blended smoothly.
    let grid_rows = 3 + rng.random_range(0..3);
    let grid_cols = 3 + rng.random_range(0..4);
    let palette: Vec<[f64; 3]> = (0..(grid_rows + 1) * (grid_cols + 1)).map(|_| random_color(&mut rng)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..h {
        let fy = y as f64 / h as f64 * grid_rows as f64;
        let iy = (fy.floor() as usize).min(grid_rows - 1);
        let ty = smooth(fy - iy as f64);
        for x in 0..w {
            let fx = x as f64 / w as f64 * grid_cols as f64;
            let ix = (fx.floor() as usize).min(grid_cols - 1);
            let tx = smooth(fx - ix as f64);
            let p = |r: usize, c: usize| palette[r * (grid_cols + 1) + c];
            let px = &mut canvas[y * w + x];
            for ch in 0..3 {
                let top = p(iy, ix)[ch] * (1.0 - tx) + p(iy, ix + 1)[ch] * tx;
                let bottom = p(iy + 1, ix)[ch] * (1.0 - tx) + p(iy + 1, ix + 1)[ch] * tx;
                px[ch] = top * (1.0 - ty) + bottom * ty;
            }
        }
    }

    // Shapes, painted back to front; some carry a linear shading ramp.
    let n_shapes = rng.random_range(params.shapes.0..=params.shapes.1.max(params.shapes.0));
    for _ in 0..n_shapes {
        let shape = Shape::random(&mut rng, h as f64, w as f64);
        let color = random_color(&mut rng);
        let shade = if rng.random_bool(0.5) { 0.35 * rng.random::<f64>() } else { 0.0 };
        let (y0, x0, y1, x1) = shape.bbox(h, w);
        for y in y0..y1 {
            for x in x0..x1 {
                if let Some((u, _)) = shape.local(y as f64 + 0.5, x as f64 + 0.5) {
                    let k = 1.0 + shade * u;
                    canvas[y * w + x] = [color[0] * k, color[1] * k, color[2] * k];
                }
            }
        }
    }

    // Texture: two octaves of value noise modulating brightness.
    let coarse = ValueNoise::new(&mut rng, h, w, 24.0);
    let fine = ValueNoise::new(&mut rng, h, w, 5.0);
    let strength = 0.08 + 0.12 * rng.random::<f64>();
    let noise = Normal::new(0.0, params.noise_sigma.max(1e-9)).expect("valid sigma");
    let mut out = ImageRaster::new(h, w)?;
    for y in 0..h {
        for x in 0..w {
            let t = 1.0 + strength * (0.6 * coarse.at(y as f64, x as f64) + 0.4 * fine.at(y as f64, x as f64));
            let c = canvas[y * w + x];
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let n = if params.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                px[ch] = (c[ch] * t + n).round().clamp(0.0, 255.0) as u8;
            }
            out.set(y, x, px);
        }
    }
    Ok(out)
}
