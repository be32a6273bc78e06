//! CFA-consistency baseline.
//!
//! Bilinear demosaicing leaves every interpolated green strictly between the
//! recorded greens it was averaged from, while recorded greens carry
//! independent noise. Counting pixels that fall outside the range of their
//! four nearest recorded greens therefore gives a large
//! recorded-to-interpolated ratio on intact data. A hue rotation mixes the
//! channels and breaks this, and undoing the right rotation restores it. Each
//! window is scored at every candidate angle, and a window whose best angle is
//! not a pristine one votes forged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorops::{hsv_to_rgb, rgb_to_hsv, CfaPattern, HueAngle, ImageRaster};
use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiConfig {
    pub window: usize,
    pub stride: usize,
    pub angle_step: u16,
    pub cfa: CfaPattern,
    /// Estimates in this set count as unmodified.
    pub pristine_angles: Vec<u16>,
}

impl Default for ChoiConfig {
    fn default() -> Self {
        Self { window: 35, stride: 17, angle_step: 8, cfa: CfaPattern::GBRG, pristine_angles: vec![0, 352] }
    }
}

impl ChoiConfig {
    /// Candidates `0, step, 2·step, …` below 360.
    pub fn angles(&self) -> Vec<HueAngle> {
        (0..360).step_by(self.angle_step.max(1) as usize).map(|d| HueAngle::new(d as i64)).collect()
    }

    pub fn is_pristine(&self, angle: HueAngle) -> bool {
        self.pristine_angles.contains(&angle.degrees())
    }

    fn validate(&self) -> Result<()> {
        if self.window < 3 || self.stride == 0 || self.angle_step == 0 {
            return Err(Error::Parameter("window must be at least 3 and stride, angle step positive".into()));
        }
        let g = |y, x| self.cfa.is_green(y, x);
        if g(0, 0) == g(0, 1) || g(0, 0) != g(1, 1) {
            return Err(Error::Parameter(format!("{} does not place greens on a quincunx", self.cfa)));
        }
        Ok(())
    }
}

/// Violating pixels split by whether green was recorded there.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ViolationCounts {
    pub recorded: u64,
    pub interpolated: u64,
}

impl ViolationCounts {
    /// `recorded / interpolated`, or `recorded + 1` when nothing interpolated violates.
    pub fn ratio(&self) -> f64 {
        if self.interpolated == 0 {
            (self.recorded + 1) as f64
        } else {
            self.recorded as f64 / self.interpolated as f64
        }
    }
}

/// Whether pixel `(y, x)` of a `w`-wide plane lies outside the open range of
/// its four nearest recorded greens: the diagonal ones at recorded sites and
/// the 4-connected ones at interpolated sites. Requires an interior pixel.
#[inline]
fn violates(g: &[u8], w: usize, y: usize, x: usize, recorded: bool) -> bool {
    let at = |yy: usize, xx: usize| g[yy * w + xx];
    let n = if recorded {
        [at(y - 1, x - 1), at(y - 1, x + 1), at(y + 1, x - 1), at(y + 1, x + 1)]
    } else {
        [at(y - 1, x), at(y + 1, x), at(y, x - 1), at(y, x + 1)]
    };
    let lo = n.iter().min().expect("four neighbours");
    let hi = n.iter().max().expect("four neighbours");
    let v = at(y, x);
    !(*lo < v && v < *hi)
}

/// Counts violations over the interior of an `h × w` green plane whose
/// top-left pixel has CFA phase `pattern`.
pub fn violation_counts(green: &[u8], h: usize, w: usize, pattern: CfaPattern) -> Result<ViolationCounts> {
    if h < 3 || w < 3 {
        return Err(Error::Dimension(format!("window {h}x{w} is smaller than 3x3")));
    }
    if green.len() != h * w {
        return Err(Error::Shape { expected: format!("{h}x{w} values"), actual: green.len().to_string() });
    }
    let mut c = ViolationCounts::default();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let rec = pattern.is_green(y, x);
            if violates(green, w, y, x, rec) {
                if rec {
                    c.recorded += 1;
                } else {
                    c.interpolated += 1;
                }
            }
        }
    }
    Ok(c)
}

pub fn violation_ratio(green: &[u8], h: usize, w: usize, pattern: CfaPattern) -> Result<f64> {
    Ok(violation_counts(green, h, w, pattern)?.ratio())
}

/// Green channel of every pixel after rotating its hue by `shift`, from
/// precomputed HSV triples. A zero shift returns the stored green untouched.
fn rotated_green(hsv: &[(f64, f64, f64)], original: &[u8], shift: HueAngle) -> Vec<u8> {
    if shift.is_zero() {
        return original.to_vec();
    }
    let d = shift.degrees() as f64;
    hsv.iter().map(|&(h, s, v)| hsv_to_rgb(h + d, s, v)[1]).collect()
}

/// Angle whose inverse rotation best restores the demosaicing structure of
/// `window`; ties go to the smaller angle. `pattern` is the CFA phase at the
/// window's top-left pixel.
pub fn estimate_angle(window: &ImageRaster, pattern: CfaPattern, config: &ChoiConfig) -> Result<HueAngle> {
    config.validate()?;
    if window.height() < config.window || window.width() < config.window {
        return Err(Error::Dimension(format!(
            "window {}x{} is smaller than {}",
            window.height(),
            window.width(),
            config.window
        )));
    }
    let (h, w) = (window.height(), window.width());
    let hsv: Vec<_> = window.pixels().map(rgb_to_hsv).collect();
    let green: Vec<u8> = window.pixels().map(|p| p[1]).collect();
    let mut best = (f64::NEG_INFINITY, HueAngle::ZERO);
    for beta in config.angles() {
        let g = rotated_green(&hsv, &green, beta.inverse());
        let r = violation_ratio(&g, h, w, pattern)?;
        if r > best.0 {
            best = (r, beta);
        }
    }
    Ok(best.1)
}

/// Window origins along one axis: every `stride`, plus one flush with the far edge.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len < window {
        return Vec::new();
    }
    let mut v: Vec<usize> = (0..=len - window).step_by(stride).collect();
    if *v.last().expect("non-empty") != len - window {
        v.push(len - window);
    }
    v
}

/// Per-window outcome of the angle search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub y: usize,
    pub x: usize,
    pub angle: HueAngle,
    pub ratio: f64,
    pub forged: bool,
}

#[derive(Clone, Debug)]
pub struct ChoiResult {
    pub mask: Mask,
    pub windows: Vec<WindowEstimate>,
}

/// Summed-area table over per-pixel flags, `(h+1) × (w+1)`.
fn integral(flags: &[bool], h: usize, w: usize) -> Vec<u32> {
    let mut s = vec![0u32; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += u32::from(flags[y * w + x]);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[u32], w: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> u64 {
    let at = |y: usize, x: usize| s[y * (w + 1) + x] as i64;
    (at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0)) as u64
}

/// Sliding-window localization with per-pixel majority vote.
///
/// Produces the same per-window estimates as calling [`estimate_angle`] on
/// each window, computed image-wide: a pixel's violation flag depends only on
/// its own neighbourhood, so flags are evaluated once per candidate angle and
/// summed per window.
pub fn choi_localize(img: &ImageRaster, config: &ChoiConfig) -> Result<ChoiResult> {
    config.validate()?;
    let (h, w) = (img.height(), img.width());
    if h < config.window || w < config.window {
        return Err(Error::Dimension(format!("image {h}x{w} is smaller than the {} window", config.window)));
    }
    let ys = window_starts(h, config.window, config.stride);
    let xs = window_starts(w, config.window, config.stride);
    let hsv: Vec<_> = img.pixels().map(rgb_to_hsv).collect();
    let green: Vec<u8> = img.pixels().map(|p| p[1]).collect();
    let recorded: Vec<bool> = (0..h * w).map(|i| config.cfa.is_green(i / w, i % w)).collect();
    let n_win = ys.len() * xs.len();
    let win = config.window;

    let per_angle: Vec<Vec<ViolationCounts>> = config
        .angles()
        .into_par_iter()
        .map(|beta| {
            let g = rotated_green(&hsv, &green, beta.inverse());
            let mut rec_flags = vec![false; h * w];
            let mut int_flags = vec![false; h * w];
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let i = y * w + x;
                    if violates(&g, w, y, x, recorded[i]) {
                        if recorded[i] {
                            rec_flags[i] = true;
                        } else {
                            int_flags[i] = true;
                        }
                    }
                }
            }
            let (sr, si) = (integral(&rec_flags, h, w), integral(&int_flags, h, w));
            let mut out = Vec::with_capacity(n_win);
            for &y in &ys {
                for &x in &xs {
                    let (y0, x0, y1, x1) = (y + 1, x + 1, y + win - 1, x + win - 1);
                    out.push(ViolationCounts {
                        recorded: box_sum(&sr, w, y0, x0, y1, x1),
                        interpolated: box_sum(&si, w, y0, x0, y1, x1),
                    });
                }
            }
            out
        })
        .collect();

    let angles = config.angles();
    let mut windows = Vec::with_capacity(n_win);
    let mut votes = vec![0i32; (h + 1) * (w + 1)];
    let mut cover = vec![0i32; (h + 1) * (w + 1)];
    for (wi, (y, x)) in ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).enumerate() {
        let mut best = (f64::NEG_INFINITY, HueAngle::ZERO);
        for (a, counts) in angles.iter().zip(&per_angle) {
            let r = counts[wi].ratio();
            if r > best.0 {
                best = (r, *a);
            }
        }
        let forged = !config.is_pristine(best.1);
        windows.push(WindowEstimate { y, x, angle: best.1, ratio: best.0, forged });
        // 2D difference arrays for coverage and forged votes.
        for (arr, add) in [(&mut cover, 1), (&mut votes, i32::from(forged))] {
            if add == 0 {
                continue;
            }
            arr[y * (w + 1) + x] += add;
            arr[y * (w + 1) + x + win] -= add;
            arr[(y + win) * (w + 1) + x] -= add;
            arr[(y + win) * (w + 1) + x + win] += add;
        }
    }
    for arr in [&mut cover, &mut votes] {
        for y in 0..=h {
            for x in 1..=w {
                arr[y * (w + 1) + x] += arr[y * (w + 1) + x - 1];
            }
        }
        for y in 1..=h {
            for x in 0..=w {
                arr[y * (w + 1) + x] += arr[(y - 1) * (w + 1) + x];
            }
        }
    }
    let mask = Mask::from_fn(h, w, |y, x| 2 * votes[y * (w + 1) + x] > cover[y * (w + 1) + x]);
    Ok(ChoiResult { mask, windows })
}
