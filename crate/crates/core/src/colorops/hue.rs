//! Hexcone HSV conversion and hue rotation.
//!
//! Conversions run in `f64` on the 0..=255 scale; results are re-quantized
//! with round-half-away-from-zero (`f64::round`).

use serde::{Deserialize, Serialize};

use super::ImageRaster;

/// A hue rotation in whole degrees, normalized to `[0, 360)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HueAngle(u16);

impl HueAngle {
    pub const ZERO: HueAngle = HueAngle(0);

    /// Wraps any integer angle onto the circle.
    pub fn new(degrees: i64) -> Self {
        HueAngle(degrees.rem_euclid(360) as u16)
    }

    #[inline]
    pub fn degrees(self) -> u16 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// The rotation that undoes this one.
    pub fn inverse(self) -> Self {
        HueAngle::new(-(self.0 as i64))
    }

    pub fn add(self, other: HueAngle) -> Self {
        HueAngle::new(self.0 as i64 + other.0 as i64)
    }
}

impl std::fmt::Display for HueAngle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// RGB on the 0..=255 scale to (hue in degrees, saturation in [0,1], value in 0..=255).
#[inline]
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = rgb[0] as f64;
    let g = rgb[1] as f64;
    let b = rgb[2] as f64;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, v)
}

/// Inverse of [`rgb_to_hsv`], quantized back to 8 bits.
#[inline]
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [quantize(r + m), quantize(g + m), quantize(b + m)]
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Rotates the hue of one pixel. A zero rotation returns the input untouched.
#[inline]
pub fn rotate_pixel(rgb: [u8; 3], angle: HueAngle) -> [u8; 3] {
    if angle.is_zero() {
        return rgb;
    }
    let (h, s, v) = rgb_to_hsv(rgb);
    hsv_to_rgb(h + angle.degrees() as f64, s, v)
}

/// Shifts the hue of every pixel by `angle`, keeping saturation and value.
pub fn hue_rotate(img: &ImageRaster, angle: HueAngle) -> ImageRaster {
    let mut out = img.clone();
    if angle.is_zero() {
        return out;
    }
    for px in out.pixels_mut() {
        let rotated = rotate_pixel([px[0], px[1], px[2]], angle);
        px.copy_from_slice(&rotated);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn red_to_green_at_120() {
        let img = ImageRaster::filled(1, 1, [255, 0, 0]).unwrap();
        assert_eq!(hue_rotate(&img, HueAngle::new(120)).get(0, 0), [0, 255, 0]);
        assert_eq!(rotate_pixel([0, 255, 0], HueAngle::new(120)), [0, 0, 255]);
        assert_eq!(rotate_pixel([0, 0, 255], HueAngle::new(120)), [255, 0, 0]);
    }

    #[test]
    fn zero_is_identity() {
        let img = ImageRaster::from_fn(9, 9, |y, x| [(y * 29) as u8, (x * 27) as u8, (x * y) as u8]).unwrap();
        assert_eq!(hue_rotate(&img, HueAngle::ZERO), img);
        assert_eq!(hue_rotate(&img, HueAngle::new(360)), img);
    }

    #[test]
    fn angle_wraps() {
        assert_eq!(HueAngle::new(-30).degrees(), 330);
        assert_eq!(HueAngle::new(750).degrees(), 30);
        assert_eq!(HueAngle::new(90).inverse().degrees(), 270);
        assert_eq!(HueAngle::ZERO.inverse(), HueAngle::ZERO);
    }

    #[test]
    fn grays_are_fixed_points() {
        for v in [0u8, 1, 77, 254, 255] {
            assert_eq!(rotate_pixel([v, v, v], HueAngle::new(150)), [v, v, v]);
        }
    }

    #[test]
    fn preserves_max_and_min_channel() {
        let px = [200u8, 90, 30];
        for a in (0..360).step_by(15) {
            let out = rotate_pixel(px, HueAngle::new(a));
            assert_eq!(*out.iter().max().unwrap(), 200);
            assert_eq!(*out.iter().min().unwrap(), 30);
        }
    }

    proptest! {
        #[test]
        fn periodic_within_one_lsb(r: u8, g: u8, b: u8, step in 1i64..12) {
            let a = HueAngle::new(step * 30);
            let back = rotate_pixel(rotate_pixel([r, g, b], a), a.inverse());
            for c in 0..3 {
                prop_assert!(back[c].abs_diff([r, g, b][c]) <= 1);
            }
        }
    }
}
