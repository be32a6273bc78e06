//! Bayer color filter array simulation: mosaicing and bilinear demosaicing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ImageRaster;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

impl Channel {
    pub fn index(self) -> usize {
        self as usize
    }

    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'R' => Some(Channel::R),
            'G' => Some(Channel::G),
            'B' => Some(Channel::B),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Channel::R => 'R',
            Channel::G => 'G',
            Channel::B => 'B',
        }
    }
}

/// A 2×2 Bayer tile, listed row-major: `[[top-left, top-right], [bottom-left, bottom-right]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CfaPattern {
    layout: [[Channel; 2]; 2],
}

impl CfaPattern {
    pub const GBRG: CfaPattern = CfaPattern {
        layout: [[Channel::G, Channel::B], [Channel::R, Channel::G]],
    };
    pub const RGGB: CfaPattern = CfaPattern {
        layout: [[Channel::R, Channel::G], [Channel::G, Channel::B]],
    };
    pub const GRBG: CfaPattern = CfaPattern {
        layout: [[Channel::G, Channel::R], [Channel::B, Channel::G]],
    };
    pub const BGGR: CfaPattern = CfaPattern {
        layout: [[Channel::B, Channel::G], [Channel::G, Channel::R]],
    };

    /// Builds a pattern, checking it has two greens, one red and one blue.
    pub fn new(layout: [[Channel; 2]; 2]) -> Result<Self> {
        let count = |c: Channel| layout.iter().flatten().filter(|&&x| x == c).count();
        if count(Channel::G) != 2 || count(Channel::R) != 1 || count(Channel::B) != 1 {
            return Err(Error::Parameter(format!(
                "CFA layout must hold two G, one R and one B cell, got {layout:?}"
            )));
        }
        Ok(Self { layout })
    }

    #[inline]
    pub fn channel_at(&self, y: usize, x: usize) -> Channel {
        self.layout[y & 1][x & 1]
    }

    #[inline]
    pub fn is_green(&self, y: usize, x: usize) -> bool {
        self.channel_at(y, x) == Channel::G
    }

    /// Pattern seen by a window whose origin sits at (`y0`, `x0`) of the full frame.
    pub fn shifted(&self, y0: usize, x0: usize) -> Self {
        let mut layout = self.layout;
        for (dy, row) in layout.iter_mut().enumerate() {
            for (dx, cell) in row.iter_mut().enumerate() {
                *cell = self.channel_at(y0 + dy, x0 + dx);
            }
        }
        Self { layout }
    }
}

impl Default for CfaPattern {
    fn default() -> Self {
        CfaPattern::GBRG
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.layout.iter().flatten() {
            write!(f, "{}", c.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<Channel> = s.chars().filter_map(Channel::from_char).collect();
        if chars.len() != 4 || s.chars().count() != 4 {
            return Err(Error::Parameter(format!("not a 2x2 CFA pattern: {s:?}")));
        }
        CfaPattern::new([[chars[0], chars[1]], [chars[2], chars[3]]])
    }
}

impl Serialize for CfaPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CfaPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Single-channel sensor readout; the channel recorded at each pixel follows `pattern`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mosaic {
    height: usize,
    width: usize,
    pattern: CfaPattern,
    data: Vec<u8>,
}

impl Mosaic {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn channel_at(&self, y: usize, x: usize) -> Channel {
        self.pattern.channel_at(y, x)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }
}

/// Keeps, at every pixel, only the channel the tiled pattern records there.
pub fn cfa_mosaic(img: &ImageRaster, pattern: CfaPattern) -> Result<Mosaic> {
    let (h, w) = (img.height(), img.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!(
            "CFA mosaicing needs even dimensions, got {h}x{w}"
        )));
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(y, x)[pattern.channel_at(y, x).index()]);
        }
    }
    Ok(Mosaic {
        height: h,
        width: w,
        pattern,
        data,
    })
}

const CROSS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const DIAGONAL: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Bilinear demosaicing.
///
/// Recorded samples are copied. A missing channel is the rounded mean of the
/// 4-connected neighbours recording it, or of the diagonal neighbours when no
/// 4-connected one does (red at blue sites and vice versa). Border pixels use
/// only the neighbours that exist.
pub fn demosaic_bilinear(mosaic: &Mosaic) -> ImageRaster {
    let (h, w) = (mosaic.height, mosaic.width);
    let mut out = ImageRaster::new(h, w).expect("mosaic is non-empty");
    let pattern = mosaic.pattern;
    for y in 0..h {
        for x in 0..w {
            let here = pattern.channel_at(y, x);
            let mut px = [0u8; 3];
            for c in [Channel::R, Channel::G, Channel::B] {
                px[c.index()] = if c == here {
                    mosaic.get(y, x)
                } else {
                    neighbour_mean(mosaic, y, x, c, &CROSS)
                        .or_else(|| neighbour_mean(mosaic, y, x, c, &DIAGONAL))
                        .expect("every 2x2-tiled channel has a cross or diagonal neighbour")
                };
            }
            out.set(y, x, px);
        }
    }
    out
}

fn neighbour_mean(
    mosaic: &Mosaic,
    y: usize,
    x: usize,
    channel: Channel,
    offsets: &[(isize, isize)],
) -> Option<u8> {
    let (mut sum, mut n) = (0u32, 0u32);
    for &(dy, dx) in offsets {
        let (ny, nx) = (y as isize + dy, x as isize + dx);
        if ny < 0 || nx < 0 || ny >= mosaic.height as isize || nx >= mosaic.width as isize {
            continue;
        }
        let (ny, nx) = (ny as usize, nx as usize);
        if mosaic.pattern.channel_at(ny, nx) == channel {
            sum += mosaic.get(ny, nx) as u32;
            n += 1;
        }
    }
    // Round half up, which equals half-away-from-zero for non-negative means.
    (n > 0).then(|| ((2 * sum + n) / (2 * n)) as u8)
}

/// Mosaic then demosaic: the acquisition artifact a camera leaves behind.
pub fn simulate_camera(img: &ImageRaster, pattern: CfaPattern) -> Result<ImageRaster> {
    Ok(demosaic_bilinear(&cfa_mosaic(img, pattern)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(h: usize, w: usize) -> ImageRaster {
        let mut s = 12345u32;
        ImageRaster::from_fn(h, w, |_, _| {
            let mut next = || {
                s = s.wrapping_mul(1664525).wrapping_add(1013904223);
                (s >> 24) as u8
            };
            [next(), next(), next()]
        })
        .unwrap()
    }

    #[test]
    fn pattern_validation_and_parsing() {
        assert_eq!("GBRG".parse::<CfaPattern>().unwrap(), CfaPattern::GBRG);
        assert_eq!(CfaPattern::GBRG.to_string(), "GBRG");
        assert!("GGRB".parse::<CfaPattern>().is_ok());
        assert!("GGGB".parse::<CfaPattern>().is_err());
        assert!("GBR".parse::<CfaPattern>().is_err());
        assert!(CfaPattern::new([[Channel::R, Channel::R], [Channel::G, Channel::B]]).is_err());
    }

    #[test]
    fn shifted_pattern_tracks_origin() {
        assert_eq!(CfaPattern::GBRG.shifted(0, 1), CfaPattern::BGGR);
        assert_eq!(CfaPattern::GBRG.shifted(1, 0), CfaPattern::RGGB);
        assert_eq!(CfaPattern::GBRG.shifted(1, 1), CfaPattern::GRBG);
        assert_eq!(CfaPattern::GBRG.shifted(2, 4), CfaPattern::GBRG);
    }

    #[test]
    fn gbrg_tile_layout() {
        let img = ImageRaster::from_raw(2, 2, vec![
            1, 2, 3, 4, 5, 6, //
            7, 8, 9, 10, 11, 12,
        ])
        .unwrap();
        let m = cfa_mosaic(&img, CfaPattern::GBRG).unwrap();
        assert_eq!(m.as_raw(), &[2, 6, 7, 11]);
    }

    #[test]
    fn odd_dimensions_rejected() {
        let img = ImageRaster::new(3, 4).unwrap();
        assert!(matches!(cfa_mosaic(&img, CfaPattern::GBRG), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_gray_stays_constant() {
        let img = ImageRaster::filled(6, 8, [90, 90, 90]).unwrap();
        let m = cfa_mosaic(&img, CfaPattern::GBRG).unwrap();
        assert!(m.as_raw().iter().all(|&v| v == 90));
        assert_eq!(demosaic_bilinear(&m), img);
    }

    #[test]
    fn constant_color_survives_demosaic() {
        let img = ImageRaster::filled(6, 6, [200, 30, 99]).unwrap();
        let m = cfa_mosaic(&img, CfaPattern::RGGB).unwrap();
        assert_eq!(demosaic_bilinear(&m), img);
    }

    #[test]
    fn recorded_samples_survive_demosaic() {
        let img = noisy(10, 14);
        let m = cfa_mosaic(&img, CfaPattern::GBRG).unwrap();
        let d = demosaic_bilinear(&m);
        assert_eq!(cfa_mosaic(&d, CfaPattern::GBRG).unwrap(), m);
    }

    #[test]
    fn green_ramp_interpolates_between_horizontal_neighbours() {
        // G = 10x: at interior non-green sites the cross mean is
        // (10x + 10x + 10(x-1) + 10(x+1)) / 4 = 10x.
        let img = ImageRaster::from_fn(8, 12, |_, x| [50, (10 * x) as u8, 50]).unwrap();
        let d = simulate_camera(&img, CfaPattern::GBRG).unwrap();
        for y in 1..7 {
            for x in 1..11 {
                if !CfaPattern::GBRG.is_green(y, x) {
                    let g = d.get(y, x)[1];
                    assert_eq!(g as usize, 10 * x);
                    assert!(d.get(y, x - 1)[1] < g && g < d.get(y, x + 1)[1]);
                }
            }
        }
    }

    #[test]
    fn red_at_blue_site_uses_diagonals() {
        let img = noisy(6, 6);
        let m = cfa_mosaic(&img, CfaPattern::GBRG).unwrap();
        let d = demosaic_bilinear(&m);
        // (2,3) is a blue site under GBRG; its red neighbours are the four diagonals.
        let expect = (m.get(1, 2) as u32 + m.get(1, 4) as u32 + m.get(3, 2) as u32 + m.get(3, 4) as u32 + 2) / 4;
        assert_eq!(d.get(2, 3)[0] as u32, expect);
    }
}
