//! Training pairs for the Siamese model.
//!
//! A consistent pair (label 0) holds two untouched patches; an inconsistent
//! pair (label 1) has its second patch hue-rotated by a multiple of 30° in
//! [30, 330]. In JPEG mode both patches are compressed at a shared random
//! quality in [55, 100], either before or after the rotation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::colorops::{hue_rotate, jpeg_roundtrip, HueAngle, ImageRaster};
use crate::error::{Error, Result};

pub const PATCH_SIZE: usize = 64;
pub const MIN_TRAIN_QF: u8 = 55;
pub const MAX_TRAIN_QF: u8 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Clean,
    Jpeg,
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairMode::Clean => "clean",
            PairMode::Jpeg => "jpeg",
        })
    }
}

impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(PairMode::Clean),
            "jpeg" => Ok(PairMode::Jpeg),
            other => Err(Error::Parameter(format!("unknown pair mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JpegOrder {
    /// Compress, then modify.
    BeforeModification,
    /// Modify, then compress.
    AfterModification,
}

/// How a pair was built; enough to regenerate it from the pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairProvenance {
    pub image_a: usize,
    pub offset_a: (usize, usize),
    pub image_b: usize,
    pub offset_b: (usize, usize),
    pub angle: HueAngle,
    pub jpeg: Option<(u8, JpegOrder)>,
}

impl PairProvenance {
    pub fn same_image(&self) -> bool {
        self.image_a == self.image_b
    }
}

#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub patch_a: ImageRaster,
    pub patch_b: ImageRaster,
    /// 0 = consistent, 1 = inconsistent.
    pub label: u8,
    pub provenance: PairProvenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSampler {
    pub mode: PairMode,
    pub patch_size: usize,
    /// Draw both patches from one image (the deployment condition).
    pub same_image: bool,
    /// Support of the rotation applied to inconsistent pairs; never contains 0.
    pub angles: Vec<HueAngle>,
}

/// 30°, 60°, …, 330°.
pub fn training_angles() -> Vec<HueAngle> {
    (1..=11).map(|k| HueAngle::new(30 * k)).collect()
}

impl PairSampler {
    pub fn new(mode: PairMode) -> Self {
        Self {
            mode,
            patch_size: PATCH_SIZE,
            same_image: true,
            angles: training_angles(),
        }
    }

    fn check_pool(&self, pool: &[ImageRaster]) -> Result<()> {
        if pool.is_empty() {
            return Err(Error::Parameter("training pool is empty".into()));
        }
        let s = self.patch_size;
        if let Some(i) = pool.iter().position(|im| im.height() < s || im.width() < s) {
            return Err(Error::Dimension(format!("pool image {i} is smaller than a {s}x{s} patch")));
        }
        if self.angles.is_empty() || self.angles.iter().any(|a| a.is_zero()) {
            return Err(Error::Parameter("inconsistent pairs need non-zero angles".into()));
        }
        Ok(())
    }

    /// Draws a pair with a fair-coin label.
    pub fn sample<R: Rng + ?Sized>(&self, pool: &[ImageRaster], rng: &mut R) -> Result<TrainingPair> {
        let label = u8::from(rng.random_bool(0.5));
        self.sample_with_label(pool, label, rng)
    }

    /// Draws a pair with a fixed label; used to build exactly balanced batches.
    pub fn sample_with_label<R: Rng + ?Sized>(
        &self,
        pool: &[ImageRaster],
        label: u8,
        rng: &mut R,
    ) -> Result<TrainingPair> {
        self.check_pool(pool)?;
        let image_a = rng.random_range(0..pool.len());
        let image_b = if self.same_image { image_a } else { rng.random_range(0..pool.len()) };
        let offset_a = self.random_offset(&pool[image_a], rng);
        let offset_b = self.random_offset(&pool[image_b], rng);
        let angle = if label == 1 {
            self.angles[rng.random_range(0..self.angles.len())]
        } else {
            HueAngle::ZERO
        };
        let jpeg = match self.mode {
            PairMode::Clean => None,
            PairMode::Jpeg => {
                let q = rng.random_range(MIN_TRAIN_QF..=MAX_TRAIN_QF);
                let order = if rng.random_bool(0.5) {
                    JpegOrder::BeforeModification
                } else {
                    JpegOrder::AfterModification
                };
                Some((q, order))
            }
        };
        let provenance = PairProvenance { image_a, offset_a, image_b, offset_b, angle, jpeg };
        self.build(pool, label, provenance)
    }

    /// Uniform top-left corner on even coordinates, so every patch shares the
    /// CFA phase of the full frame (test grids use even strides too).
    fn random_offset<R: Rng + ?Sized>(&self, img: &ImageRaster, rng: &mut R) -> (usize, usize) {
        let s = self.patch_size;
        let y = rng.random_range(0..=(img.height() - s) / 2) * 2;
        let x = rng.random_range(0..=(img.width() - s) / 2) * 2;
        (y, x)
    }

    /// Materializes the patches described by `provenance`.
    pub fn build(&self, pool: &[ImageRaster], label: u8, provenance: PairProvenance) -> Result<TrainingPair> {
        let s = self.patch_size;
        let crop = |i: usize, (y, x): (usize, usize)| pool[i].crop(y, x, s, s);
        let a = crop(provenance.image_a, provenance.offset_a)?;
        let b = crop(provenance.image_b, provenance.offset_b)?;
        let angle = provenance.angle;
        let (patch_a, patch_b) = match provenance.jpeg {
            None => (a, hue_rotate(&b, angle)),
            Some((q, JpegOrder::BeforeModification)) => {
                (jpeg_roundtrip(&a, q)?, hue_rotate(&jpeg_roundtrip(&b, q)?, angle))
            }
            Some((q, JpegOrder::AfterModification)) => {
                (jpeg_roundtrip(&a, q)?, jpeg_roundtrip(&hue_rotate(&b, angle), q)?)
            }
        };
        Ok(TrainingPair { patch_a, patch_b, label, provenance })
    }
}

/// Draws one pair from `pool` in `mode` with default settings.
pub fn sample_training_pair<R: Rng + ?Sized>(
    pool: &[ImageRaster],
    mode: PairMode,
    rng: &mut R,
) -> Result<TrainingPair> {
    PairSampler::new(mode).sample(pool, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn pool() -> Vec<ImageRaster> {
        (0..3)
            .map(|i| {
                ImageRaster::from_fn(96, 128, |y, x| {
                    [(x * 2 + i * 40) as u8, (y * 2) as u8, ((x + y) % 200) as u8]
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn labels_are_balanced() {
        let pool = pool();
        let mut rng = stream_rng(1, 0);
        let sampler = PairSampler { patch_size: 8, ..PairSampler::new(PairMode::Clean) };
        let fixed = PairSampler { angles: vec![HueAngle::new(120)], ..sampler.clone() };
        assert_eq!(fixed.sample_with_label(&pool, 1, &mut rng).unwrap().provenance.angle.degrees(), 120);
        let n = 10_000;
        let ones = (0..n).filter(|_| sampler.sample(&pool, &mut rng).unwrap().label == 1).count();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "label-1 fraction {frac}");
    }

    #[test]
    fn inconsistent_pairs_rotate_patch_b() {
        let pool = pool();
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let pair = sample_training_pair(&pool, PairMode::Clean, &mut rng).unwrap();
            let p = &pair.provenance;
            let src = pool[p.image_b].crop(p.offset_b.0, p.offset_b.1, 64, 64).unwrap();
            assert_eq!(pair.patch_b, hue_rotate(&src, p.angle));
            let a = pool[p.image_a].crop(p.offset_a.0, p.offset_a.1, 64, 64).unwrap();
            assert_eq!(pair.patch_a, a);
            if pair.label == 1 {
                let d = p.angle.degrees();
                assert!((30..=330).contains(&d) && d % 30 == 0);
            } else {
                assert!(p.angle.is_zero());
            }
            assert!(p.same_image());
            assert!(p.offset_a.0 % 2 == 0 && p.offset_b.1 % 2 == 0);
        }
    }

    #[test]
    fn jpeg_mode_records_quality() {
        let pool = pool();
        let mut rng = stream_rng(3, 0);
        for _ in 0..10 {
            let pair = sample_training_pair(&pool, PairMode::Jpeg, &mut rng).unwrap();
            let (q, _) = pair.provenance.jpeg.unwrap();
            assert!((MIN_TRAIN_QF..=MAX_TRAIN_QF).contains(&q));
            assert_eq!(pair.patch_a.height(), 64);
        }
    }

    #[test]
    fn empty_pool_errors() {
        let mut rng = stream_rng(4, 0);
        assert!(matches!(
            sample_training_pair(&[], PairMode::Clean, &mut rng),
            Err(Error::Parameter(_))
        ));
    }
}
