//! Baseline JPEG round-trips.
//!
//! Encoding goes through `jpeg-encoder` (pinned in the manifest) so chroma
//! subsampling can be chosen: 4:2:0 below quality 95, 4:4:4 from 95 up.
//! Decoding uses the `image` crate's baseline decoder.

use std::path::Path;

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};

use super::ImageRaster;
use crate::error::{Error, Result};

/// Quality at or above which chroma is kept at full resolution.
pub const FULL_CHROMA_QUALITY: u8 = 95;

fn check_quality(qf: u8) -> Result<()> {
    if !(1..=100).contains(&qf) {
        return Err(Error::Parameter(format!(
            "JPEG quality factor must be in [1, 100], got {qf}"
        )));
    }
    Ok(())
}

pub fn jpeg_encode(img: &ImageRaster, qf: u8) -> Result<Vec<u8>> {
    check_quality(qf)?;
    let (h, w) = (img.height(), img.width());
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::Dimension(format!("{h}x{w} exceeds the JPEG size limit")));
    }
    let mut buf = Vec::new();
    let mut encoder = Encoder::new(&mut buf, qf);
    encoder.set_sampling_factor(if qf >= FULL_CHROMA_QUALITY {
        SamplingFactor::R_4_4_4
    } else {
        SamplingFactor::R_4_2_0
    });
    encoder
        .encode(img.as_raw(), w as u16, h as u16, ColorType::Rgb)
        .map_err(|e| Error::Codec(format!("JPEG encode: {e}")))?;
    Ok(buf)
}

pub fn jpeg_decode(bytes: &[u8]) -> Result<ImageRaster> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| Error::Codec(format!("JPEG decode: {e}")))?;
    ImageRaster::from_rgb_image(&img.to_rgb8())
}

/// Encodes at quality `qf` and decodes the result.
pub fn jpeg_roundtrip(img: &ImageRaster, qf: u8) -> Result<ImageRaster> {
    jpeg_decode(&jpeg_encode(img, qf)?)
}

pub fn save_jpeg(img: &ImageRaster, qf: u8, path: &Path) -> Result<()> {
    let bytes = jpeg_encode(img, qf)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn natural(h: usize, w: usize) -> ImageRaster {
        ImageRaster::from_fn(h, w, |y, x| {
            let (fy, fx) = (y as f64, x as f64);
            let r = 128.0 + 90.0 * (fx / 9.0).sin() * (fy / 13.0).cos();
            let g = 120.0 + 70.0 * ((fx + fy) / 7.0).sin();
            let b = 100.0 + 60.0 * (fy / 5.0).sin() + ((x * 7 + y * 13) % 11) as f64;
            [r as u8, g as u8, b as u8]
        })
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_quality() {
        let img = natural(8, 8);
        assert!(matches!(jpeg_roundtrip(&img, 0), Err(Error::Parameter(_))));
        assert!(matches!(jpeg_roundtrip(&img, 101), Err(Error::Parameter(_))));
    }

    #[test]
    fn keeps_dimensions() {
        for (h, w) in [(1, 1), (7, 13), (64, 64), (33, 70)] {
            let out = jpeg_roundtrip(&natural(h, w), 75).unwrap();
            assert_eq!((out.height(), out.width()), (h, w));
        }
    }

    #[test]
    fn deterministic() {
        let img = natural(48, 64);
        assert_eq!(jpeg_roundtrip(&img, 80).unwrap(), jpeg_roundtrip(&img, 80).unwrap());
    }

    #[test]
    fn quality_100_is_close() {
        let img = natural(96, 128);
        let mae = img.mean_abs_diff(&jpeg_roundtrip(&img, 100).unwrap()).unwrap();
        assert!(mae < 3.0, "mae {mae}");
    }

    #[test]
    fn lower_quality_loses_more() {
        let img = natural(96, 128);
        let e55 = img.mean_abs_diff(&jpeg_roundtrip(&img, 55).unwrap()).unwrap();
        let e95 = img.mean_abs_diff(&jpeg_roundtrip(&img, 95).unwrap()).unwrap();
        assert!(e55 > e95, "qf55 {e55} vs qf95 {e95}");
    }
}
