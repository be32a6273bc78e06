use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

/// An 8-bit RGB raster stored row-major with interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRaster {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageRaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageRaster")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl ImageRaster {
    /// Black raster of the given size.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            data: vec![0; height * width * 3],
        })
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::Shape {
                expected: format!("{} bytes ({height}x{width}x3)", height * width * 3),
                actual: format!("{} bytes", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut img = Self::new(height, width)?;
        for y in 0..height {
            for x in 0..width {
                img.set(y, x, f(y, x));
            }
        }
        Ok(img)
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn pixels_mut(&mut self) -> impl Iterator<Item = &mut [u8]> + '_ {
        self.data.chunks_exact_mut(3)
    }

    /// Copies the `h`×`w` region whose top-left corner is at (`y0`, `x0`).
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Dimension(format!(
                "crop {h}x{w} at ({y0},{x0}) does not fit in {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb_image(img: &RgbImage) -> Result<Self> {
        Self::from_raw(
            img.height() as usize,
            img.width() as usize,
            img.as_raw().clone(),
        )
    }

    /// Loads any format the `image` crate can decode, converting to RGB8.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?;
        Self::from_rgb_image(&img.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))
    }

    /// Mean absolute per-channel difference against another raster of equal size.
    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.abs_diff(b) as u64)
            .sum();
        Ok(total as f64 / self.data.len() as f64)
    }

    /// Largest per-channel absolute difference against another raster.
    pub fn max_abs_diff(&self, other: &Self) -> Option<u8> {
        if self.height != other.height || self.width != other.width {
            return None;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.abs_diff(b))
            .max()
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!(
            "raster must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}
