use serde::{Deserialize, Serialize};

use crate::colorops::ImageRaster;
use crate::error::{Error, Result};

/// Sliding-window layout of `rows × cols` patches over an image.
///
/// Patch `(i, j)` has its top-left corner at `(i·stride, j·stride)` and flat
/// index `k = i·cols + j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub image_height: usize,
    pub image_width: usize,
    pub patch_height: usize,
    pub patch_width: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(
        image_height: usize,
        image_width: usize,
        patch_height: usize,
        patch_width: usize,
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        if patch_height == 0 || patch_width == 0 {
            return Err(Error::Parameter("patch must be at least 1x1".into()));
        }
        if patch_height > image_height || patch_width > image_width {
            return Err(Error::Dimension(format!(
                "patch {patch_height}x{patch_width} larger than image {image_height}x{image_width}"
            )));
        }
        Ok(Self {
            image_height,
            image_width,
            patch_height,
            patch_width,
            stride,
            rows: (image_height - patch_height) / stride + 1,
            cols: (image_width - patch_width) / stride + 1,
        })
    }

    /// Total patch count `N = rows · cols`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn position(&self, k: usize) -> (usize, usize) {
        (k / self.cols, k % self.cols)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Top-left pixel of patch `k`.
    pub fn offset(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.position(k);
        (i * self.stride, j * self.stride)
    }

    /// Pixel the patch is anchored at when maps are resampled to image size.
    pub fn center(&self, k: usize) -> (usize, usize) {
        let (y, x) = self.offset(k);
        (y + self.patch_height / 2, x + self.patch_width / 2)
    }

    pub fn patch(&self, img: &ImageRaster, k: usize) -> Result<ImageRaster> {
        self.check_image(img)?;
        let (y, x) = self.offset(k);
        img.crop(y, x, self.patch_height, self.patch_width)
    }

    pub fn check_image(&self, img: &ImageRaster) -> Result<()> {
        if img.height() != self.image_height || img.width() != self.image_width {
            return Err(Error::Dimension(format!(
                "grid built for {}x{}, image is {}x{}",
                self.image_height,
                self.image_width,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

/// Lays an `h`×`w` window with stride `s` over `img`.
pub fn extract_patch_grid(img: &ImageRaster, h: usize, w: usize, s: usize) -> Result<PatchGrid> {
    PatchGrid::new(img.height(), img.width(), h, w, s)
}
