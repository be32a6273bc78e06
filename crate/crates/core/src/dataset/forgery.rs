use crate::colorops::{rotate_pixel, HueAngle, ImageRaster};
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Hue-rotates the pixels under `mask`; everything else is copied bit for bit.
pub fn apply_local_hue_mod(img: &ImageRaster, mask: &Mask, angle: HueAngle) -> Result<ImageRaster> {
    if mask.height() != img.height() || mask.width() != img.width() {
        return Err(Error::Dimension(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            img.height(),
            img.width()
        )));
    }
    let mut out = img.clone();
    if angle.is_zero() {
        return Ok(out);
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(y, x) {
                out.set(y, x, rotate_pixel(img.get(y, x), angle));
            }
        }
    }
    Ok(out)
}
