//! Pixel-level color and acquisition-pipeline primitives.

mod cfa;
mod hue;
mod jpeg;
mod raster;

pub use cfa::{cfa_mosaic, demosaic_bilinear, simulate_camera, CfaPattern, Channel, Mosaic};
pub use hue::{hsv_to_rgb, hue_rotate, rgb_to_hsv, rotate_pixel, HueAngle};
pub use jpeg::{jpeg_decode, jpeg_encode, jpeg_roundtrip, save_jpeg, FULL_CHROMA_QUALITY};
pub use raster::ImageRaster;
