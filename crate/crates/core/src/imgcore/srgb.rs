//! sRGB transfer functions at the 8-bit boundary. Everything inside the
//! library works in linear light.

use super::LinearImage;
use crate::error::{Error, Result};

/// An 8-bit sRGB-encoded image, interleaved like [`LinearImage`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Srgb8Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Srgb8Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width}x{channels} image needs {} bytes, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }
}

/// sRGB EOTF for a normalized code value.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse sRGB EOTF for a linear value in `[0, 1]`.
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn decode_u8(code: u8) -> f32 {
    srgb_to_linear(code as f64 / 255.0) as f32
}

/// Clamp to `[0, 1]`, encode, round half away from zero.
pub fn encode_u8(v: f32) -> u8 {
    let v = (v as f64).clamp(0.0, 1.0);
    (linear_to_srgb(v) * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn srgb_decode(img: &Srgb8Image) -> LinearImage {
    let data = img.data.iter().map(|&c| decode_u8(c)).collect();
    LinearImage::new(img.height, img.width, img.channels, data)
        .expect("decoded sRGB values are finite")
}

pub fn srgb_encode(img: &LinearImage) -> Srgb8Image {
    Srgb8Image {
        height: img.height(),
        width: img.width(),
        channels: img.channels(),
        data: img.data().iter().map(|&v| encode_u8(v)).collect(),
    }
}
