//! Image containers, sRGB handling, resampling and file I/O.

mod bridge;
mod image;
mod pfm;
mod png_io;
mod resize;
mod srgb;

pub use bridge::stack_images;
pub use image::LinearImage;
pub(crate) use image::{median, quantile};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png_io::{decode_png, encode_png, read_png, write_png};
pub use resize::{resize, ResampleMode, Resampler};
pub use srgb::{
    decode_u8, encode_u8, linear_to_srgb, srgb_decode, srgb_encode, srgb_to_linear, Srgb8Image,
};
