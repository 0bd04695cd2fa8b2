//! Guided super-resolution through bounded ratio images.
//!
//! A low-resolution ambient estimate is turned into a ratio against the
//! photograph, upsampled, refined by a network that also sees the
//! full-resolution photograph, and inverted back to an ambient image.

mod ratio;
mod sr;

pub use ratio::{ratio_forward, ratio_forward_tensor, ratio_inverse, ratio_inverse_tensor};
pub use sr::{guided_sr, refine_ratio, upscaled_ratio, PassThrough, RatioModel};
