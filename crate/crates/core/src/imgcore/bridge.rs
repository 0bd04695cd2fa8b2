//! Conversions between interleaved images and planar `(N, C, H, W)` tensors.

use super::LinearImage;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

impl LinearImage {
    /// A `(1, C, H, W)` constant tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        stack_images(&[self]).expect("single image stacks")
    }

    /// Extracts batch item `index` of a `(N, C, H, W)` tensor.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, index: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4()?;
        if index >= n {
            return Err(Error::InvalidArgument(format!("batch index {index} out of {n}")));
        }
        let plane = h * w;
        let base = index * c * plane;
        let src = t.data();
        let mut data = vec![0.0f32; c * plane];
        for ch in 0..c {
            for p in 0..plane {
                data[p * c + ch] = src[base + ch * plane + p].to_f64_lossless() as f32;
            }
        }
        LinearImage::new(h, w, c, data)
    }
}

/// Stacks same-sized images into a `(N, C, H, W)` constant tensor.
pub fn stack_images<T: Real>(images: &[&LinearImage]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot stack zero images".into()))?;
    let (h, w, c) = first.dims();
    let plane = h * w;
    let mut data = Vec::with_capacity(images.len() * c * plane);
    for img in images {
        if img.dims() != first.dims() {
            return Err(Error::shape(
                "stack",
                &[h, w, c],
                &[img.height(), img.width(), img.channels()],
            ));
        }
        let src = img.data();
        for ch in 0..c {
            data.extend((0..plane).map(|p| T::lit(src[p * c + ch] as f64)));
        }
    }
    Tensor::new(data, &[images.len(), c, h, w])
}
