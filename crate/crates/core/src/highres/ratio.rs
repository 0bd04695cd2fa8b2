use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::imgcore::LinearImage;

/// `2(A + 1) / (3(P + 1)) - 1/3`, clamped to `[0, 1]`.
pub fn ratio_forward(ambient: &LinearImage, photo: &LinearImage) -> Result<LinearImage> {
    same_dims("ratio_forward", ambient, photo)?;
    ambient.zip_map(photo, |a, p| {
        let r = 2.0 * (f64::from(a) + 1.0) / (3.0 * (f64::from(p) + 1.0)) - 1.0 / 3.0;
        r.clamp(0.0, 1.0) as f32
    })
}

/// `(3R + 1)(P + 1) / 2 - 1`, clamped to be nonnegative.
pub fn ratio_inverse(ratio: &LinearImage, photo: &LinearImage) -> Result<LinearImage> {
    same_dims("ratio_inverse", ratio, photo)?;
    ratio.zip_map(photo, |r, p| {
        let a = (3.0 * f64::from(r) + 1.0) * (f64::from(p) + 1.0) / 2.0 - 1.0;
        a.max(0.0) as f32
    })
}

/// Unclamped tensor form of [`ratio_forward`].
pub fn ratio_forward_tensor<T: Real>(ambient: &Tensor<T>, photo: &Tensor<T>) -> Result<Tensor<T>> {
    if ambient.shape() != photo.shape() {
        return Err(Error::shape("ratio_forward", ambient.shape(), photo.shape()));
    }
    ambient
        .affine(2.0, 2.0)
        .div(&photo.affine(3.0, 3.0))
        .map(|t| t.affine(1.0, -1.0 / 3.0))
}

/// Unclamped tensor form of [`ratio_inverse`], differentiable in both inputs.
pub fn ratio_inverse_tensor<T: Real>(ratio: &Tensor<T>, photo: &Tensor<T>) -> Result<Tensor<T>> {
    if ratio.shape() != photo.shape() {
        return Err(Error::shape("ratio_inverse", ratio.shape(), photo.shape()));
    }
    Ok(ratio.affine(3.0, 1.0).mul(&photo.affine(1.0, 1.0))?.affine(0.5, -1.0))
}

fn same_dims(op: &'static str, a: &LinearImage, b: &LinearImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(
            op,
            &[a.height(), a.width(), a.channels()],
            &[b.height(), b.width(), b.channels()],
        ));
    }
    Ok(())
}
