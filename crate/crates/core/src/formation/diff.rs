//! Differentiable formation ops on `(N, C, H, W)` tensors. The plain image
//! API in the parent module evaluates these same functions, so both flavours
//! share one definition.
//!
//! Albedo and photographs are `(N, 3, H, W)`, shadings `(N, 1, H, W)` and the
//! ambient colour `(N, 3)`.

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

fn color4<T: Real>(c_a: &Tensor<T>) -> Result<Tensor<T>> {
    match c_a.shape() {
        &[n, 3] => c_a.reshape(&[n, 3, 1, 1]),
        &[_, 3, 1, 1] => Ok(c_a.clone()),
        s => Err(Error::InvalidArgument(format!("ambient colour must be (N, 3), got {s:?}"))),
    }
}

fn check_shading<T: Real>(what: &str, s: &Tensor<T>, like: &Tensor<T>) -> Result<()> {
    let (n, _, h, w) = like.dims4()?;
    let (sn, sc, sh, sw) = s.dims4()?;
    if (sn, sc, sh, sw) != (n, 1, h, w) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be ({n}, 1, {h}, {w}), got {:?}",
            s.shape()
        )));
    }
    Ok(())
}

/// `R * c_A * S_A`, evaluated as `(R * c_A) * S_A` everywhere so that equal
/// inputs give bit-identical results across compose, split and relight.
pub fn ambient_term<T: Real>(albedo: &Tensor<T>, c_a: &Tensor<T>, s_a: &Tensor<T>) -> Result<Tensor<T>> {
    check_shading("ambient shading", s_a, albedo)?;
    albedo.mul(&color4(c_a)?)?.mul(s_a)
}

/// `R * S_F`.
pub fn flash_term<T: Real>(albedo: &Tensor<T>, s_f: &Tensor<T>) -> Result<Tensor<T>> {
    check_shading("flash shading", s_f, albedo)?;
    albedo.mul(s_f)
}

/// `(P, A, F)` with `A = R c_A S_A`, `F = R S_F`, `P = A + F`.
pub fn compose<T: Real>(
    albedo: &Tensor<T>,
    s_a: &Tensor<T>,
    s_f: &Tensor<T>,
    c_a: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let a = ambient_term(albedo, c_a, s_a)?;
    let f = flash_term(albedo, s_f)?;
    let p = a.add(&f)?;
    Ok((p, a, f))
}

/// `c_A S_A + S_F`, shape `(N, 3, H, W)`.
pub fn total_shading<T: Real>(s_a: &Tensor<T>, s_f: &Tensor<T>, c_a: &Tensor<T>) -> Result<Tensor<T>> {
    color4(c_a)?.mul(s_a)?.add(s_f)
}

/// `P / (c_A S_A + S_F)` with the guarded division.
pub fn implied_albedo<T: Real>(
    photo: &Tensor<T>,
    s_a: &Tensor<T>,
    s_f: &Tensor<T>,
    c_a: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_shading("ambient shading", s_a, photo)?;
    check_shading("flash shading", s_f, photo)?;
    photo.div(&total_shading(s_a, s_f, c_a)?)
}

/// `(R̂, Â, F̂)`: implied albedo, then the two illuminations.
pub fn split<T: Real>(
    photo: &Tensor<T>,
    s_a: &Tensor<T>,
    s_f: &Tensor<T>,
    c_a: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let r = implied_albedo(photo, s_a, s_f, c_a)?;
    let a = ambient_term(&r, c_a, s_a)?;
    let f = flash_term(&r, s_f)?;
    Ok((r, a, f))
}

/// Flash photograph from a no-flash image white-balanced for its ambient:
/// `F̂ = R Ŝ_F`, `P̂ = F̂ + c_A A`.
pub fn generate<T: Real>(
    no_flash: &Tensor<T>,
    albedo: &Tensor<T>,
    s_f: &Tensor<T>,
    c_a: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if no_flash.shape() != albedo.shape() {
        return Err(Error::shape("generate", no_flash.shape(), albedo.shape()));
    }
    let f = flash_term(albedo, s_f)?;
    let p = f.add(&no_flash.mul(&color4(c_a)?)?)?;
    Ok((f, p))
}

/// `alpha * R c' S_A + kappa * R S_F`.
pub fn relight<T: Real>(
    albedo: &Tensor<T>,
    s_a: &Tensor<T>,
    s_f: &Tensor<T>,
    c_target: &Tensor<T>,
    kappa: f64,
    alpha: f64,
) -> Result<Tensor<T>> {
    let a = ambient_term(albedo, c_target, s_a)?.scale(alpha);
    let f = flash_term(albedo, s_f)?.scale(kappa);
    a.add(&f)
}
