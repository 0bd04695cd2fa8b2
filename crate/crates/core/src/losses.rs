//! Training objectives for decomposition, generation and ratio-image
//! super-resolution. Every loss is a per-element mean returned as a scalar
//! tensor, together with its individual terms for logging.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::formation::{ambient_color, diff};
use crate::highres::ratio_inverse_tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the multi-scale gradient terms.
    pub w_grad: f64,
    /// Weight of the generation group `(L_g,S_F + L_g,F + L_cyc)`.
    pub w_cycle_group: f64,
    /// Number of scales in the gradient loss.
    pub scales: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_grad: 0.5,
            w_cycle_group: 0.5,
            scales: 4,
        }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        if !(self.w_grad >= 0.0 && self.w_cycle_group >= 0.0) || self.scales == 0 {
            return Err(Error::InvalidArgument(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }
}

/// A scalar loss and its named components (as plain numbers).
#[derive(Clone, Debug)]
pub struct LossOutput<T: Real> {
    pub total: Tensor<T>,
    pub terms: Vec<(&'static str, f64)>,
}

impl<T: Real> LossOutput<T> {
    pub fn value(&self) -> f64 {
        self.total.item().to_f64_lossless()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

fn scalar<T: Real>(t: &Tensor<T>) -> f64 {
    t.item().to_f64_lossless()
}

/// Mean absolute difference.
pub fn l1_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("l1_loss", pred.shape(), target.shape()));
    }
    Ok(pred.sub(target)?.abs().mean())
}

/// Forward-difference gradient mismatch averaged over `scales` factor-2
/// area-downsampled copies of both images.
pub fn multiscale_gradient_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, scales: usize) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("multiscale_gradient_loss", pred.shape(), target.shape()));
    }
    let (_, _, h, w) = pred.dims4()?;
    if scales == 0 || h.min(w) < 1 << (scales - 1) {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} image is too small for {scales} gradient scales"
        )));
    }
    let (mut x, mut y) = (pred.clone(), target.clone());
    let mut acc: Option<Tensor<T>> = None;
    for level in 0..scales {
        if level > 0 {
            x = x.avg_pool2()?;
            y = y.avg_pool2()?;
        }
        let dx = l1_loss(&x.diff_x()?, &y.diff_x()?)?;
        let dy = l1_loss(&x.diff_y()?, &y.diff_y()?)?;
        let term = dx.add(&dy)?;
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one scale").scale(1.0 / scales as f64))
}

/// Mean `|t̂ - t|` over the batch, in normalized temperature units.
pub fn temperature_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    for t in [pred, target] {
        if let Some(v) = t.data().iter().find(|v| !(T::zero()..=T::one()).contains(*v)) {
            return Err(Error::OutOfRange(format!("normalized temperature {v} outside [0, 1]")));
        }
    }
    l1_loss(pred, target)
}

/// Network outputs for the decomposition task.
#[derive(Clone, Debug)]
pub struct DecompositionPrediction<T: Real> {
    /// `(N, 1, H, W)`
    pub s_a: Tensor<T>,
    /// `(N, 1, H, W)`
    pub s_f: Tensor<T>,
    /// `(N, 1)`
    pub t_norm: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DecompositionTarget<T: Real> {
    pub s_a: Tensor<T>,
    pub s_f: Tensor<T>,
    /// `(N, 3, H, W)`
    pub albedo: Tensor<T>,
    pub t_norm: Tensor<T>,
}

/// Shading, albedo, gradient and temperature terms. The albedo is implied from
/// the photograph and the predicted shadings and temperature, so its terms
/// reach all three outputs.
pub fn decomposition_loss<T: Real>(
    pred: &DecompositionPrediction<T>,
    truth: &DecompositionTarget<T>,
    photo: &Tensor<T>,
    w: &LossWeights,
) -> Result<LossOutput<T>> {
    w.validate()?;
    let c_a = ambient_color(&pred.t_norm)?;
    let r_hat = diff::implied_albedo(photo, &pred.s_a, &pred.s_f, &c_a)?;
    let l1_s_a = l1_loss(&pred.s_a, &truth.s_a)?;
    let l1_s_f = l1_loss(&pred.s_f, &truth.s_f)?;
    let l1_r = l1_loss(&r_hat, &truth.albedo)?;
    let g_s_a = multiscale_gradient_loss(&pred.s_a, &truth.s_a, w.scales)?;
    let g_s_f = multiscale_gradient_loss(&pred.s_f, &truth.s_f, w.scales)?;
    let g_r = multiscale_gradient_loss(&r_hat, &truth.albedo, w.scales)?;
    let l_t = temperature_loss(&pred.t_norm, &truth.t_norm)?;
    let grads = g_s_a.add(&g_s_f)?.add(&g_r)?.scale(w.w_grad);
    let total = l1_s_a.add(&l1_s_f)?.add(&l1_r)?.add(&grads)?.add(&l_t)?;
    let terms = vec![
        ("l1_s_a", scalar(&l1_s_a)),
        ("l1_s_f", scalar(&l1_s_f)),
        ("l1_r", scalar(&l1_r)),
        ("grad_s_a", scalar(&g_s_a)),
        ("grad_s_f", scalar(&g_s_f)),
        ("grad_r", scalar(&g_r)),
        ("temperature", scalar(&l_t)),
    ];
    Ok(LossOutput { total, terms })
}

/// Maps a flash photograph to its ambient illumination. Implementations may
/// hold per-batch guide maps (albedo, normals, depth) alongside the model.
pub trait Decomposer<T: Real> {
    /// `(N, 3, H, W)` photograph to `(N, 3, H, W)` ambient image.
    fn ambient(&self, photo: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Real, F> Decomposer<T> for F
where
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    fn ambient(&self, photo: &Tensor<T>) -> Result<Tensor<T>> {
        self(photo)
    }
}

/// Splits with known shadings and ambient colour; exact on synthetic scenes.
#[derive(Clone, Debug)]
pub struct ExactDecomposer<T: Real> {
    pub s_a: Tensor<T>,
    pub s_f: Tensor<T>,
    /// `(N, 3)`
    pub c_a: Tensor<T>,
}

impl<T: Real> Decomposer<T> for ExactDecomposer<T> {
    fn ambient(&self, photo: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(diff::split(photo, &self.s_a, &self.s_f, &self.c_a)?.1)
    }
}

/// `mean |D(P̂) - A|`. Gradients pass through `D` into `P̂`.
pub fn cycle_loss<T: Real>(p_hat: &Tensor<T>, ambient: &Tensor<T>, d: &dyn Decomposer<T>) -> Result<Tensor<T>> {
    l1_loss(&d.ambient(p_hat)?, ambient)
}

/// Whether the generation loss includes the cycle term.
#[derive(Clone, Copy)]
pub enum Cycle<'a, T: Real> {
    Through(&'a dyn Decomposer<T>),
    Off,
}

#[derive(Clone, Debug)]
pub struct GenerationTarget<T: Real> {
    /// `(N, 1, H, W)`
    pub s_f: Tensor<T>,
    /// `(N, 3, H, W)` flash illumination.
    pub flash: Tensor<T>,
    pub albedo: Tensor<T>,
    /// No-flash input white-balanced for its ambient.
    pub no_flash: Tensor<T>,
    /// `(N, 3)` ambient colour used to tint `no_flash`.
    pub c_a: Tensor<T>,
    /// The captured ambient image `c_A * no_flash`, compared by the cycle term.
    pub ambient: Tensor<T>,
}

/// Flash shading and flash image terms, plus the cycle term when enabled.
pub fn generation_loss<T: Real>(
    pred_s_f: &Tensor<T>,
    truth: &GenerationTarget<T>,
    cycle: Cycle<'_, T>,
    w: &LossWeights,
) -> Result<LossOutput<T>> {
    w.validate()?;
    let (f_hat, p_hat) = diff::generate(&truth.no_flash, &truth.albedo, pred_s_f, &truth.c_a)?;
    let l1_s_f = l1_loss(pred_s_f, &truth.s_f)?;
    let l1_f = l1_loss(&f_hat, &truth.flash)?;
    let g_s_f = multiscale_gradient_loss(pred_s_f, &truth.s_f, w.scales)?;
    let g_f = multiscale_gradient_loss(&f_hat, &truth.flash, w.scales)?;
    let mut group = g_s_f.add(&g_f)?;
    let mut cyc_value = 0.0;
    if let Cycle::Through(d) = cycle {
        let cyc = cycle_loss(&p_hat, &truth.ambient, d)?;
        cyc_value = scalar(&cyc);
        group = group.add(&cyc)?;
    }
    let total = l1_s_f.add(&l1_f)?.add(&group.scale(w.w_cycle_group))?;
    let terms = vec![
        ("l1_s_f", scalar(&l1_s_f)),
        ("l1_f", scalar(&l1_f)),
        ("grad_s_f", scalar(&g_s_f)),
        ("grad_f", scalar(&g_f)),
        ("cycle", cyc_value),
    ];
    Ok(LossOutput { total, terms })
}

/// `L1 + w_grad * L_g` on the ambient image recovered from a predicted ratio.
pub fn highres_loss<T: Real>(
    ratio: &Tensor<T>,
    photo: &Tensor<T>,
    ambient: &Tensor<T>,
    w: &LossWeights,
) -> Result<LossOutput<T>> {
    w.validate()?;
    let a_hat = ratio_inverse_tensor(ratio, photo)?;
    let l1 = l1_loss(&a_hat, ambient)?;
    let g = multiscale_gradient_loss(&a_hat, ambient, w.scales)?;
    let total = l1.add(&g.scale(w.w_grad))?;
    let terms = vec![("l1_a", scalar(&l1)), ("grad_a", scalar(&g))];
    Ok(LossOutput { total, terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn l1_examples() {
        let a = t(vec![0.0, 0.0], &[2]);
        let b = t(vec![1.0, 3.0], &[2]);
        assert_eq!(l1_loss(&a, &b).unwrap().item(), 2.0);
        assert_eq!(l1_loss(&b, &b).unwrap().item(), 0.0);
        assert!(l1_loss(&a, &t(vec![1.0], &[1])).is_err());
    }

    #[test]
    fn gradient_loss_ignores_offsets() {
        let a = Tensor::<f64>::full(&[1, 1, 8, 8], 0.3);
        let b = Tensor::<f64>::full(&[1, 1, 8, 8], 0.9);
        assert_eq!(multiscale_gradient_loss(&a, &b, 4).unwrap().item(), 0.0);
    }

    #[test]
    fn gradient_loss_on_a_ramp() {
        let ramp = t((0..16).map(|i| 0.1 * (i % 4) as f64).collect(), &[1, 1, 4, 4]);
        let flat = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        // Three of four columns carry a 0.1 step; no vertical change.
        let v = multiscale_gradient_loss(&ramp, &flat, 1).unwrap().item();
        assert!((v - 0.075).abs() < 1e-12, "{v}");
    }

    #[test]
    fn gradient_loss_rejects_small_images() {
        let a = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        assert!(multiscale_gradient_loss(&a, &a, 4).is_err());
        assert!(multiscale_gradient_loss(&a, &a, 3).is_ok());
    }

    #[test]
    fn temperature_examples() {
        let a = t(vec![0.2], &[1, 1]);
        let b = t(vec![0.9], &[1, 1]);
        assert!((temperature_loss(&a, &b).unwrap().item() - 0.7).abs() < 1e-15);
        assert_eq!(temperature_loss(&a, &b).unwrap().item(), temperature_loss(&b, &a).unwrap().item());
        assert!(temperature_loss(&a, &t(vec![1.5], &[1, 1])).is_err());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let w = LossWeights { scales: 0, ..Default::default() };
        let x = Tensor::<f64>::zeros(&[1, 1, 8, 8]);
        assert!(highres_loss(&x, &x, &x, &w).is_err());
    }
}
