use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Rounds a step to a power of two so `x + h - x` stays exact for dyadic `x`.
fn representable_step(h: f64) -> f64 {
    2f64.powi(h.log2().round() as i32)
}

/// Compares reverse-mode gradients of `f` at `x` with central differences.
///
/// The step for element `i` is `h * max(1, |x_i|)`. Returns the maximum over
/// elements of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<T: Real>(
    f: impl Fn(&Tensor<T>) -> Result<Tensor<T>>,
    x: &Tensor<T>,
    h: f64,
) -> Result<f64> {
    let leaf = x.to_parameter();
    let y = f(&leaf)?;
    if y.numel() != 1 {
        return Err(Error::NonScalarLoss(y.shape().to_vec()));
    }
    y.backward()?;
    let analytic = leaf.grad().unwrap_or_else(|| vec![T::zero(); x.numel()]);

    let eval = |data: Vec<T>| -> Result<f64> {
        let t = Tensor::new(data, x.shape())?;
        Ok(f(&t)?.item().to_f64_lossless())
    };
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let xi = x.data()[i].to_f64_lossless();
        let step = representable_step(h * xi.abs().max(1.0));
        let mut plus = x.data().to_vec();
        plus[i] = T::lit(xi + step);
        let mut minus = x.data().to_vec();
        minus[i] = T::lit(xi - step);
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let err = (analytic[i].to_f64_lossless() - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::<f64>::new(vec![1.0, -3.0, 0.5, 12.0, 0.0, 2.25], &[2, 3]).unwrap();
        assert_eq!(grad_check(|t| Ok(t.sum()), &x, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn non_scalar_function_is_rejected() {
        let x = Tensor::<f64>::new(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            grad_check(|t| Ok(t.relu()), &x, 1e-4),
            Err(Error::NonScalarLoss(_))
        ));
    }
}
