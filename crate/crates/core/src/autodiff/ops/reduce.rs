use super::super::{Real, Tensor};
use crate::error::Result;

impl<T: Real> Tensor<T> {
    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        let n = self.numel();
        Tensor::from_op("sum", vec![s], vec![1], vec![self.clone()], move |ctx| {
            vec![Some(vec![ctx.grad[0]; n])]
        })
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel();
        let s = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        let inv = T::one() / T::lit(n as f64);
        Tensor::from_op("mean", vec![s * inv], vec![1], vec![self.clone()], move |ctx| {
            vec![Some(vec![ctx.grad[0] * inv; n])]
        })
    }

    /// `(N, C, H, W) -> (N, C)` spatial mean.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        let (n, c, h, w) = self.dims4()?;
        let hw = h * w;
        let inv = T::one() / T::lit(hw as f64);
        let data = self
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        Ok(Tensor::from_op(
            "global_avg_pool",
            data,
            vec![n, c],
            vec![self.clone()],
            move |ctx| {
                let g = ctx
                    .grad
                    .iter()
                    .flat_map(|&g| std::iter::repeat_n(g * inv, hw))
                    .collect();
                vec![Some(g)]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::<f64>::parameter(vec![0.3, -2.0, 5.0, 1.0, 7.0, 0.0], &[2, 3]).unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        let x = Tensor::<f64>::parameter(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        x.mul(&x).unwrap().mean().backward().unwrap();
        let g = x.grad().unwrap();
        for (a, b) in g.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let x = Tensor::<f64>::parameter(vec![1.0, -1.0], &[2]).unwrap();
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        let twice = x.grad().unwrap();
        x.zero_grad();
        loss.scale(2.0).backward().unwrap();
        assert_eq!(twice, x.grad().unwrap());
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let x = Tensor::<f64>::parameter(vec![1.0, 2.0], &[2]).unwrap();
        assert!(x.relu().backward().is_err());
    }

    #[test]
    fn global_average_pool_shape_and_value() {
        let x = Tensor::<f64>::new((0..8).map(|v| v as f64).collect(), &[1, 2, 2, 2]).unwrap();
        let p = x.global_avg_pool().unwrap();
        assert_eq!(p.shape(), &[1, 2]);
        assert_eq!(p.data(), &[1.5, 5.5]);
    }
}
