//! Elementwise ops. Binary ops broadcast numpy-style (trailing alignment,
//! size-1 axes stretch), which covers the scalar and per-channel cases the
//! models need.

use super::super::{tensor::numel, Real, Tensor};
use crate::error::{Error, Result};

/// Division guard: `x / y` is evaluated as `x * (1 / max(y, DIV_EPSILON))`.
pub const DIV_EPSILON: f64 = 1e-6;

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat index of `out`, the flat index of the broadcast source.
pub(crate) fn broadcast_map(out: &[usize], src: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let pad = rank - src.len();
    let mut src_strides = vec![0usize; rank];
    let mut stride = 1;
    for i in (0..src.len()).rev() {
        src_strides[i + pad] = if src[i] == 1 { 0 } else { stride };
        stride *= src[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..total {
        map.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out[d] {
                break;
            }
            offset -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn tag(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a * (T::one() / b.max(T::lit(DIV_EPSILON))),
        }
    }

    /// Partial derivatives with respect to `a` and `b`.
    #[inline]
    fn partials<T: Real>(self, a: T, b: T) -> (T, T) {
        match self {
            Binary::Add => (T::one(), T::one()),
            Binary::Sub => (T::one(), -T::one()),
            Binary::Mul => (b, a),
            Binary::Div => {
                let eps = T::lit(DIV_EPSILON);
                if b > eps {
                    let inv = T::one() / b;
                    (inv, -a * inv * inv)
                } else {
                    (T::one() / eps, T::zero())
                }
            }
        }
    }
}

fn binary<T: Real>(kind: Binary, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let out_shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape(kind.tag(), a.shape(), b.shape()))?;
    let same_a = a.shape() == out_shape.as_slice();
    let same_b = b.shape() == out_shape.as_slice();
    let map_a = (!same_a).then(|| broadcast_map(&out_shape, a.shape()));
    let map_b = (!same_b).then(|| broadcast_map(&out_shape, b.shape()));
    let n = numel(&out_shape);
    let (ad, bd) = (a.data(), b.data());
    let ia = |i: usize| map_a.as_ref().map_or(i, |m| m[i]);
    let ib = |i: usize| map_b.as_ref().map_or(i, |m| m[i]);
    let data: Vec<T> = if same_a && same_b {
        ad.iter().zip(bd).map(|(&x, &y)| kind.apply(x, y)).collect()
    } else {
        (0..n).map(|i| kind.apply(ad[ia(i)], bd[ib(i)])).collect()
    };

    Ok(Tensor::from_op(
        kind.tag(),
        data,
        out_shape,
        vec![a.clone(), b.clone()],
        move |ctx| {
            let (a, b) = (&ctx.parents[0], &ctx.parents[1]);
            let (ad, bd) = (a.data(), b.data());
            let ia = |i: usize| map_a.as_ref().map_or(i, |m| m[i]);
            let ib = |i: usize| map_b.as_ref().map_or(i, |m| m[i]);
            let mut ga = ctx.needs(0).then(|| vec![T::zero(); a.numel()]);
            let mut gb = ctx.needs(1).then(|| vec![T::zero(); b.numel()]);
            for (i, &g) in ctx.grad.iter().enumerate() {
                let (ja, jb) = (ia(i), ib(i));
                let (da, db) = kind.partials(ad[ja], bd[jb]);
                if let Some(ga) = ga.as_mut() {
                    ga[ja] += g * da;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[jb] += g * db;
                }
            }
            vec![ga, gb]
        },
    ))
}

#[derive(Clone, Copy)]
enum Unary {
    Abs,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Softplus,
    Affine(f64, f64),
}

impl Unary {
    fn tag(self) -> &'static str {
        match self {
            Unary::Abs => "abs",
            Unary::Relu => "relu",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Affine(..) => "affine",
        }
    }

    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Unary::Abs => x.abs(),
            Unary::Relu => x.max(T::zero()),
            Unary::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(s)
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => {
                if x > T::lit(20.0) {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
            Unary::Affine(s, b) => x * T::lit(s) + T::lit(b),
        }
    }

    /// Derivative given input `x` and output `y`.
    #[inline]
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            // Subgradient 0 at the kink.
            Unary::Abs => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Unary::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Unary::LeakyRelu(s) => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(s)
                }
            }
            Unary::Sigmoid => y * (T::one() - y),
            Unary::Softplus => sigmoid(x),
            Unary::Affine(s, _) => T::lit(s),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn unary<T: Real>(kind: Unary, x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::from_op(kind.tag(), data, x.shape().to_vec(), vec![x.clone()], move |ctx| {
        let xd = ctx.parents[0].data();
        let g = ctx
            .grad
            .iter()
            .zip(xd)
            .zip(ctx.output)
            .map(|((&g, &x), &y)| g * kind.derivative(x, y))
            .collect();
        vec![Some(g)]
    })
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(Binary::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(Binary::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(Binary::Mul, self, other)
    }

    /// Guarded division, `self * (1 / max(other, DIV_EPSILON))`.
    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(Binary::Div, self, other)
    }

    pub fn abs(&self) -> Tensor<T> {
        unary(Unary::Abs, self)
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(Unary::Relu, self)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        unary(Unary::LeakyRelu(slope), self)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        unary(Unary::Sigmoid, self)
    }

    pub fn softplus(&self) -> Tensor<T> {
        unary(Unary::Softplus, self)
    }

    /// `scale * self + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Tensor<T> {
        unary(Unary::Affine(scale, shift), self)
    }

    pub fn scale(&self, s: f64) -> Tensor<T> {
        self.affine(s, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4, 4], &[2, 1, 4, 4]), Some(vec![2, 3, 4, 4]));
        assert_eq!(broadcast_shape(&[2, 3, 4, 4], &[2, 3, 1, 1]), Some(vec![2, 3, 4, 4]));
        assert_eq!(broadcast_shape(&[2, 3, 4, 4], &[1]), Some(vec![2, 3, 4, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[3, 3]), None);
    }

    #[test]
    fn broadcast_map_per_channel() {
        // (1, 2, 1, 2) from (1, 2, 1, 1)
        assert_eq!(broadcast_map(&[1, 2, 1, 2], &[1, 2, 1, 1]), vec![0, 0, 1, 1]);
        // (1, 2, 1, 2) from (1, 1, 1, 2)
        assert_eq!(broadcast_map(&[1, 2, 1, 2], &[1, 1, 1, 2]), vec![0, 1, 0, 1]);
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::<f64>::new(vec![-1.0, 0.0, 2.0], &[3]).unwrap();
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn div_guard_semantics() {
        let x = Tensor::<f64>::new(vec![2.0, 3.0], &[2]).unwrap();
        let y = Tensor::<f64>::new(vec![0.0, 0.5], &[2]).unwrap();
        let q = x.div(&y).unwrap();
        assert_eq!(q.data()[0], 2.0 / 1e-6);
        assert_eq!(q.data()[1], 6.0);
    }

    #[test]
    fn mismatched_shapes_name_the_op() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[3, 2]);
        let err = a.mul(&b).unwrap_err().to_string();
        assert!(err.contains("mul") && err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn broadcast_backward_sums_over_stretched_axes() {
        let a = Tensor::<f64>::parameter(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let c = Tensor::<f64>::parameter(vec![10.0, 20.0], &[1, 2, 1, 1]).unwrap();
        a.mul(&c).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![30.0; 4]);
        assert_eq!(c.grad().unwrap(), vec![10.0, 10.0]);
    }
}
