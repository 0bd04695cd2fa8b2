use rayon::prelude::*;

use super::super::{Real, Tensor};
use crate::error::{Error, Result};

/// How out-of-bounds taps are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Zero,
    /// Clamp to the nearest edge pixel.
    Replicate,
}

#[derive(Clone, Copy, Debug)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
}

impl Conv2dSpec {
    /// 3x3-friendly "same" convolution at the given stride.
    pub fn same(kernel: usize, stride: usize) -> Self {
        Self {
            stride,
            pad: kernel / 2,
            padding: Padding::Zero,
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    padding: Padding,
}

impl Geometry {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Source coordinate for an output position and kernel tap, if any.
    #[inline]
    fn source(&self, o: usize, tap: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + tap) as isize - self.pad as isize;
        if pos >= 0 && (pos as usize) < extent {
            Some(pos as usize)
        } else {
            match self.padding {
                Padding::Zero => None,
                Padding::Replicate => Some(pos.clamp(0, extent as isize - 1) as usize),
            }
        }
    }

    /// Column matrix `(cin*kh*kw) x (oh*ow)` for one sample.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.p();
        for ci in 0..self.cin {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let sy = self.source(oy, ky, self.h);
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match (sy, self.source(ox, kx, self.w)) {
                                (Some(y), Some(xx)) => plane[y * self.w + xx],
                                _ => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatter-add columns back into the input plane.
    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.p();
        for ci in 0..self.cin {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let Some(y) = self.source(oy, ky, self.h) else { continue };
                        for ox in 0..self.ow {
                            if let Some(xx) = self.source(ox, kx, self.w) {
                                plane[y * self.w + xx] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// 2-D convolution (cross-correlation). `weight` is `(Cout, Cin, KH, KW)`,
    /// `bias` is `(Cout)`.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, spec: Conv2dSpec) -> Result<Tensor<T>> {
        let (n, cin, h, w) = self.dims4()?;
        let (cout, wcin, kh, kw) = weight.dims4()?;
        if wcin != cin {
            return Err(Error::shape("conv2d", self.shape(), weight.shape()));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::shape("conv2d bias", b.shape(), &[cout]));
            }
        }
        if spec.stride == 0 || h + 2 * spec.pad < kh || w + 2 * spec.pad < kw {
            return Err(Error::shape("conv2d", self.shape(), weight.shape()));
        }
        let g = Geometry {
            cin,
            h,
            w,
            kh,
            kw,
            oh: (h + 2 * spec.pad - kh) / spec.stride + 1,
            ow: (w + 2 * spec.pad - kw) / spec.stride + 1,
            stride: spec.stride,
            pad: spec.pad,
            padding: spec.padding,
        };
        let (k, p) = (g.k(), g.p());
        let wd = weight.data();
        let bd = bias.map(|b| b.data());
        let mut out = vec![T::zero(); n * cout * p];
        out.par_chunks_mut(cout * p)
            .zip(self.data().par_chunks(cin * h * w))
            .for_each(|(dst, x)| {
                let mut cols = vec![T::zero(); k * p];
                g.im2col(x, &mut cols);
                if let Some(bd) = bd {
                    for (co, row) in dst.chunks_exact_mut(p).enumerate() {
                        row.fill(bd[co]);
                    }
                }
                let beta = if bd.is_some() { T::one() } else { T::zero() };
                T::gemm(cout, k, p, T::one(), wd, false, &cols, false, beta, dst);
            });

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op("conv2d", out, vec![n, cout, g.oh, g.ow], parents, move |ctx| {
            let x = ctx.parents[0].data();
            let wd = ctx.parents[1].data();
            let need_x = ctx.needs(0);
            let need_w = ctx.needs(1);
            // Per-sample (dx, dW) computed independently, dW reduced in order.
            let per_sample: Vec<(Vec<T>, Vec<T>)> = ctx
                .grad
                .par_chunks(cout * p)
                .zip(x.par_chunks(cin * h * w))
                .map(|(gy, xs)| {
                    let mut dw = Vec::new();
                    if need_w {
                        let mut cols = vec![T::zero(); k * p];
                        g.im2col(xs, &mut cols);
                        dw = vec![T::zero(); cout * k];
                        T::gemm(cout, p, k, T::one(), gy, false, &cols, true, T::zero(), &mut dw);
                    }
                    let mut dx = Vec::new();
                    if need_x {
                        let mut dcols = vec![T::zero(); k * p];
                        T::gemm(k, cout, p, T::one(), wd, true, gy, false, T::zero(), &mut dcols);
                        dx = vec![T::zero(); cin * h * w];
                        g.col2im(&dcols, &mut dx);
                    }
                    (dx, dw)
                })
                .collect();
            let gx = need_x.then(|| per_sample.iter().flat_map(|(dx, _)| dx.iter().copied()).collect());
            let gw = need_w.then(|| {
                let mut acc = vec![T::zero(); cout * k];
                for (_, dw) in &per_sample {
                    acc.iter_mut().zip(dw).for_each(|(a, &b)| *a += b);
                }
                acc
            });
            let mut grads = vec![gx, gw];
            if ctx.parents.len() == 3 {
                grads.push(ctx.needs(2).then(|| {
                    let mut gb = vec![T::zero(); cout];
                    for sample in ctx.grad.chunks_exact(cout * p) {
                        for (co, row) in sample.chunks_exact(p).enumerate() {
                            gb[co] += row.iter().fold(T::zero(), |a, &v| a + v);
                        }
                    }
                    gb
                }));
            }
            grads
        }))
    }

    /// Dense layer: `(N, K) x (O, K)^T + (O)`.
    pub fn linear(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, k) = match self.shape() {
            &[n, k] => (n, k),
            s => return Err(Error::shape("linear", s, weight.shape())),
        };
        let o = match weight.shape() {
            &[o, wk] if wk == k => o,
            s => return Err(Error::shape("linear", self.shape(), s)),
        };
        if bias.shape() != [o] {
            return Err(Error::shape("linear bias", bias.shape(), &[o]));
        }
        let mut out = Vec::with_capacity(n * o);
        for _ in 0..n {
            out.extend_from_slice(bias.data());
        }
        T::gemm(n, k, o, T::one(), self.data(), false, weight.data(), true, T::one(), &mut out);
        Ok(Tensor::from_op(
            "linear",
            out,
            vec![n, o],
            vec![self.clone(), weight.clone(), bias.clone()],
            move |ctx| {
                let x = ctx.parents[0].data();
                let wd = ctx.parents[1].data();
                let gx = ctx.needs(0).then(|| {
                    let mut gx = vec![T::zero(); n * k];
                    T::gemm(n, o, k, T::one(), ctx.grad, false, wd, false, T::zero(), &mut gx);
                    gx
                });
                let gw = ctx.needs(1).then(|| {
                    let mut gw = vec![T::zero(); o * k];
                    T::gemm(o, n, k, T::one(), ctx.grad, true, x, false, T::zero(), &mut gw);
                    gw
                });
                let gb = ctx.needs(2).then(|| {
                    let mut gb = vec![T::zero(); o];
                    for row in ctx.grad.chunks_exact(o) {
                        gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                    gb
                });
                vec![gx, gw, gb]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution with zero padding.
    fn reference_conv(
        x: &[f64],
        (n, cin, h, w): (usize, usize, usize, usize),
        wt: &[f64],
        (cout, kh, kw): (usize, usize, usize),
        bias: &[f64],
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; n * cout * oh * ow];
        for b in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let y = (oy * stride + ky) as isize - pad as isize;
                                    let xx = (ox * stride + kx) as isize - pad as isize;
                                    if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                        continue;
                                    }
                                    acc += x[((b * cin + ci) * h + y as usize) * w + xx as usize]
                                        * wt[((co * cin + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::<f64>::new((0..9).map(|v| v as f64 * 0.1).collect(), &[1, 1, 3, 3]).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let k = Tensor::new(k, &[1, 1, 3, 3]).unwrap();
        let y = x.conv2d(&k, None, Conv2dSpec::same(3, 1)).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matches_nested_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..2 * 8 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ws: Vec<f64> = (0..4 * 2 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new(xs.clone(), &[1, 2, 8, 8]).unwrap();
        let w = Tensor::new(ws.clone(), &[4, 2, 3, 3]).unwrap();
        let b = Tensor::new(bs.clone(), &[4]).unwrap();
        for stride in [1, 2] {
            let y = x.conv2d(&w, Some(&b), Conv2dSpec::same(3, stride)).unwrap();
            let r = reference_conv(&xs, (1, 2, 8, 8), &ws, (4, 3, 3), &bs, stride, 1);
            assert_eq!(y.data().len(), r.len());
            for (a, e) in y.data().iter().zip(&r) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn replicate_padding_keeps_constants_constant() {
        let x = Tensor::<f64>::full(&[1, 1, 5, 5], 0.3);
        let w = Tensor::new((0..9).map(|v| v as f64 * 0.1 - 0.2).collect(), &[1, 1, 3, 3]).unwrap();
        let y = x
            .conv2d(&w, None, Conv2dSpec::same(3, 2).with_padding(Padding::Replicate))
            .unwrap();
        let first = y.data()[0];
        assert!(y.data().iter().all(|&v| (v - first).abs() < 1e-12));
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
        let w = Tensor::<f32>::zeros(&[2, 2, 3, 3]);
        assert!(x.conv2d(&w, None, Conv2dSpec::same(3, 1)).is_err());
    }

    #[test]
    fn linear_forward() {
        let x = Tensor::<f64>::new(vec![1.0, 2.0], &[1, 2]).unwrap();
        let w = Tensor::new(vec![1.0, 0.0, 0.5, 0.5, -1.0, 1.0], &[3, 2]).unwrap();
        let b = Tensor::new(vec![0.0, 1.0, 0.0], &[3]).unwrap();
        assert_eq!(x.linear(&w, &b).unwrap().data(), &[1.0, 2.5, 1.0]);
    }
}
