use std::rc::Rc;

use super::super::{tensor::numel, Real, Tensor};
use super::elementwise::broadcast_map;
use crate::error::{Error, Result};

type Taps = Vec<Vec<(usize, f64)>>;

fn nearest_up_taps(n: usize) -> Taps {
    (0..2 * n).map(|j| vec![(j / 2, 1.0)]).collect()
}

/// Half-pixel-centred linear interpolation with edge clamping, matching
/// `imgcore::resize` for a factor-2 enlargement.
fn bilinear_up_taps(n: usize) -> Taps {
    (0..2 * n)
        .map(|j| {
            let pos = ((j as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            let t = pos - i0 as f64;
            if t == 0.0 || i0 == i1 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - t), (i1, t)]
            }
        })
        .collect()
}

/// Floor semantics: a trailing odd row/column is dropped.
fn avg_down_taps(n: usize) -> Taps {
    (0..n / 2).map(|j| vec![(2 * j, 0.5), (2 * j + 1, 0.5)]).collect()
}

/// Applies the same separable linear map to every `(H, W)` plane.
fn separable<T: Real>(x: &Tensor<T>, tag: &'static str, rows: Taps, cols: Taps) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let (oh, ow) = (rows.len(), cols.len());
    let rows = Rc::new(rows);
    let cols = Rc::new(cols);
    let apply = |src: &[T], dst: &mut [T]| {
        let mut tmp = vec![T::zero(); h * ow];
        for y in 0..h {
            for (ox, taps) in cols.iter().enumerate() {
                let mut acc = T::zero();
                for &(ix, wt) in taps {
                    acc += T::lit(wt) * src[y * w + ix];
                }
                tmp[y * ow + ox] = acc;
            }
        }
        for (oy, taps) in rows.iter().enumerate() {
            for ox in 0..ow {
                let mut acc = T::zero();
                for &(iy, wt) in taps {
                    acc += T::lit(wt) * tmp[iy * ow + ox];
                }
                dst[oy * ow + ox] = acc;
            }
        }
    };
    let mut out = vec![T::zero(); n * c * oh * ow];
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
        apply(src, dst);
    }
    let (rows_b, cols_b) = (Rc::clone(&rows), Rc::clone(&cols));
    Ok(Tensor::from_op(tag, out, vec![n, c, oh, ow], vec![x.clone()], move |ctx| {
        let mut gx = vec![T::zero(); n * c * h * w];
        for (g, dst) in ctx.grad.chunks_exact(oh * ow).zip(gx.chunks_exact_mut(h * w)) {
            let mut tmp = vec![T::zero(); h * ow];
            for (oy, taps) in rows_b.iter().enumerate() {
                for ox in 0..ow {
                    let gv = g[oy * ow + ox];
                    for &(iy, wt) in taps {
                        tmp[iy * ow + ox] += T::lit(wt) * gv;
                    }
                }
            }
            for y in 0..h {
                for (ox, taps) in cols_b.iter().enumerate() {
                    let gv = tmp[y * ow + ox];
                    for &(ix, wt) in taps {
                        dst[y * w + ix] += T::lit(wt) * gv;
                    }
                }
            }
        }
        vec![Some(gx)]
    }))
}

impl<T: Real> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel(shape) != self.numel() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            "reshape",
            self.data().to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            |ctx| vec![Some(ctx.grad.to_vec())],
        ))
    }

    /// Broadcasts to `shape` (size-1 axes stretch).
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let ok = super::elementwise::broadcast_shape(self.shape(), shape).as_deref() == Some(shape);
        if !ok {
            return Err(Error::shape("expand", self.shape(), shape));
        }
        let map = broadcast_map(shape, self.shape());
        let data = map.iter().map(|&i| self.data()[i]).collect();
        let src_len = self.numel();
        Ok(Tensor::from_op("expand", data, shape.to_vec(), vec![self.clone()], move |ctx| {
            let mut g = vec![T::zero(); src_len];
            for (&i, &gv) in map.iter().zip(ctx.grad) {
                g[i] += gv;
            }
            vec![Some(g)]
        }))
    }

    /// Concatenates along axis 1 (channels for images, features for flat tensors).
    pub fn concat(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rank = first.shape().len();
        if rank < 2 {
            return Err(Error::InvalidArgument("concat needs rank >= 2".into()));
        }
        let n = first.shape()[0];
        let inner: usize = first.shape()[2..].iter().product();
        for p in parts {
            if p.shape().len() != rank || p.shape()[0] != n || p.shape()[2..] != first.shape()[2..] {
                return Err(Error::shape("concat", first.shape(), p.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total * inner);
        for b in 0..n {
            for (p, &cw) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[b * cw * inner..(b + 1) * cw * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[1] = total;
        Ok(Tensor::from_op("concat", data, shape, parts.to_vec(), move |ctx| {
            let mut grads: Vec<Vec<T>> = widths.iter().map(|&cw| Vec::with_capacity(n * cw * inner)).collect();
            let mut off = 0;
            for _ in 0..n {
                for (g, &cw) in grads.iter_mut().zip(&widths) {
                    g.extend_from_slice(&ctx.grad[off..off + cw * inner]);
                    off += cw * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Channels `start..start + len` along axis 1.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() < 2 || start + len > shape[1] || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{} out of bounds for shape {shape:?}",
                start + len
            )));
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let mut data = Vec::with_capacity(n * len * inner);
        for b in 0..n {
            let base = (b * c + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[1] = len;
        let src_len = self.numel();
        Ok(Tensor::from_op("slice", data, out_shape, vec![self.clone()], move |ctx| {
            let mut g = vec![T::zero(); src_len];
            for b in 0..n {
                let base = (b * c + start) * inner;
                g[base..base + len * inner]
                    .copy_from_slice(&ctx.grad[b * len * inner..(b + 1) * len * inner]);
            }
            vec![Some(g)]
        }))
    }

    pub fn upsample_nearest2(&self) -> Result<Tensor<T>> {
        let (_, _, h, w) = self.dims4()?;
        separable(self, "upsample_nearest2", nearest_up_taps(h), nearest_up_taps(w))
    }

    pub fn upsample_bilinear2(&self) -> Result<Tensor<T>> {
        let (_, _, h, w) = self.dims4()?;
        separable(self, "upsample_bilinear2", bilinear_up_taps(h), bilinear_up_taps(w))
    }

    /// 2x2 box average with stride 2.
    pub fn avg_pool2(&self) -> Result<Tensor<T>> {
        let (_, _, h, w) = self.dims4()?;
        if h < 2 || w < 2 {
            return Err(Error::InvalidArgument(format!(
                "avg_pool2 needs at least 2x2 planes, got {h}x{w}"
            )));
        }
        separable(self, "avg_pool2", avg_down_taps(h), avg_down_taps(w))
    }

    /// Horizontal forward difference `x[.., i, j+1] - x[.., i, j]`, zero in the last column.
    pub fn diff_x(&self) -> Result<Tensor<T>> {
        forward_difference(self, false)
    }

    /// Vertical forward difference, zero in the last row.
    pub fn diff_y(&self) -> Result<Tensor<T>> {
        forward_difference(self, true)
    }
}

fn forward_difference<T: Real>(x: &Tensor<T>, vertical: bool) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let step = if vertical { w } else { 1 };
    let inside = move |y: usize, xx: usize| if vertical { y + 1 < h } else { xx + 1 < w };
    let mut out = vec![T::zero(); n * c * h * w];
    for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(h * w)) {
        for y in 0..h {
            for xx in 0..w {
                if inside(y, xx) {
                    let i = y * w + xx;
                    dst[i] = src[i + step] - src[i];
                }
            }
        }
    }
    let tag = if vertical { "diff_y" } else { "diff_x" };
    Ok(Tensor::from_op(tag, out, vec![n, c, h, w], vec![x.clone()], move |ctx| {
        let mut g = vec![T::zero(); n * c * h * w];
        for (gp, dst) in ctx.grad.chunks_exact(h * w).zip(g.chunks_exact_mut(h * w)) {
            for y in 0..h {
                for xx in 0..w {
                    if inside(y, xx) {
                        let i = y * w + xx;
                        dst[i + step] += gp[i];
                        dst[i] -= gp[i];
                    }
                }
            }
        }
        vec![Some(g)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn concat_then_slice_recovers_parts() {
        let a = t((0..8).map(f64::from).collect(), &[2, 1, 2, 2]);
        let b = t((10..26).map(f64::from).collect(), &[2, 2, 2, 2]);
        let cat = Tensor::concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(cat.shape(), &[2, 3, 2, 2]);
        assert_eq!(cat.slice_channels(0, 1).unwrap().data(), a.data());
        assert_eq!(cat.slice_channels(1, 2).unwrap().data(), b.data());
    }

    #[test]
    fn avg_pool_of_constant_is_constant() {
        let x = t(vec![0.7; 16], &[1, 1, 4, 4]);
        assert!(x.avg_pool2().unwrap().data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn nearest_upsample_repeats() {
        let x = t(vec![1.0, 2.0], &[1, 1, 1, 2]);
        assert_eq!(x.upsample_nearest2().unwrap().data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn bilinear_upsample_matches_image_resize() {
        use crate::imgcore::{resize, LinearImage, ResampleMode, Resampler};
        let vals: Vec<f32> = (0..12).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        let img = LinearImage::new(3, 4, 1, vals.clone()).unwrap();
        let up = resize(&img, Resampler::to(6, 8).with_mode(ResampleMode::Bilinear)).unwrap();
        let x = Tensor::<f64>::new(vals.iter().map(|&v| v as f64).collect(), &[1, 1, 3, 4]).unwrap();
        let y = x.upsample_bilinear2().unwrap();
        for (a, b) in y.data().iter().zip(up.data()) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_differences_pad_with_zero() {
        let x = t(vec![0.0, 0.1, 0.2, 0.3], &[1, 1, 1, 4]);
        let d = x.diff_x().unwrap();
        let expect = [0.1, 0.1, 0.1, 0.0];
        for (a, b) in d.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(x.diff_y().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expand_and_reshape() {
        let c = t(vec![1.0, 2.0, 3.0], &[1, 3]);
        let e = c.reshape(&[1, 3, 1, 1]).unwrap().expand(&[1, 3, 2, 1]).unwrap();
        assert_eq!(e.data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(c.reshape(&[2, 2]).is_err());
    }
}
