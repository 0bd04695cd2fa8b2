use super::LinearImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ResampleMode {
    /// Area averaging along axes that shrink, bilinear along axes that grow.
    #[default]
    Auto,
    Bilinear,
    Area,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resampler {
    pub height: usize,
    pub width: usize,
    pub mode: ResampleMode,
}

impl Resampler {
    pub fn to(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            mode: ResampleMode::Auto,
        }
    }

    pub fn with_mode(mut self, mode: ResampleMode) -> Self {
        self.mode = mode;
        self
    }
}

/// One output sample as a weighted sum of input samples.
type Taps = Vec<(usize, f64)>;

fn axis_taps(src: usize, dst: usize, mode: ResampleMode) -> Vec<Taps> {
    if src == dst {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    let area = match mode {
        ResampleMode::Auto => dst < src,
        ResampleMode::Area => true,
        ResampleMode::Bilinear => false,
    };
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|j| {
            if area {
                let lo = j as f64 * scale;
                let hi = (j + 1) as f64 * scale;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                (first..last)
                    .filter_map(|i| {
                        let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                        (overlap > 0.0).then_some((i, overlap / scale))
                    })
                    .collect()
            } else {
                let pos = ((j as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                let t = pos - i0 as f64;
                if t == 0.0 || i0 == i1 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - t), (i1, t)]
                }
            }
        })
        .collect()
}

/// Resamples `img` to the target size. Channel count is preserved.
pub fn resize(img: &LinearImage, r: Resampler) -> Result<LinearImage> {
    if r.height == 0 || r.width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 1x1, got {}x{}",
            r.height, r.width
        )));
    }
    let (h, w, c) = img.dims();
    if (h, w) == (r.height, r.width) {
        return Ok(img.clone());
    }
    let col_taps = axis_taps(w, r.width, r.mode);
    let row_taps = axis_taps(h, r.height, r.mode);

    // Horizontal pass into an h x width x c buffer.
    let src = img.data();
    let mut tmp = vec![0.0f64; h * r.width * c];
    for y in 0..h {
        for (x, taps) in col_taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(i, wt) in taps {
                    acc += wt * src[(y * w + i) * c + ch] as f64;
                }
                tmp[(y * r.width + x) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; r.height * r.width * c];
    for (y, taps) in row_taps.iter().enumerate() {
        for x in 0..r.width {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(i, wt) in taps {
                    acc += wt * tmp[(i * r.width + x) * c + ch];
                }
                out[(y * r.width + x) * c + ch] = acc as f32;
            }
        }
    }
    LinearImage::new(r.height, r.width, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_from(h: usize, w: usize, c: usize, data: Vec<f32>) -> LinearImage {
        LinearImage::new(h, w, c, data).unwrap()
    }

    #[test]
    fn constant_stays_constant() {
        let img = LinearImage::filled(6, 10, 3, 0.7);
        for (th, tw) in [(3, 5), (12, 20), (7, 3), (1, 1), (13, 4)] {
            let out = resize(&img, Resampler::to(th, tw)).unwrap();
            for &v in out.data() {
                assert!((v - 0.7).abs() < 1e-6, "{th}x{tw}: {v}");
            }
        }
    }

    #[test]
    fn two_by_two_area_mean() {
        let img = image_from(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]);
        let out = resize(&img, Resampler::to(1, 1)).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn zero_target_is_an_error() {
        let img = LinearImage::filled(4, 4, 1, 0.0);
        assert!(resize(&img, Resampler::to(0, 4)).is_err());
    }

    #[test]
    fn same_size_is_exact_copy() {
        let img = image_from(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(resize(&img, Resampler::to(2, 2)).unwrap(), img);
    }

    fn arb_image(h: usize, w: usize) -> impl Strategy<Value = LinearImage> {
        proptest::collection::vec(0.0f32..1.0, h * w * 3).prop_map(move |d| image_from(h, w, 3, d))
    }

    proptest! {
        #[test]
        fn area_downscale_preserves_mean(img in arb_image(8, 8)) {
            let out = resize(&img, Resampler::to(4, 4)).unwrap();
            prop_assert!((out.mean() - img.mean()).abs() < 1e-6);
        }

        #[test]
        fn resize_is_linear(
            x in arb_image(6, 9),
            y in arb_image(6, 9),
            a in 0.0f32..2.0,
            b in 0.0f32..2.0,
            (th, tw) in (1usize..14, 1usize..14),
        ) {
            let r = Resampler::to(th, tw);
            let combo = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
            let lhs = resize(&combo, r).unwrap();
            let rx = resize(&x, r).unwrap();
            let ry = resize(&y, r).unwrap();
            let rhs = rx.zip_map(&ry, |p, q| a * p + b * q).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((l - r).abs() < 1e-6);
            }
        }

        #[test]
        fn bilinear_upscale_stays_within_bounds(img in arb_image(5, 7)) {
            let out = resize(&img, Resampler::to(17, 23).with_mode(ResampleMode::Bilinear)).unwrap();
            prop_assert!(out.min_value() >= img.min_value());
            prop_assert!(out.max_value() <= img.max_value());
        }
    }
}
