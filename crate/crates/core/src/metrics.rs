//! Image quality metrics: PSNR and windowed SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::LinearImage;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub psnr_db: f64,
    pub ssim: f64,
}

/// PSNR and SSIM of `x` against `y`.
pub fn compare(x: &LinearImage, y: &LinearImage) -> Result<MetricResult> {
    Ok(MetricResult {
        psnr_db: psnr(x, y, 1.0)?,
        ssim: ssim(x, y)?,
    })
}

pub fn mse(x: &LinearImage, y: &LinearImage) -> Result<f64> {
    check_dims("mse", x, y)?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum();
    Ok(sum / x.data().len() as f64)
}

/// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(x: &LinearImage, y: &LinearImage, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?, peak))
}

/// Normalized 1-D Gaussian taps.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

fn clamped_luminance(img: &LinearImage) -> Vec<f64> {
    img.luminance().data().iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect()
}

/// Separable Gaussian filter over every fully contained window.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all 11x11 windows of the clamped luminance, Gaussian
/// weighted (sigma 1.5) with `C1 = 0.01^2`, `C2 = 0.03^2`.
pub fn ssim(x: &LinearImage, y: &LinearImage) -> Result<f64> {
    check_dims("ssim", x, y)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let (lx, ly) = (clamped_luminance(x), clamped_luminance(y));
    let taps = gaussian_taps();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_x = filter_valid(&lx, h, w, &taps);
    let mu_y = filter_valid(&ly, h, w, &taps);
    let e_xx = filter_valid(&prod(&lx, &lx), h, w, &taps);
    let e_yy = filter_valid(&prod(&ly, &ly), h, w, &taps);
    let e_xy = filter_valid(&prod(&lx, &ly), h, w, &taps);
    let total: f64 = (0..mu_x.len())
        .map(|i| ssim_window(mu_x[i], mu_y[i], e_xx[i], e_yy[i], e_xy[i]))
        .sum();
    Ok(total / mu_x.len() as f64)
}

fn ssim_window(mu_x: f64, mu_y: f64, e_xx: f64, e_yy: f64, e_xy: f64) -> f64 {
    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let var_x = e_xx - mu_x * mu_x;
    let var_y = e_yy - mu_y * mu_y;
    let cov = e_xy - mu_x * mu_y;
    ((2.0 * mu_x * mu_y + C1) * (2.0 * cov + C2)) / ((mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2))
}

fn check_dims(op: &'static str, x: &LinearImage, y: &LinearImage) -> Result<()> {
    if !x.same_dims(y) {
        return Err(Error::shape(
            op,
            &[x.height(), x.width(), x.channels()],
            &[y.height(), y.width(), y.channels()],
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, h: usize, w: usize, c: usize) -> LinearImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LinearImage::from_fn(h, w, c, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
    }

    /// Direct per-window evaluation with a 2-D kernel.
    fn ssim_reference(x: &LinearImage, y: &LinearImage) -> f64 {
        let (lx, ly) = (x.luminance(), y.luminance());
        let px = |img: &LinearImage, r: usize, c: usize| f64::from(img.get(r, c, 0)).clamp(0.0, 1.0);
        let g = gaussian_taps();
        let (h, w) = (x.height(), x.width());
        let mut total = 0.0;
        let mut count = 0;
        for top in 0..=h - SSIM_WINDOW {
            for left in 0..=w - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let k = g[i] * g[j];
                        let (a, b) = (px(&lx, top + i, left + j), px(&ly, top + i, left + j));
                        mx += k * a;
                        my += k * b;
                        sxx += k * a * a;
                        syy += k * b * b;
                        sxy += k * a * b;
                    }
                }
                let (vx, vy, cv) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                let (c1, c2) = (1e-4, 9e-4);
                total += ((2.0 * mx * my + c1) * (2.0 * cv + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_examples() {
        let a = noise(1, 4, 4, 3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
        assert_eq!(psnr_from_mse(1.0, 1.0), 0.0);
        let zero = LinearImage::filled(2, 2, 1, 0.0);
        let one = LinearImage::filled(2, 2, 1, 1.0);
        assert_eq!(psnr(&zero, &one, 10.0).unwrap(), 20.0);
    }

    #[test]
    fn psnr_is_symmetric_and_monotone() {
        let base = noise(2, 8, 8, 3);
        let n = noise(3, 8, 8, 3);
        let mut prev = f64::INFINITY;
        for step in 1..6 {
            let amp = 0.02 * step as f32;
            let noisy = base.zip_map(&n, |b, e| b + amp * (e - 0.5)).unwrap();
            let p = psnr(&base, &noisy, 1.0).unwrap();
            assert_eq!(p, psnr(&noisy, &base, 1.0).unwrap());
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let a = noise(4, 16, 20, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_inverted_pattern_is_below_one() {
        let x = LinearImage::from_fn(16, 16, 1, |y, x, _| if (x / 4 + y / 4) % 2 == 0 { 0.2 } else { 0.8 }).unwrap();
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 1.0);
    }

    #[test]
    fn ssim_matches_windowed_reference() {
        for seed in 0..5 {
            let a = noise(10 + seed, 17, 23, 3);
            let b = noise(20 + seed, 17, 23, 3);
            let fast = ssim(&a, &b).unwrap();
            assert!((fast - ssim_reference(&a, &b)).abs() < 1e-6);
            assert!((fast - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = noise(5, 10, 40, 1);
        assert!(ssim(&a, &a).is_err());
    }
}
