//! Flash photograph formation: a photograph is the sum of an ambient and a
//! flash illumination sharing one albedo,
//!
//! ```text
//! P = A + F,   A = R * c_A * S_A,   F = R * S_F
//! ```
//!
//! Every operation here evaluates the tensor definition in [`diff`] on
//! `f32`, so the image and tensor flavours cannot drift apart.

pub mod diff;
mod temperature;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use temperature::{
    ambient_color, kelvin_to_rgb, kelvin_to_t_norm, t_norm_to_kelvin, AmbientLight, FLASH_KELVIN,
    K_MAX, K_MIN,
};

use crate::autodiff::{Tensor, DIV_EPSILON};
use crate::error::{Error, Result};
use crate::imgcore::{read_pfm, write_pfm, LinearImage};

/// Denominator guard used by the implied albedo.
pub const EPSILON: f64 = DIV_EPSILON;

/// A single-channel, nonnegative map of received light.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadingMap(LinearImage);

impl ShadingMap {
    pub fn new(img: LinearImage) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::InvalidArgument(format!(
                "shading must have one channel, got {}",
                img.channels()
            )));
        }
        if !img.is_nonnegative() {
            return Err(Error::InvalidArgument("shading has negative values".into()));
        }
        Ok(Self(img))
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(LinearImage::filled(height, width, 1, value))
    }

    pub fn image(&self) -> &LinearImage {
        &self.0
    }

    pub fn into_image(self) -> LinearImage {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

/// Per-pixel flags for where the albedo denominator cleared the guard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    valid: Vec<bool>,
}

impl ValidityMask {
    pub fn all(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            valid: vec![true; height * width],
        }
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Flags in row-major pixel order.
    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Albedo, both shadings and the ambient light of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicComponents {
    pub albedo: LinearImage,
    pub s_a: ShadingMap,
    pub s_f: ShadingMap,
    pub ambient: AmbientLight,
}

impl IntrinsicComponents {
    pub fn new(albedo: LinearImage, s_a: ShadingMap, s_f: ShadingMap, ambient: AmbientLight) -> Result<Self> {
        check_rgb("albedo", &albedo)?;
        check_pair(&albedo, &s_a, &s_f)?;
        if !albedo.is_nonnegative() {
            return Err(Error::InvalidArgument("albedo has negative values".into()));
        }
        Ok(Self { albedo, s_a, s_f, ambient })
    }
}

/// A photograph separated into shadings, albedo and the two illuminations.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionResult {
    pub s_a: ShadingMap,
    pub s_f: ShadingMap,
    pub ambient: AmbientLight,
    pub albedo: LinearImage,
    pub ambient_image: LinearImage,
    pub flash_image: LinearImage,
    pub valid: ValidityMask,
    /// SHA-256 of the source photograph's little-endian pixel bytes.
    pub source_hash: String,
}

#[derive(Serialize, Deserialize)]
struct DecompositionMeta {
    kelvin: f64,
    t_norm: f64,
    #[serde(rename = "c_A")]
    c_a: [f32; 3],
    epsilon: f64,
    source_hash: String,
}

const COMPONENT_FILES: [&str; 5] = ["S_A", "S_F", "R", "A", "F"];

impl DecompositionResult {
    /// Writes `S_A.pfm`, `S_F.pfm`, `R.pfm`, `A.pfm`, `F.pfm` and `meta.json`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let images = [
            self.s_a.image(),
            self.s_f.image(),
            &self.albedo,
            &self.ambient_image,
            &self.flash_image,
        ];
        for (name, img) in COMPONENT_FILES.iter().zip(images) {
            write_pfm(img, dir.join(format!("{name}.pfm")))?;
        }
        let meta = DecompositionMeta {
            kelvin: self.ambient.kelvin,
            t_norm: self.ambient.t_norm,
            c_a: self.ambient.c_a,
            epsilon: EPSILON,
            source_hash: self.source_hash.clone(),
        };
        let path = dir.join("meta.json");
        fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("meta.json");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DecompositionMeta = serde_json::from_slice(&bytes)?;
        let mut ambient = AmbientLight::from_kelvin(meta.kelvin)?;
        ambient.t_norm = meta.t_norm;
        ambient.c_a = meta.c_a;
        let [s_a, s_f, albedo, ambient_image, flash_image] =
            COMPONENT_FILES.map(|name| read_pfm(dir.join(format!("{name}.pfm"))));
        let (s_a, s_f) = (ShadingMap::new(s_a?)?, ShadingMap::new(s_f?)?);
        let albedo = albedo?;
        check_pair(&albedo, &s_a, &s_f)?;
        let valid = validity_mask(&s_a, &s_f, &ambient)?;
        Ok(Self {
            s_a,
            s_f,
            ambient,
            albedo,
            ambient_image: ambient_image?,
            flash_image: flash_image?,
            valid,
            source_hash: meta.source_hash,
        })
    }

    /// `Â + F̂`.
    pub fn reconstruction(&self) -> Result<LinearImage> {
        self.ambient_image.zip_map(&self.flash_image, |a, f| a + f)
    }
}

fn check_rgb(what: &str, img: &LinearImage) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "{what} must have three channels, got {}",
            img.channels()
        )));
    }
    Ok(())
}

fn check_pair(like: &LinearImage, s_a: &ShadingMap, s_f: &ShadingMap) -> Result<()> {
    for s in [s_a, s_f] {
        if !like.same_size(s.image()) {
            return Err(Error::shape(
                "shading",
                &[like.height(), like.width()],
                &[s.height(), s.width()],
            ));
        }
    }
    Ok(())
}

fn color_tensor(c: [f32; 3]) -> Tensor<f32> {
    Tensor::new(c.to_vec(), &[1, 3]).expect("three values")
}

fn to_image(t: &Tensor<f32>) -> Result<LinearImage> {
    LinearImage::from_tensor(t, 0)
}

/// Hex SHA-256 of an image's pixel bytes.
pub fn image_hash(img: &LinearImage) -> String {
    hex::encode(Sha256::digest(img.to_le_bytes()))
}

/// `(P, A, F)` for the given components.
pub fn compose_flash_photograph(c: &IntrinsicComponents) -> Result<(LinearImage, LinearImage, LinearImage)> {
    let (p, a, f) = diff::compose(
        &c.albedo.to_tensor(),
        &c.s_a.image().to_tensor(),
        &c.s_f.image().to_tensor(),
        &color_tensor(c.ambient.c_a),
    )?;
    Ok((to_image(&p)?, to_image(&a)?, to_image(&f)?))
}

/// Pixels where every channel of `c_A S_A + S_F` is at least [`EPSILON`].
pub fn validity_mask(s_a: &ShadingMap, s_f: &ShadingMap, ambient: &AmbientLight) -> Result<ValidityMask> {
    if !s_a.image().same_size(s_f.image()) {
        return Err(Error::shape(
            "validity_mask",
            &[s_a.height(), s_a.width()],
            &[s_f.height(), s_f.width()],
        ));
    }
    let den = diff::total_shading(
        &s_a.image().to_tensor(),
        &s_f.image().to_tensor(),
        &color_tensor(ambient.c_a),
    )?;
    let den = to_image(&den)?;
    let eps = EPSILON as f32;
    let valid = den.data().chunks_exact(3).map(|px| px.iter().all(|&d| d >= eps)).collect();
    Ok(ValidityMask {
        height: s_a.height(),
        width: s_a.width(),
        valid,
    })
}

/// `R̂ = P / (c_A S_A + S_F)` with its validity mask.
pub fn implied_albedo(
    photo: &LinearImage,
    s_a: &ShadingMap,
    s_f: &ShadingMap,
    ambient: &AmbientLight,
) -> Result<(LinearImage, ValidityMask)> {
    check_rgb("photograph", photo)?;
    check_pair(photo, s_a, s_f)?;
    let r = diff::implied_albedo(
        &photo.to_tensor(),
        &s_a.image().to_tensor(),
        &s_f.image().to_tensor(),
        &color_tensor(ambient.c_a),
    )?;
    Ok((to_image(&r)?, validity_mask(s_a, s_f, ambient)?))
}

/// Implied albedo followed by `Â = R̂ c_A S_A` and `F̂ = R̂ S_F`.
pub fn split_illuminations(
    photo: &LinearImage,
    s_a: &ShadingMap,
    s_f: &ShadingMap,
    ambient: &AmbientLight,
) -> Result<DecompositionResult> {
    check_rgb("photograph", photo)?;
    check_pair(photo, s_a, s_f)?;
    let (r, a, f) = diff::split(
        &photo.to_tensor(),
        &s_a.image().to_tensor(),
        &s_f.image().to_tensor(),
        &color_tensor(ambient.c_a),
    )?;
    Ok(DecompositionResult {
        s_a: s_a.clone(),
        s_f: s_f.clone(),
        ambient: *ambient,
        albedo: to_image(&r)?,
        ambient_image: to_image(&a)?,
        flash_image: to_image(&f)?,
        valid: validity_mask(s_a, s_f, ambient)?,
        source_hash: image_hash(photo),
    })
}

/// `(F̂, P̂)` with `F̂ = R S_F` and `P̂ = F̂ + c_A A` for a no-flash image `A`
/// white-balanced for its own ambient.
pub fn generate_flash_photograph(
    no_flash: &LinearImage,
    albedo: &LinearImage,
    s_f: &ShadingMap,
    c_a: [f32; 3],
) -> Result<(LinearImage, LinearImage)> {
    check_rgb("no-flash image", no_flash)?;
    if !no_flash.same_dims(albedo) {
        return Err(Error::shape(
            "generate",
            &[no_flash.height(), no_flash.width(), no_flash.channels()],
            &[albedo.height(), albedo.width(), albedo.channels()],
        ));
    }
    let (f, p) = diff::generate(
        &no_flash.to_tensor(),
        &albedo.to_tensor(),
        &s_f.image().to_tensor(),
        &color_tensor(c_a),
    )?;
    Ok((to_image(&f)?, to_image(&p)?))
}

/// `R̂ (alpha c(kelvin) S_A + kappa S_F)`.
pub fn relight(d: &DecompositionResult, kappa: f64, alpha: f64, kelvin: f64) -> Result<LinearImage> {
    for (name, v) in [("kappa", kappa), ("alpha", alpha)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::OutOfRange(format!("{name} must be a finite value >= 0, got {v}")));
        }
    }
    let target = AmbientLight::from_kelvin(kelvin)?;
    let out = diff::relight(
        &d.albedo.to_tensor(),
        &d.s_a.image().to_tensor(),
        &d.s_f.image().to_tensor(),
        &color_tensor(target.c_a),
        kappa,
        alpha,
    )?;
    to_image(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f32, hi: f32) -> LinearImage {
        LinearImage::from_fn(h, w, c, |_, _, _| rng.random_range(lo..hi)).unwrap()
    }

    fn random_components(rng: &mut ChaCha8Rng) -> IntrinsicComponents {
        let kelvin = rng.random_range(K_MIN..=K_MAX);
        IntrinsicComponents::new(
            random_image(rng, 6, 5, 3, 0.05, 0.95),
            ShadingMap::new(random_image(rng, 6, 5, 1, 0.0, 2.0)).unwrap(),
            ShadingMap::new(random_image(rng, 6, 5, 1, 0.0, 2.0)).unwrap(),
            AmbientLight::from_kelvin(kelvin).unwrap(),
        )
        .unwrap()
    }

    fn max_abs_diff(a: &LinearImage, b: &LinearImage) -> f32 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    #[test]
    fn constant_scene_composes_to_half() {
        let c = IntrinsicComponents::new(
            LinearImage::filled(4, 4, 3, 0.5),
            ShadingMap::filled(4, 4, 0.4).unwrap(),
            ShadingMap::filled(4, 4, 0.6).unwrap(),
            AmbientLight::flash_white(),
        )
        .unwrap();
        let (p, _, _) = compose_flash_photograph(&c).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn photograph_is_exact_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (p, a, f) = compose_flash_photograph(&random_components(&mut rng)).unwrap();
            for i in 0..p.data().len() {
                assert_eq!(p.data()[i], a.data()[i] + f.data()[i]);
            }
        }
    }

    #[test]
    fn no_flash_means_ambient_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = random_components(&mut rng);
        c.s_f = ShadingMap::filled(6, 5, 0.0).unwrap();
        let (p, a, f) = compose_flash_photograph(&c).unwrap();
        assert_eq!(p, a);
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_shading_is_rejected() {
        let r = LinearImage::filled(4, 4, 3, 0.5);
        let s = ShadingMap::filled(4, 4, 1.0).unwrap();
        let wrong = ShadingMap::filled(4, 3, 1.0).unwrap();
        assert!(IntrinsicComponents::new(r, s, wrong, AmbientLight::flash_white()).is_err());
    }

    #[test]
    fn round_trip_recovers_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = random_components(&mut rng);
            let (p, a, f) = compose_flash_photograph(&c).unwrap();
            let d = split_illuminations(&p, &c.s_a, &c.s_f, &c.ambient).unwrap();
            for y in 0..6 {
                for x in 0..5 {
                    if !d.valid.is_valid(y, x) {
                        continue;
                    }
                    for ch in 0..3 {
                        assert!((d.albedo.get(y, x, ch) - c.albedo.get(y, x, ch)).abs() < 1e-5);
                        assert!((d.ambient_image.get(y, x, ch) - a.get(y, x, ch)).abs() < 1e-5);
                        assert!((d.flash_image.get(y, x, ch) - f.get(y, x, ch)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_photo_has_zero_albedo() {
        let s = ShadingMap::filled(3, 3, 0.7).unwrap();
        let (r, mask) = implied_albedo(&LinearImage::filled(3, 3, 3, 0.0), &s, &s, &AmbientLight::flash_white()).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        assert_eq!(mask.count_valid(), 9);
    }

    #[test]
    fn unlit_pixels_are_guarded_and_flagged() {
        let mut s = LinearImage::filled(2, 2, 1, 0.5);
        s.set(1, 0, 0, 0.0);
        let s = ShadingMap::new(s).unwrap();
        let p = LinearImage::filled(2, 2, 3, 0.25);
        let (r, mask) = implied_albedo(&p, &s, &s, &AmbientLight::flash_white()).unwrap();
        assert!(!mask.is_valid(1, 0));
        assert_eq!(mask.count_valid(), 3);
        let expected = 0.25f32 * (1.0 / EPSILON as f32);
        assert_eq!(r.get(1, 0, 0), expected);
        assert!((r.get(0, 0, 0) - 0.25).abs() < 1e-7);
    }

    #[test]
    fn arbitrary_shadings_reconstruct_photo() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = random_image(&mut rng, 5, 7, 3, 0.0, 2.0);
            let s_a = ShadingMap::new(random_image(&mut rng, 5, 7, 1, 0.01, 3.0)).unwrap();
            let s_f = ShadingMap::new(random_image(&mut rng, 5, 7, 1, 0.01, 3.0)).unwrap();
            let light = AmbientLight::from_kelvin(rng.random_range(K_MIN..=K_MAX)).unwrap();
            let d = split_illuminations(&p, &s_a, &s_f, &light).unwrap();
            assert!(max_abs_diff(&d.reconstruction().unwrap(), &p) < 1e-5);
        }
    }

    #[test]
    fn zero_flash_shading_assigns_everything_to_ambient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_image(&mut rng, 4, 4, 3, 0.0, 1.0);
        let s_a = ShadingMap::new(random_image(&mut rng, 4, 4, 1, 0.1, 1.0)).unwrap();
        let d = split_illuminations(&p, &s_a, &ShadingMap::filled(4, 4, 0.0).unwrap(), &AmbientLight::from_kelvin(4200.0).unwrap()).unwrap();
        assert!(d.flash_image.data().iter().all(|&v| v == 0.0));
        assert!(max_abs_diff(&d.ambient_image, &p) < 1e-6);
    }

    #[test]
    fn generation_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_components(&mut rng);
        let a_wb = compose_flash_photograph(&IntrinsicComponents {
            ambient: AmbientLight::flash_white(),
            ..c.clone()
        })
        .unwrap()
        .1;
        // Zero flash gives the tinted no-flash image.
        let (f, p) = generate_flash_photograph(&a_wb, &c.albedo, &ShadingMap::filled(6, 5, 0.0).unwrap(), c.ambient.c_a).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let tinted = LinearImage::from_fn(6, 5, 3, |y, x, ch| a_wb.get(y, x, ch) * c.ambient.c_a[ch]).unwrap();
        assert_eq!(p, tinted);
        // White ambient with true flash shading rebuilds the photograph.
        let white = IntrinsicComponents { ambient: AmbientLight::flash_white(), ..c.clone() };
        let (p_true, _, _) = compose_flash_photograph(&white).unwrap();
        let (_, p_hat) = generate_flash_photograph(&a_wb, &c.albedo, &c.s_f, [1.0; 3]).unwrap();
        assert!(max_abs_diff(&p_hat, &p_true) < 1e-6);
    }

    #[test]
    fn generated_photo_dominates_tinted_ambient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_image(&mut rng, 4, 4, 3, 0.0, 1.0);
            let r = random_image(&mut rng, 4, 4, 3, 0.0, 1.0);
            let s_f = ShadingMap::new(random_image(&mut rng, 4, 4, 1, 0.0, 2.0)).unwrap();
            let c_a = AmbientLight::from_kelvin(rng.random_range(K_MIN..=K_MAX)).unwrap().c_a;
            let (_, p) = generate_flash_photograph(&a, &r, &s_f, c_a).unwrap();
            for (i, (&pv, &av)) in p.data().iter().zip(a.data()).enumerate() {
                assert!(pv >= av * c_a[i % 3]);
            }
        }
    }

    #[test]
    fn relight_edits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_image(&mut rng, 5, 5, 3, 0.0, 1.0);
        let s_a = ShadingMap::new(random_image(&mut rng, 5, 5, 1, 0.1, 1.0)).unwrap();
        let s_f = ShadingMap::new(random_image(&mut rng, 5, 5, 1, 0.1, 1.0)).unwrap();
        let light = AmbientLight::from_kelvin(3300.0).unwrap();
        let d = split_illuminations(&p, &s_a, &s_f, &light).unwrap();
        assert_eq!(relight(&d, 1.0, 1.0, 3300.0).unwrap(), d.reconstruction().unwrap());
        assert_eq!(relight(&d, 0.0, 1.0, 3300.0).unwrap(), d.ambient_image);
        assert_eq!(relight(&d, 2.0, 0.0, 3300.0).unwrap(), d.flash_image.scale(2.0));
        assert!(max_abs_diff(&relight(&d, 1.0, 1.0, 3300.0).unwrap(), &p) < 1e-5);
        assert!(relight(&d, -0.1, 1.0, 3300.0).is_err());
        assert!(relight(&d, 1.0, 1.0, 10001.0).is_err());
    }

    #[test]
    fn relight_is_monotone_in_strengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_image(&mut rng, 4, 4, 3, 0.0, 1.0);
        let s = ShadingMap::new(random_image(&mut rng, 4, 4, 1, 0.1, 1.0)).unwrap();
        let d = split_illuminations(&p, &s, &s, &AmbientLight::flash_white()).unwrap();
        let mut prev = relight(&d, 0.0, 0.0, 5000.0).unwrap();
        for step in 1..6 {
            let k = step as f64 * 0.4;
            let cur = relight(&d, k, k, 5000.0).unwrap();
            assert!(cur.data().iter().zip(prev.data()).all(|(c, p)| c >= p));
            prev = cur;
        }
    }

    #[test]
    fn decomposition_directory_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = random_components(&mut rng);
        let (p, _, _) = compose_flash_photograph(&c).unwrap();
        let d = split_illuminations(&p, &c.s_a, &c.s_f, &c.ambient).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save_dir(dir.path()).unwrap();
        let back = DecompositionResult::load_dir(dir.path()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.source_hash, image_hash(&p));
    }
}
