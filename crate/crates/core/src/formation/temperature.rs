//! Ambient colour from a single colour temperature.
//!
//! The blackbody chromaticity comes from the Kim et al. cubic-spline fit of
//! the Planckian locus in CIE 1931 xy, converted to linear sRGB (D65). The
//! result is divided channel-wise by the same quantity at the flash
//! temperature and scaled so its largest channel is one, so a 6500 K ambient
//! is exactly white relative to the flash.

use std::ops::{Add, Div, Mul, Sub};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

pub const K_MIN: f64 = 2000.0;
pub const K_MAX: f64 = 10000.0;
pub const FLASH_KELVIN: f64 = 6500.0;

/// Value with a first derivative carried alongside (forward mode).
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }

    fn poly3(self, c3: f64, c2: f64, c1: f64, c0: f64) -> Dual {
        ((self * c3 + c2) * self + c1) * self + c0
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual { v: self.v + o, d: self.d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual { v: self.v * o, d: self.d * o }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.240_454_2, -1.537_138_5, -0.498_531_4],
    [-0.969_266_0, 1.876_010_8, 0.041_556_0],
    [0.055_643_4, -0.204_025_9, 1.057_225_2],
];

/// Linear sRGB of the blackbody at `kelvin` with luminance Y = 1.
fn planckian_rgb(kelvin: Dual) -> [Dual; 3] {
    let inv = Dual::constant(1.0) / kelvin;
    let x = if kelvin.v <= 4000.0 {
        inv.poly3(-0.266_123_9e9, -0.234_358_9e6, 0.877_695_6e3, 0.179_910)
    } else {
        inv.poly3(-3.025_846_9e9, 2.107_037_9e6, 0.222_634_7e3, 0.240_390)
    };
    let y = if kelvin.v <= 2222.0 {
        x.poly3(-1.106_381_4, -1.348_110_20, 2.185_558_32, -0.202_196_83)
    } else if kelvin.v <= 4000.0 {
        x.poly3(-0.954_947_6, -1.374_185_93, 2.091_370_15, -0.167_488_67)
    } else {
        x.poly3(3.081_758_0, -5.873_386_70, 3.751_129_97, -0.370_014_83)
    };
    let one = Dual::constant(1.0);
    let big_x = x / y;
    let big_z = (one - x - y) / y;
    XYZ_TO_SRGB.map(|row| big_x * row[0] + one * row[1] + big_z * row[2])
}

/// Flash-relative ambient colour and its derivative with respect to kelvin.
fn flash_relative(kelvin: f64) -> ([f64; 3], [f64; 3]) {
    let flash = planckian_rgb(Dual::constant(FLASH_KELVIN));
    let rgb = planckian_rgb(Dual { v: kelvin, d: 1.0 });
    let rel: [Dual; 3] = std::array::from_fn(|i| rgb[i] / flash[i]);
    let top = (0..3).max_by(|&a, &b| rel[a].v.total_cmp(&rel[b].v)).expect("three channels");
    let out: [Dual; 3] = std::array::from_fn(|i| if i == top { Dual::constant(1.0) } else { rel[i] / rel[top] });
    (out.map(|d| d.v), out.map(|d| d.d))
}

fn check_kelvin(kelvin: f64) -> Result<()> {
    if !(K_MIN..=K_MAX).contains(&kelvin) {
        return Err(Error::OutOfRange(format!(
            "color temperature {kelvin} K outside [{K_MIN}, {K_MAX}]"
        )));
    }
    Ok(())
}

/// Flash-relative ambient colour `c_A` for a temperature in `[K_MIN, K_MAX]`.
pub fn kelvin_to_rgb(kelvin: f64) -> Result<[f64; 3]> {
    check_kelvin(kelvin)?;
    Ok(flash_relative(kelvin).0)
}

pub fn kelvin_to_t_norm(kelvin: f64) -> f64 {
    (kelvin - K_MIN) / (K_MAX - K_MIN)
}

pub fn t_norm_to_kelvin(t_norm: f64) -> f64 {
    K_MIN + t_norm * (K_MAX - K_MIN)
}

/// A single-colour ambient illuminant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientLight {
    pub kelvin: f64,
    pub t_norm: f64,
    pub c_a: [f32; 3],
}

impl AmbientLight {
    pub fn from_kelvin(kelvin: f64) -> Result<Self> {
        let c = kelvin_to_rgb(kelvin)?;
        Ok(Self {
            kelvin,
            t_norm: kelvin_to_t_norm(kelvin),
            c_a: c.map(|v| v as f32),
        })
    }

    pub fn from_t_norm(t_norm: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_norm) {
            return Err(Error::OutOfRange(format!("normalized temperature {t_norm} outside [0, 1]")));
        }
        // Keep the endpoints exact despite rounding in the affine map.
        let kelvin = t_norm_to_kelvin(t_norm).clamp(K_MIN, K_MAX);
        let mut light = Self::from_kelvin(kelvin)?;
        light.t_norm = t_norm;
        Ok(light)
    }

    pub fn flash_white() -> Self {
        Self::from_kelvin(FLASH_KELVIN).expect("flash temperature is in range")
    }
}

/// Differentiable `t_norm (N, 1) -> c_A (N, 3)`. Inputs are clamped to
/// `[0, 1]` (zero gradient outside).
pub fn ambient_color<T: Real>(t_norm: &Tensor<T>) -> Result<Tensor<T>> {
    let n = match t_norm.shape() {
        &[n, 1] => n,
        s => {
            return Err(Error::InvalidArgument(format!(
                "temperature tensor must be (N, 1), got {s:?}"
            )))
        }
    };
    let mut values = Vec::with_capacity(3 * n);
    let mut slopes = Vec::with_capacity(3 * n);
    for &t in t_norm.data() {
        let t = t.to_f64_lossless();
        let inside = (0.0..=1.0).contains(&t);
        let kelvin = t_norm_to_kelvin(t.clamp(0.0, 1.0)).clamp(K_MIN, K_MAX);
        let (v, dk) = flash_relative(kelvin);
        values.extend(v.map(T::lit));
        let scale = if inside { K_MAX - K_MIN } else { 0.0 };
        slopes.extend(dk.map(|d| T::lit(d * scale)));
    }
    Ok(Tensor::from_op("ambient_color", values, vec![n, 3], vec![t_norm.clone()], move |ctx| {
        let g = ctx
            .grad
            .chunks_exact(3)
            .zip(slopes.chunks_exact(3))
            .map(|(g, s)| g[0] * s[0] + g[1] * s[1] + g[2] * s[2])
            .collect();
        vec![Some(g)]
    }))
}
