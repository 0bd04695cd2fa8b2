//! Keying, compositing and brightness normalization for captured
//! flash/no-flash plates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{median, LinearImage};

/// Soft band on the green-dominance distance: below `inner` a pixel is
/// background (alpha 0), above `outer` foreground (alpha 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyThresholds {
    pub inner: f32,
    pub outer: f32,
}

impl Default for KeyThresholds {
    fn default() -> Self {
        Self { inner: 0.3, outer: 0.8 }
    }
}

/// `(G - max(R, B)) / max(R, G, B)`, in `[-1, 1]`; zero for black.
fn green_dominance(p: &[f32]) -> f32 {
    let peak = p[0].max(p[1]).max(p[2]);
    if peak <= 0.0 {
        return 0.0;
    }
    (p[1] - p[0].max(p[2])) / peak
}

/// Single-channel alpha matte from the distance to the key colour in
/// green-dominance space.
pub fn chroma_key(fg: &LinearImage, key: [f32; 3], t: KeyThresholds) -> Result<LinearImage> {
    if fg.channels() != 3 {
        return Err(Error::InvalidArgument("chroma key needs a 3-channel image".into()));
    }
    if !(t.outer > t.inner) {
        return Err(Error::InvalidArgument(format!("key thresholds {t:?} need inner < outer")));
    }
    let target = green_dominance(&key);
    let alpha = fg
        .data()
        .chunks_exact(3)
        .map(|p| {
            let d = (green_dominance(p) - target).abs();
            ((d - t.inner) / (t.outer - t.inner)).clamp(0.0, 1.0)
        })
        .collect();
    LinearImage::new(fg.height(), fg.width(), 1, alpha)
}

fn blend(alpha: &LinearImage, fg: &LinearImage, bg: &LinearImage) -> Result<LinearImage> {
    let c = fg.channels();
    let data = fg
        .data()
        .iter()
        .zip(bg.data())
        .enumerate()
        .map(|(i, (&f, &b))| {
            let a = alpha.data()[i / c];
            a * f + (1.0 - a) * b
        })
        .collect();
    LinearImage::new(fg.height(), fg.width(), c, data)
}

/// Linear-light alpha compositing of both plates over their backgrounds.
pub fn composite_pair(
    fg_flash: &LinearImage,
    fg_noflash: &LinearImage,
    alpha: &LinearImage,
    bg_flash: &LinearImage,
    bg_noflash: &LinearImage,
) -> Result<(LinearImage, LinearImage)> {
    for other in [fg_noflash, bg_flash, bg_noflash] {
        if !fg_flash.same_dims(other) {
            return Err(Error::shape(
                "composite_pair",
                &[fg_flash.height(), fg_flash.width(), fg_flash.channels()],
                &[other.height(), other.width(), other.channels()],
            ));
        }
    }
    if alpha.channels() != 1 || !alpha.same_size(fg_flash) {
        return Err(Error::shape(
            "composite_pair",
            &[fg_flash.height(), fg_flash.width(), 1],
            &[alpha.height(), alpha.width(), alpha.channels()],
        ));
    }
    Ok((blend(alpha, fg_flash, bg_flash)?, blend(alpha, fg_noflash, bg_noflash)?))
}

/// Scales both images by one factor so the no-flash median luminance equals
/// `target`. A shared factor keeps `P = A + F` intact.
pub fn normalize_brightness(photo: &LinearImage, ambient: &LinearImage, target: f64) -> Result<(LinearImage, LinearImage)> {
    if !photo.same_dims(ambient) {
        return Err(Error::shape(
            "normalize_brightness",
            &[photo.height(), photo.width(), photo.channels()],
            &[ambient.height(), ambient.width(), ambient.channels()],
        ));
    }
    let mut lum: Vec<f64> = ambient.luminance().data().iter().map(|&v| f64::from(v)).collect();
    let m = median(&mut lum);
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("no-flash image has zero median luminance".into()));
    }
    let s = (target / m) as f32;
    Ok((photo.scale(s), ambient.scale(s)))
}
