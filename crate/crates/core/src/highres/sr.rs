use super::{ratio_forward, ratio_inverse};
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::imgcore::{resize, LinearImage, ResampleMode, Resampler};
use crate::networks::{EncoderDecoder, Task};

/// Keeps the base ratio's logit finite.
const RATIO_MARGIN: f64 = 1e-6;

/// Predicts a full-resolution ratio image from the upsampled low-resolution
/// ratio and the full-resolution photograph.
pub trait RatioModel {
    fn predict(&self, ratio_up: &LinearImage, photo: &LinearImage) -> Result<LinearImage>;
}

/// Returns the upsampled ratio unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl RatioModel for PassThrough {
    fn predict(&self, ratio_up: &LinearImage, _photo: &LinearImage) -> Result<LinearImage> {
        Ok(ratio_up.clone())
    }
}

/// `sigmoid(logit(base) + net([base, photo]))`. With a zero-initialized head
/// the network starts as a pass-through of `base`.
pub fn refine_ratio<T: Real>(net: &EncoderDecoder<T>, ratio_up: &Tensor<T>, photo: &Tensor<T>) -> Result<Tensor<T>> {
    if net.config().task != Task::Sr {
        return Err(Error::InvalidArgument(format!("expected an sr network, got {}", net.config().task)));
    }
    if ratio_up.shape() != photo.shape() {
        return Err(Error::shape("refine_ratio", ratio_up.shape(), photo.shape()));
    }
    let logits: Vec<T> = ratio_up
        .data()
        .iter()
        .map(|&r| {
            let r = r.to_f64_lossless().clamp(RATIO_MARGIN, 1.0 - RATIO_MARGIN);
            T::lit((r / (1.0 - r)).ln())
        })
        .collect();
    let base = Tensor::new(logits, ratio_up.shape())?;
    let x = Tensor::concat(&[ratio_up.clone(), photo.clone()])?;
    let delta = net.forward(&x)?.heads.swap_remove(0);
    Ok(base.add(&delta)?.sigmoid())
}

impl RatioModel for EncoderDecoder<f32> {
    fn predict(&self, ratio_up: &LinearImage, photo: &LinearImage) -> Result<LinearImage> {
        let r = refine_ratio(self, &ratio_up.to_tensor(), &photo.to_tensor())?;
        LinearImage::from_tensor(&r, 0)
    }
}

/// Low-resolution ratio between `a_low` and the area-downsampled photograph,
/// bilinearly upsampled to the photograph's size.
pub fn upscaled_ratio(photo_full: &LinearImage, a_low: &LinearImage) -> Result<LinearImage> {
    if a_low.channels() != photo_full.channels()
        || a_low.height() > photo_full.height()
        || a_low.width() > photo_full.width()
    {
        return Err(Error::InvalidArgument(format!(
            "low-resolution input {}x{}x{} does not fit the {}x{}x{} photograph",
            a_low.height(),
            a_low.width(),
            a_low.channels(),
            photo_full.height(),
            photo_full.width(),
            photo_full.channels()
        )));
    }
    let low = Resampler::to(a_low.height(), a_low.width()).with_mode(ResampleMode::Area);
    let p_low = resize(photo_full, low)?;
    let r_low = ratio_forward(a_low, &p_low)?;
    let full = Resampler::to(photo_full.height(), photo_full.width()).with_mode(ResampleMode::Bilinear);
    resize(&r_low, full)
}

/// Full-resolution ambient image from a low-resolution estimate guided by
/// the full-resolution photograph.
pub fn guided_sr(photo_full: &LinearImage, a_low: &LinearImage, model: &dyn RatioModel) -> Result<LinearImage> {
    let ratio_up = upscaled_ratio(photo_full, a_low)?;
    let ratio_hr = model.predict(&ratio_up, photo_full)?;
    ratio_inverse(&ratio_hr, photo_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::EncoderDecoderConfig;

    fn scene(h: usize, w: usize) -> (LinearImage, LinearImage) {
        let p = LinearImage::from_fn(h, w, 3, |y, x, c| 0.2 + 0.5 * ((y * 7 + x * 3 + c) % 11) as f32 / 11.0).unwrap();
        let a = p.map(|v| 0.6 * v);
        (p, a)
    }

    #[test]
    fn equal_resolution_pass_through_reproduces_input() {
        let (p, a) = scene(8, 8);
        let out = guided_sr(&p, &a, &PassThrough).unwrap();
        for (x, y) in out.data().iter().zip(a.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn untrained_network_matches_pass_through() {
        let (p, a) = scene(16, 16);
        let a_low = resize(&a, Resampler::to(4, 4)).unwrap();
        let net = EncoderDecoder::<f32>::new(EncoderDecoderConfig::super_resolution(4, 2), 1).unwrap();
        let via_net = guided_sr(&p, &a_low, &net).unwrap();
        let base = ratio_inverse(&upscaled_ratio(&p, &a_low).unwrap(), &p).unwrap();
        for (x, y) in via_net.data().iter().zip(base.data()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_scene_stays_constant() {
        let p = LinearImage::filled(16, 16, 3, 0.6);
        let a_low = LinearImage::filled(4, 4, 3, 0.25);
        let mut net = EncoderDecoder::<f32>::new(EncoderDecoderConfig::super_resolution(4, 2), 3).unwrap();
        // Give the head non-zero weights so the network does real work.
        let values = net
            .params()
            .iter()
            .enumerate()
            .map(|(i, q)| q.value.data().iter().map(|&v| if v == 0.0 { 0.01 * (i % 5) as f32 } else { v }).collect())
            .collect();
        net.params_mut().set_values(values).unwrap();
        let out = guided_sr(&p, &a_low, &net).unwrap();
        for c in 0..3 {
            let first = out.get(0, 0, c);
            for y in 0..16 {
                for x in 0..16 {
                    assert!((out.get(y, x, c) - first).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn oversized_low_input_is_rejected() {
        let (p, a) = scene(8, 8);
        let big = resize(&a, Resampler::to(16, 16)).unwrap();
        assert!(guided_sr(&p, &big, &PassThrough).is_err());
    }
}
