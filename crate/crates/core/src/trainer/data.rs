//! Batch assembly and per-task losses.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dataset::SceneRecord;
use crate::error::{Error, Result};
use crate::formation::{ambient_color, diff};
use crate::highres::{refine_ratio, upscaled_ratio};
use crate::imgcore::{resize, stack_images, LinearImage, ResampleMode, Resampler};
use crate::losses::{
    decomposition_loss, generation_loss, highres_loss, Cycle, DecompositionPrediction, DecompositionTarget,
    GenerationTarget, LossOutput, LossWeights,
};
use crate::networks::{input_tensor, EncoderDecoder, InputMaps};

fn maps(r: &SceneRecord, with_photo: bool) -> InputMaps<'_> {
    InputMaps {
        photo: with_photo.then_some(&r.photo),
        albedo: &r.components.albedo,
        normals: &r.normals,
        depth: &r.depth,
    }
}

fn stack<'a>(recs: &[&'a SceneRecord], f: impl Fn(&'a SceneRecord) -> &'a LinearImage) -> Result<Tensor<f32>> {
    let imgs: Vec<&LinearImage> = recs.iter().map(|r| f(r)).collect();
    stack_images(&imgs)
}

fn t_norm(recs: &[&SceneRecord]) -> Result<Tensor<f32>> {
    Tensor::new(recs.iter().map(|r| r.components.ambient.t_norm as f32).collect(), &[recs.len(), 1])
}

fn c_a(recs: &[&SceneRecord]) -> Result<Tensor<f32>> {
    Tensor::new(recs.iter().flat_map(|r| r.components.ambient.c_a).collect(), &[recs.len(), 3])
}

pub(super) fn decomposition_batch_loss(
    net: &EncoderDecoder<f32>,
    recs: &[&SceneRecord],
    w: &LossWeights,
) -> Result<LossOutput<f32>> {
    let x = input_tensor::<f32>(&recs.iter().map(|r| maps(r, true)).collect::<Vec<_>>())?;
    let out = net.forward(&x)?;
    let pred = DecompositionPrediction {
        s_a: out.heads[0].clone(),
        s_f: out.heads[1].clone(),
        t_norm: out
            .t_norm
            .ok_or_else(|| Error::Config("decomposition network has no temperature head".into()))?,
    };
    let truth = DecompositionTarget {
        s_a: stack(recs, |r| r.components.s_a.image())?,
        s_f: stack(recs, |r| r.components.s_f.image())?,
        albedo: stack(recs, |r| &r.components.albedo)?,
        t_norm: t_norm(recs)?,
    };
    decomposition_loss(&pred, &truth, &stack(recs, |r| &r.photo)?, w)
}

/// Ambient image estimated by a (frozen) decomposition network for a
/// photograph tensor, with the batch's guide maps.
pub(super) fn network_ambient(
    decomposer: &EncoderDecoder<f32>,
    guide: &Tensor<f32>,
    photo: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let x = Tensor::concat(&[photo.clone(), guide.clone()])?;
    let out = decomposer.forward(&x)?;
    let t = out
        .t_norm
        .ok_or_else(|| Error::Config("decomposer checkpoint has no temperature head".into()))?;
    Ok(diff::split(photo, &out.heads[0], &out.heads[1], &ambient_color(&t)?)?.1)
}

pub(super) fn generation_batch_loss(
    net: &EncoderDecoder<f32>,
    decomposer: &EncoderDecoder<f32>,
    recs: &[&SceneRecord],
    cycle: bool,
    w: &LossWeights,
) -> Result<LossOutput<f32>> {
    let guide = input_tensor::<f32>(&recs.iter().map(|r| maps(r, false)).collect::<Vec<_>>())?;
    let out = net.forward(&guide)?;
    let albedo = stack(recs, |r| &r.components.albedo)?;
    let s_a = stack(recs, |r| r.components.s_a.image())?;
    let truth = GenerationTarget {
        s_f: stack(recs, |r| r.components.s_f.image())?,
        flash: stack(recs, |r| &r.flash_image)?,
        no_flash: albedo.mul(&s_a)?,
        albedo,
        c_a: c_a(recs)?,
        ambient: stack(recs, |r| &r.ambient_image)?,
    };
    let d = |p: &Tensor<f32>| network_ambient(decomposer, &guide, p);
    let cycle = if cycle { Cycle::Through(&d) } else { Cycle::Off };
    generation_loss(&out.heads[0], &truth, cycle, w)
}

/// A full-resolution training or evaluation item for ratio super-resolution.
#[derive(Clone, Debug)]
pub struct SrSample {
    pub id: String,
    pub photo: LinearImage,
    pub ambient: LinearImage,
    pub ratio_up: LinearImage,
}

impl SrSample {
    /// Uses the area-downsampled true ambient image as the low-resolution input.
    pub fn from_record(r: &SceneRecord, low_res: usize) -> Result<Self> {
        let (h, w) = (r.photo.height(), r.photo.width());
        if h % low_res != 0 || w % low_res != 0 {
            return Err(Error::Config(format!("{h}x{w} scenes are not a multiple of low resolution {low_res}")));
        }
        let a_low = resize(
            &r.ambient_image,
            Resampler::to(h * low_res / h.max(w), w * low_res / h.max(w)).with_mode(ResampleMode::Area),
        )?;
        Ok(Self {
            id: r.id.clone(),
            photo: r.photo.clone(),
            ambient: r.ambient_image.clone(),
            ratio_up: upscaled_ratio(&r.photo, &a_low)?,
        })
    }

    fn crop(&self, top: usize, left: usize, size: usize) -> Result<SrSample> {
        let cut = |img: &LinearImage| {
            LinearImage::from_fn(size, size, img.channels(), |y, x, c| img.get(top + y, left + x, c))
        };
        Ok(SrSample {
            id: self.id.clone(),
            photo: cut(&self.photo)?,
            ambient: cut(&self.ambient)?,
            ratio_up: cut(&self.ratio_up)?,
        })
    }
}

/// Random square crops (one per sample) drawn from `rng`.
pub(super) fn sr_crops(samples: &[&SrSample], size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<SrSample>> {
    samples
        .iter()
        .map(|s| {
            let (h, w) = (s.photo.height(), s.photo.width());
            if size == 0 || size >= h.min(w) {
                return Ok((*s).clone());
            }
            let top = rng.random_range(0..=h - size);
            let left = rng.random_range(0..=w - size);
            s.crop(top, left, size)
        })
        .collect()
}

pub(super) fn sr_batch_loss(net: Option<&EncoderDecoder<f32>>, samples: &[&SrSample], w: &LossWeights) -> Result<LossOutput<f32>> {
    let photo = stack_images::<f32>(&samples.iter().map(|s| &s.photo).collect::<Vec<_>>())?;
    let ratio_up = stack_images::<f32>(&samples.iter().map(|s| &s.ratio_up).collect::<Vec<_>>())?;
    let ambient = stack_images::<f32>(&samples.iter().map(|s| &s.ambient).collect::<Vec<_>>())?;
    let ratio = match net {
        Some(net) => refine_ratio(net, &ratio_up, &photo)?,
        None => ratio_up,
    };
    highres_loss(&ratio, &photo, &ambient, w)
}

/// Seeded generator for one training run.
pub(super) fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
