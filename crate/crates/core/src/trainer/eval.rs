use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::SrSample;
use crate::autodiff::Checkpoint;
use crate::dataset::{Manifest, SceneRecord, Split};
use crate::error::{Error, Result};
use crate::formation::{generate_flash_photograph, split_illuminations, AmbientLight, DecompositionResult, ShadingMap};
use crate::highres::{ratio_inverse, PassThrough, RatioModel};
use crate::imgcore::LinearImage;
use crate::metrics::{compare, MetricResult};
use crate::networks::{input_tensor, EncoderDecoder, InputMaps, Task};

/// Geometry and reflectance guides supplied alongside an image.
#[derive(Clone, Copy, Debug)]
pub struct GuideMaps<'a> {
    pub albedo: &'a LinearImage,
    pub normals: &'a LinearImage,
    pub depth: &'a LinearImage,
}

impl<'a> GuideMaps<'a> {
    pub fn of(r: &'a SceneRecord) -> Self {
        Self { albedo: &r.components.albedo, normals: &r.normals, depth: &r.depth }
    }

    fn inputs(self, photo: Option<&'a LinearImage>) -> InputMaps<'a> {
        InputMaps { photo, albedo: self.albedo, normals: self.normals, depth: self.depth }
    }
}

fn expect_task(net: &EncoderDecoder<f32>, task: Task) -> Result<()> {
    if net.config().task != task {
        return Err(Error::InvalidArgument(format!("expected a {task} network, got {}", net.config().task)));
    }
    Ok(())
}

/// Predicts shadings and temperature for `photo`, then splits it.
pub fn infer_decompose(net: &EncoderDecoder<f32>, photo: &LinearImage, guides: GuideMaps<'_>) -> Result<DecompositionResult> {
    expect_task(net, Task::Decomposition)?;
    let out = net.forward(&input_tensor(&[guides.inputs(Some(photo))])?)?;
    let t = out
        .t_norm
        .ok_or_else(|| Error::MalformedCheckpoint("decomposition network has no temperature head".into()))?;
    let ambient = AmbientLight::from_t_norm(f64::from(t.item()).clamp(0.0, 1.0))?;
    let s_a = ShadingMap::new(LinearImage::from_tensor(&out.heads[0], 0)?)?;
    let s_f = ShadingMap::new(LinearImage::from_tensor(&out.heads[1], 0)?)?;
    split_illuminations(photo, &s_a, &s_f, &ambient)
}

/// Predicts the flash shading for a white-balanced no-flash image and
/// returns `(F̂, P̂)`.
pub fn infer_generate(
    net: &EncoderDecoder<f32>,
    no_flash: &LinearImage,
    guides: GuideMaps<'_>,
    c_a: [f32; 3],
) -> Result<(LinearImage, LinearImage)> {
    expect_task(net, Task::Generation)?;
    let out = net.forward(&input_tensor(&[guides.inputs(None)])?)?;
    let s_f = ShadingMap::new(LinearImage::from_tensor(&out.heads[0], 0)?)?;
    generate_flash_photograph(no_flash, guides.albedo, &s_f, c_a)
}

/// The white-balanced no-flash image `R S_A` of a record.
pub fn white_balanced_ambient(r: &SceneRecord) -> Result<LinearImage> {
    let s_a = r.components.s_a.image();
    LinearImage::from_fn(s_a.height(), s_a.width(), 3, |y, x, c| {
        r.components.albedo.get(y, x, c) * s_a.get(y, x, 0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub outputs: BTreeMap<String, MetricResult>,
    pub baseline: BTreeMap<String, MetricResult>,
}

/// Per-sample and mean metrics of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub split: Split,
    /// What the baseline columns measure.
    pub baseline: String,
    pub samples: Vec<SampleMetrics>,
    pub mean: BTreeMap<String, MetricResult>,
    pub baseline_mean: BTreeMap<String, MetricResult>,
}

fn half_photo(r: &SceneRecord) -> LinearImage {
    r.photo.scale(0.5)
}

pub(super) fn decomposition_metrics(net: &EncoderDecoder<f32>, recs: &[SceneRecord]) -> Result<Vec<SampleMetrics>> {
    recs.iter()
        .map(|r| {
            let d = infer_decompose(net, &r.photo, GuideMaps::of(r))?;
            let half = half_photo(r);
            Ok(SampleMetrics {
                id: r.id.clone(),
                outputs: BTreeMap::from([
                    ("A".into(), compare(&d.ambient_image, &r.ambient_image)?),
                    ("F".into(), compare(&d.flash_image, &r.flash_image)?),
                ]),
                baseline: BTreeMap::from([
                    ("A".into(), compare(&half, &r.ambient_image)?),
                    ("F".into(), compare(&half, &r.flash_image)?),
                ]),
            })
        })
        .collect()
}

pub(super) fn generation_metrics(net: &EncoderDecoder<f32>, recs: &[SceneRecord]) -> Result<Vec<SampleMetrics>> {
    recs.iter()
        .map(|r| {
            let no_flash = white_balanced_ambient(r)?;
            let (f, p) = infer_generate(net, &no_flash, GuideMaps::of(r), r.components.ambient.c_a)?;
            let dark = LinearImage::filled(f.height(), f.width(), 3, 0.0);
            Ok(SampleMetrics {
                id: r.id.clone(),
                outputs: BTreeMap::from([
                    ("P".into(), compare(&p, &r.photo)?),
                    ("F".into(), compare(&f, &r.flash_image)?),
                ]),
                baseline: BTreeMap::from([
                    ("P".into(), compare(&r.ambient_image, &r.photo)?),
                    ("F".into(), compare(&dark, &r.flash_image)?),
                ]),
            })
        })
        .collect()
}

pub(super) fn sr_metrics(net: &EncoderDecoder<f32>, samples: &[SrSample]) -> Result<Vec<SampleMetrics>> {
    expect_task(net, Task::Sr)?;
    samples
        .iter()
        .map(|s| {
            let refined = ratio_inverse(&net.predict(&s.ratio_up, &s.photo)?, &s.photo)?;
            let plain = ratio_inverse(&PassThrough.predict(&s.ratio_up, &s.photo)?, &s.photo)?;
            Ok(SampleMetrics {
                id: s.id.clone(),
                outputs: BTreeMap::from([("A".into(), compare(&refined, &s.ambient)?)]),
                baseline: BTreeMap::from([("A".into(), compare(&plain, &s.ambient)?)]),
            })
        })
        .collect()
}

fn mean_of(samples: &[SampleMetrics], pick: impl Fn(&SampleMetrics) -> &BTreeMap<String, MetricResult>) -> BTreeMap<String, MetricResult> {
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for s in samples {
        for (k, m) in pick(s) {
            let e = sums.entry(k.clone()).or_default();
            e.0 += m.psnr_db;
            e.1 += m.ssim;
        }
    }
    let n = samples.len() as f64;
    sums.into_iter()
        .map(|(k, (p, s))| (k, MetricResult { psnr_db: p / n, ssim: s / n }))
        .collect()
}

pub(super) fn report(task: Task, split: Split, samples: Vec<SampleMetrics>) -> EvalReport {
    let baseline = match task {
        Task::Decomposition => "A = F = P/2",
        Task::Generation => "no flash: P = A, F = 0",
        Task::Sr => "pass-through upsampled ratio",
    };
    EvalReport {
        task,
        split,
        baseline: baseline.into(),
        mean: mean_of(&samples, |s| &s.outputs),
        baseline_mean: mean_of(&samples, |s| &s.baseline),
        samples,
    }
}

/// Low resolution the sr checkpoint was trained for.
fn sr_low_res(ckpt: &Checkpoint) -> Result<usize> {
    ckpt.header
        .pointer("/extra/sr_low_res")
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .ok_or_else(|| Error::MalformedCheckpoint("sr checkpoint does not record its low resolution".into()))
}

/// Metrics of a checkpoint's outputs on one split of a dataset.
pub fn evaluate(checkpoint: impl AsRef<Path>, data: impl AsRef<Path>, split: Split) -> Result<EvalReport> {
    let data = data.as_ref();
    let ckpt = Checkpoint::load(checkpoint)?;
    let net = EncoderDecoder::<f32>::from_checkpoint(&ckpt)?;
    let manifest = Manifest::load(data)?;
    let recs = manifest
        .split(split)
        .map(|r| r.load(data))
        .collect::<Result<Vec<_>>>()?;
    if recs.is_empty() {
        return Err(Error::InvalidArgument(format!("split {split:?} is empty")));
    }
    let task = net.config().task;
    let samples = match task {
        Task::Decomposition => decomposition_metrics(&net, &recs)?,
        Task::Generation => generation_metrics(&net, &recs)?,
        Task::Sr => {
            let low = sr_low_res(&ckpt)?;
            let sr = recs.iter().map(|r| SrSample::from_record(r, low)).collect::<Result<Vec<_>>>()?;
            sr_metrics(&net, &sr)?
        }
    };
    Ok(report(task, split, samples))
}
