//! Training and evaluation of the three networks.
//!
//! A run writes into its output directory:
//! `losses.csv` (one row per epoch), `best.ckpt`, `last.ckpt`,
//! `epoch_XXXX.ckpt` every `checkpoint_every` epochs and `report.json`.
//! Everything except the wall-clock field of the report is a pure function
//! of the configuration and the dataset.

mod config;
mod data;
mod eval;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{LrSchedule, TrainConfig};
pub use data::SrSample;
pub use eval::{
    evaluate, infer_decompose, infer_generate, white_balanced_ambient, EvalReport, GuideMaps, SampleMetrics,
};

use crate::autodiff::Adam;
use crate::dataset::{Manifest, SceneRecord, Split};
use crate::error::{Error, Result};
use crate::losses::LossOutput;
use crate::metrics::MetricResult;
use crate::networks::{EncoderDecoder, Task};

pub const LOSS_CSV: &str = "losses.csv";
pub const REPORT_FILE: &str = "report.json";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";

/// Losses of one epoch. `terms` are validation-set means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    pub history: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Means over the validation split at the end of training.
    pub val_metrics: BTreeMap<String, MetricResult>,
    pub baseline_val_metrics: BTreeMap<String, MetricResult>,
    /// Validation loss of the pass-through ratio (sr only).
    pub baseline_val_loss: Option<f64>,
    /// Frozen decomposer parameter checksum before and after (generation only).
    pub decomposer_checksum: Option<(String, String)>,
    pub checkpoint: PathBuf,
    pub wall_clock_s: f64,
}

impl TrainReport {
    pub fn first_val_loss(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.val_loss)
    }

    pub fn final_val_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.val_loss)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_loss)
    }
}

enum Samples {
    Scenes { train: Vec<SceneRecord>, val: Vec<SceneRecord> },
    Sr { train: Vec<SrSample>, val: Vec<SrSample> },
}

impl Samples {
    fn train_len(&self) -> usize {
        match self {
            Samples::Scenes { train, .. } => train.len(),
            Samples::Sr { train, .. } => train.len(),
        }
    }
}

fn load_samples(cfg: &TrainConfig) -> Result<Samples> {
    let manifest = Manifest::load(&cfg.data)?;
    if let Some(p) = manifest.missing_files(&cfg.data).into_iter().next() {
        return Err(Error::MissingFile(p));
    }
    let load = |split: Split| {
        let recs: Vec<_> = manifest.split(split).collect();
        recs.par_iter().map(|r| r.load(&cfg.data)).collect::<Result<Vec<_>>>()
    };
    let mut train = load(Split::Train)?;
    if cfg.max_train > 0 {
        train.truncate(cfg.max_train);
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("dataset has no training scenes".into()));
    }
    let mut val = load(Split::Val)?;
    if val.is_empty() {
        log::warn!("dataset has no validation scenes; validating on the training split");
        val = train.clone();
    }
    Ok(match cfg.task {
        Task::Sr => {
            let sr = |v: Vec<SceneRecord>| {
                v.par_iter().map(|r| SrSample::from_record(r, cfg.sr_low_res)).collect::<Result<Vec<_>>>()
            };
            Samples::Sr { train: sr(train)?, val: sr(val)? }
        }
        _ => Samples::Scenes { train, val },
    })
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    decomposer: Option<EncoderDecoder<f32>>,
}

impl Run<'_> {
    fn scene_loss(&self, net: &EncoderDecoder<f32>, recs: &[&SceneRecord], training: bool) -> Result<LossOutput<f32>> {
        match (&self.decomposer, self.cfg.task) {
            (Some(d), Task::Generation) => {
                data::generation_batch_loss(net, d, recs, self.cfg.cycle || !training, &self.cfg.weights)
            }
            _ => data::decomposition_batch_loss(net, recs, &self.cfg.weights),
        }
    }

    fn batch_loss(
        &self,
        net: &EncoderDecoder<f32>,
        samples: &Samples,
        idx: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<LossOutput<f32>> {
        match samples {
            Samples::Scenes { train, .. } => {
                let recs: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
                self.scene_loss(net, &recs, true)
            }
            Samples::Sr { train, .. } => {
                let picked: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
                let crops = data::sr_crops(&picked, self.cfg.sr_crop, rng)?;
                data::sr_batch_loss(Some(net), &crops.iter().collect::<Vec<_>>(), &self.cfg.weights)
            }
        }
    }

    /// Sample-weighted mean loss and terms over the validation split.
    fn val_loss(&self, net: Option<&EncoderDecoder<f32>>, samples: &Samples) -> Result<(f64, Vec<(&'static str, f64)>)> {
        let bs = self.cfg.batch_size;
        let mut outs = Vec::new();
        match samples {
            Samples::Scenes { val, .. } => {
                let net = net.ok_or_else(|| Error::InvalidArgument("validation needs a network".into()))?;
                for chunk in val.chunks(bs) {
                    let recs: Vec<_> = chunk.iter().collect();
                    outs.push((chunk.len(), self.scene_loss(net, &recs, false)?));
                }
            }
            Samples::Sr { val, .. } => {
                for chunk in val.chunks(bs) {
                    let s: Vec<_> = chunk.iter().collect();
                    outs.push((chunk.len(), data::sr_batch_loss(net, &s, &self.cfg.weights)?));
                }
            }
        }
        Ok(weighted_mean(&outs))
    }
}

fn weighted_mean(outs: &[(usize, LossOutput<f32>)]) -> (f64, Vec<(&'static str, f64)>) {
    let n: usize = outs.iter().map(|(k, _)| k).sum();
    let mut total = 0.0;
    let mut terms: Vec<(&'static str, f64)> = Vec::new();
    for (k, o) in outs {
        let w = *k as f64 / n as f64;
        total += w * o.value();
        for &(name, v) in &o.terms {
            match terms.iter_mut().find(|(t, _)| *t == name) {
                Some(e) => e.1 += w * v,
                None => terms.push((name, w * v)),
            }
        }
    }
    (total, terms)
}

fn load_decomposer(cfg: &TrainConfig) -> Result<Option<EncoderDecoder<f32>>> {
    if cfg.task != Task::Generation {
        return Ok(None);
    }
    let path = cfg
        .decomposer
        .as_ref()
        .ok_or_else(|| Error::Config("generation training requires a decomposer checkpoint".into()))?;
    let mut d = EncoderDecoder::<f32>::load(path)?;
    if d.config().task != Task::Decomposition {
        return Err(Error::Config(format!("{} is a {} checkpoint", path.display(), d.config().task)));
    }
    d.freeze();
    Ok(Some(d))
}

fn checkpoint_extra(cfg: &TrainConfig, epoch: usize, val_loss: f64) -> serde_json::Value {
    serde_json::json!({
        "epoch": epoch,
        "seed": cfg.seed,
        "lr": cfg.lr,
        "val_loss": val_loss,
        "sr_low_res": cfg.sr_low_res,
    })
}

struct LossCsv {
    writer: csv::Writer<fs::File>,
    header: Option<Vec<&'static str>>,
}

impl LossCsv {
    fn create(path: &Path) -> Result<Self> {
        Ok(Self { writer: csv::Writer::from_path(path)?, header: None })
    }

    fn write(&mut self, row: &EpochRow, terms: &[(&'static str, f64)]) -> Result<()> {
        if self.header.is_none() {
            let names: Vec<_> = terms.iter().map(|(n, _)| *n).collect();
            let mut head = vec!["epoch".to_string(), "lr".into(), "train_loss".into(), "val_loss".into()];
            head.extend(names.iter().map(|n| format!("val_{n}")));
            self.writer.write_record(&head)?;
            self.header = Some(names);
        }
        let mut rec = vec![row.epoch.to_string(), row.lr.to_string(), row.train_loss.to_string(), row.val_loss.to_string()];
        for name in self.header.as_deref().unwrap_or_default() {
            let v = terms.iter().find(|(n, _)| n == name).map_or(f64::NAN, |t| t.1);
            rec.push(v.to_string());
        }
        self.writer.write_record(&rec)?;
        self.writer.flush().map_err(|e| Error::io("losses.csv", e))
    }
}

/// Trains one network as described by `cfg`.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let started = Instant::now();
    let decomposer = load_decomposer(cfg)?;
    let checksum_before = decomposer.as_ref().map(|d| d.params().checksum());
    let samples = load_samples(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;

    let mut rng = data::run_rng(cfg.seed);
    let mut net = EncoderDecoder::<f32>::new(cfg.network(), rng.next_u64())?;
    let mut adam = Adam::new(cfg.adam());
    let run = Run { cfg, decomposer };
    let baseline_val_loss = match &samples {
        Samples::Sr { .. } => Some(run.val_loss(None, &samples)?.0),
        Samples::Scenes { .. } => None,
    };

    let mut csv = LossCsv::create(&cfg.out.join(LOSS_CSV))?;
    let mut order: Vec<usize> = (0..samples.train_len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let (mut best_epoch, mut best_val) = (0, f64::INFINITY);
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(cfg.lr, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let out = run.batch_loss(&net, &samples, idx, &mut rng)?;
            out.total.backward()?;
            adam.step_with_lr(net.params_mut(), lr)?;
            train_sum += out.value() * idx.len() as f64;
        }
        let (val_loss, terms) = run.val_loss(Some(&net), &samples)?;
        if !val_loss.is_finite() {
            return Err(Error::InvalidArgument(format!("validation loss diverged at epoch {}", epoch + 1)));
        }
        let row = EpochRow {
            epoch: epoch + 1,
            lr,
            train_loss: train_sum / order.len() as f64,
            val_loss,
            terms: terms.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
        };
        log::info!(
            "{} epoch {}/{}: train {:.6} val {:.6} lr {:.3e}",
            cfg.task,
            row.epoch,
            cfg.epochs,
            row.train_loss,
            row.val_loss,
            lr
        );
        csv.write(&row, &terms)?;
        let extra = checkpoint_extra(cfg, row.epoch, val_loss);
        if val_loss < best_val {
            (best_epoch, best_val) = (row.epoch, val_loss);
            net.save(cfg.out.join(BEST_CKPT), extra.clone())?;
        }
        if cfg.checkpoint_every > 0 && row.epoch % cfg.checkpoint_every == 0 {
            net.save(cfg.out.join(format!("epoch_{:04}.ckpt", row.epoch)), extra.clone())?;
        }
        if row.epoch == cfg.epochs {
            net.save(cfg.out.join(LAST_CKPT), extra)?;
        }
        history.push(row);
    }

    let metrics = match &samples {
        Samples::Scenes { val, .. } if cfg.task == Task::Generation => eval::generation_metrics(&net, val)?,
        Samples::Scenes { val, .. } => eval::decomposition_metrics(&net, val)?,
        Samples::Sr { val, .. } => eval::sr_metrics(&net, val)?,
    };
    let summary = eval::report(cfg.task, Split::Val, metrics);
    let report = TrainReport {
        task: cfg.task,
        history,
        best_epoch,
        best_val_loss: best_val,
        val_metrics: summary.mean,
        baseline_val_metrics: summary.baseline_mean,
        baseline_val_loss,
        decomposer_checksum: checksum_before.zip(run.decomposer.as_ref().map(|d| d.params().checksum())),
        checkpoint: cfg.out.join(LAST_CKPT),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let path = cfg.out.join(REPORT_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
