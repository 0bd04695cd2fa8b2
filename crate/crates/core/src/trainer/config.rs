use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::{EncoderDecoderConfig, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Constant for the first half of the epochs, then linear decay.
    ConstantThenLinear,
}

impl LrSchedule {
    /// Learning rate for zero-based `epoch` of `epochs`.
    pub fn lr_at(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::ConstantThenLinear => {
                let half = epochs / 2;
                if epoch < half {
                    base
                } else {
                    base * (epochs - epoch) as f64 / (epochs - half) as f64
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    /// Dataset root holding `manifest.json`.
    pub data: PathBuf,
    /// Output directory for checkpoints, the loss CSV and the report.
    pub out: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub seed: u64,
    /// Trained decomposition checkpoint; required for generation.
    pub decomposer: Option<PathBuf>,
    pub width: usize,
    pub levels: usize,
    /// Write `epoch_XXXX.ckpt` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Include the cycle term in the generation training objective.
    pub cycle: bool,
    pub weights: LossWeights,
    /// Low resolution for the sr task.
    pub sr_low_res: usize,
    /// Square training crop for the sr task (0 trains on whole images).
    pub sr_crop: usize,
    /// Cap on training scenes (0 uses all).
    pub max_train: usize,
}

impl TrainConfig {
    pub fn new(task: Task, data: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            task,
            data: data.into(),
            out: out.into(),
            epochs: 100,
            lr: 2e-4,
            schedule: match task {
                Task::Sr => LrSchedule::ConstantThenLinear,
                _ => LrSchedule::Constant,
            },
            batch_size: 4,
            seed: 0,
            decomposer: None,
            width: 16,
            levels: 3,
            checkpoint_every: 10,
            cycle: true,
            weights: LossWeights::default(),
            sr_low_res: 64,
            sr_crop: 64,
            max_train: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.task == Task::Generation {
            match &self.decomposer {
                None => return Err(Error::Config("generation training requires a decomposer checkpoint".into())),
                Some(p) if !p.exists() => return Err(Error::MissingFile(p.clone())),
                _ => {}
            }
        }
        if self.task == Task::Sr && self.sr_low_res == 0 {
            return Err(Error::Config("sr low resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    pub fn network(&self) -> EncoderDecoderConfig {
        match self.task {
            Task::Decomposition => EncoderDecoderConfig::decomposition(self.width, self.levels),
            Task::Generation => EncoderDecoderConfig::generation(self.width, self.levels),
            Task::Sr => EncoderDecoderConfig::super_resolution(self.width, self.levels),
        }
    }
}
