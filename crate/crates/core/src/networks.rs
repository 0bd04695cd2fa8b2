//! Convolutional encoder-decoders: one shared encoder, one decoder per
//! predicted map, and an optional pooled temperature head.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Conv2dSpec, Padding, ParamSet, Real, Tensor};
use crate::error::{Error, Result};
use crate::imgcore::LinearImage;

const LEAK: f64 = 0.1;
/// Encoder widths stop doubling after this factor.
const MAX_WIDTH_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Decomposition,
    Generation,
    Sr,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Decomposition => "decomposition",
            Task::Generation => "generation",
            Task::Sr => "sr",
        })
    }
}

/// Activation applied to every decoder output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadActivation {
    Softplus,
    /// Raw logits; the caller adds them to a base ratio before a sigmoid.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderDecoderConfig {
    pub task: Task,
    pub in_channels: usize,
    pub width: usize,
    pub levels: usize,
    pub heads: usize,
    pub head_channels: usize,
    pub head_activation: HeadActivation,
    pub temperature_head: bool,
    pub temperature_hidden: usize,
    pub padding: Padding,
    /// Start every head at exactly zero output (before activation).
    pub zero_init_heads: bool,
}

impl EncoderDecoderConfig {
    /// Photo, albedo, normals and depth in; two shadings and a temperature out.
    pub fn decomposition(width: usize, levels: usize) -> Self {
        Self {
            task: Task::Decomposition,
            in_channels: 10,
            width,
            levels,
            heads: 2,
            head_channels: 1,
            head_activation: HeadActivation::Softplus,
            temperature_head: true,
            temperature_hidden: 16,
            padding: Padding::Zero,
            zero_init_heads: false,
        }
    }

    /// Albedo, normals and depth in; flash shading out.
    pub fn generation(width: usize, levels: usize) -> Self {
        Self {
            task: Task::Generation,
            in_channels: 7,
            heads: 1,
            temperature_head: false,
            ..Self::decomposition(width, levels)
        }
    }

    /// Upsampled ratio and full-resolution photograph in; ratio logits out.
    /// Replicate padding keeps constant inputs constant.
    pub fn super_resolution(width: usize, levels: usize) -> Self {
        Self {
            task: Task::Sr,
            in_channels: 6,
            heads: 1,
            head_channels: 3,
            head_activation: HeadActivation::Identity,
            temperature_head: false,
            padding: Padding::Replicate,
            zero_init_heads: true,
            ..Self::decomposition(width, levels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.width == 0 || self.head_channels == 0 || !(1..=2).contains(&self.heads) {
            return Err(Error::Config(format!("invalid network config {self:?}")));
        }
        if self.temperature_head && self.temperature_hidden == 0 {
            return Err(Error::Config("temperature head needs a hidden width".into()));
        }
        Ok(())
    }

    fn level_width(&self, level: usize) -> usize {
        self.width * (1usize << level.min(MAX_WIDTH_FACTOR.trailing_zeros() as usize))
    }

    /// Spatial sides must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    weight: usize,
    bias: usize,
    stride: usize,
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
struct Decoder {
    /// One conv per level, from the deepest skip upwards.
    ups: Vec<Conv>,
    head: Conv,
}

/// Outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct NetOutput<T: Real> {
    /// One `(N, head_channels, H, W)` map per decoder.
    pub heads: Vec<Tensor<T>>,
    /// `(N, 1)` normalized temperature in `(0, 1)`.
    pub t_norm: Option<Tensor<T>>,
}

/// A network and its parameters.
#[derive(Clone, Debug)]
pub struct EncoderDecoder<T: Real = f32> {
    config: EncoderDecoderConfig,
    params: ParamSet<T>,
    /// `levels + 1` stages of two convs each.
    encoder: Vec<[Conv; 2]>,
    decoders: Vec<Decoder>,
    temperature: Vec<Dense>,
}

struct Init<'a, T: Real> {
    params: &'a mut ParamSet<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Init<'_, T> {
    /// He-style fan-in scaled uniform weights, zero biases.
    fn tensor(&mut self, name: String, shape: &[usize], fan_in: usize, zero: bool) -> Result<usize> {
        let n: usize = shape.iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..n)
            .map(|_| if zero { T::zero() } else { T::lit(self.rng.random_range(-bound..bound)) })
            .collect();
        self.params.add(name, data, shape)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, stride: usize, zero: bool) -> Result<Conv> {
        let weight = self.tensor(format!("{name}.weight"), &[cout, cin, 3, 3], cin * 9, zero)?;
        let bias = self.params.add(format!("{name}.bias"), vec![T::zero(); cout], &[cout])?;
        Ok(Conv { weight, bias, stride })
    }

    fn dense(&mut self, name: &str, input: usize, output: usize) -> Result<Dense> {
        let weight = self.tensor(format!("{name}.weight"), &[output, input], input, false)?;
        let bias = self.params.add(format!("{name}.bias"), vec![T::zero(); output], &[output])?;
        Ok(Dense { weight, bias })
    }
}

impl<T: Real> EncoderDecoder<T> {
    /// Builds the network with parameters drawn from `seed`.
    pub fn new(config: EncoderDecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut init = Init { params: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let mut encoder = Vec::with_capacity(config.levels + 1);
        let mut cin = config.in_channels;
        for level in 0..=config.levels {
            let w = config.level_width(level);
            let stride = if level == 0 { 1 } else { 2 };
            encoder.push([
                init.conv(&format!("enc{level}.0"), cin, w, stride, false)?,
                init.conv(&format!("enc{level}.1"), w, w, 1, false)?,
            ]);
            cin = w;
        }
        let mut decoders = Vec::with_capacity(config.heads);
        for head in 0..config.heads {
            let mut ups = Vec::with_capacity(config.levels);
            let mut below = config.level_width(config.levels);
            for level in (0..config.levels).rev() {
                let w = config.level_width(level);
                ups.push(init.conv(&format!("dec{head}.up{level}"), below + w, w, 1, false)?);
                below = w;
            }
            let head_conv = init.conv(
                &format!("dec{head}.out"),
                below,
                config.head_channels,
                1,
                config.zero_init_heads,
            )?;
            decoders.push(Decoder { ups, head: head_conv });
        }
        let mut temperature = Vec::new();
        if config.temperature_head {
            let (bottom, hidden) = (config.level_width(config.levels), config.temperature_hidden);
            temperature.push(init.dense("temp.0", bottom, hidden)?);
            temperature.push(init.dense("temp.1", hidden, hidden)?);
            temperature.push(init.dense("temp.2", hidden, 1)?);
        }
        Ok(Self { config, params, encoder, decoders, temperature })
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn conv(&self, x: &Tensor<T>, c: Conv) -> Result<Tensor<T>> {
        let spec = Conv2dSpec::same(3, c.stride).with_padding(self.config.padding);
        x.conv2d(self.params.get(c.weight), Some(self.params.get(c.bias)), spec)
    }

    fn dense(&self, x: &Tensor<T>, d: Dense) -> Result<Tensor<T>> {
        x.linear(self.params.get(d.weight), self.params.get(d.bias))
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::InvalidArgument(format!(
                "{} network expects {} input channels, got {c}",
                self.config.task, self.config.in_channels
            )));
        }
        let m = self.config.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "input {h}x{w} is not divisible by {m} ({} levels)",
                self.config.levels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<NetOutput<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for [a, b] in &self.encoder {
            h = self.conv(&h, *a)?.leaky_relu(LEAK);
            h = self.conv(&h, *b)?.leaky_relu(LEAK);
            skips.push(h.clone());
        }
        let bottom = skips.pop().expect("encoder has a bottom stage");
        let mut heads = Vec::with_capacity(self.decoders.len());
        for dec in &self.decoders {
            let mut y = bottom.clone();
            for (conv, skip) in dec.ups.iter().zip(skips.iter().rev()) {
                y = Tensor::concat(&[y.upsample_bilinear2()?, skip.clone()])?;
                y = self.conv(&y, *conv)?.leaky_relu(LEAK);
            }
            let out = self.conv(&y, dec.head)?;
            heads.push(match self.config.head_activation {
                HeadActivation::Softplus => out.softplus(),
                HeadActivation::Identity => out,
            });
        }
        let t_norm = if self.temperature.is_empty() {
            None
        } else {
            let mut z = bottom.global_avg_pool()?;
            let last = self.temperature.len() - 1;
            for (i, d) in self.temperature.iter().enumerate() {
                z = self.dense(&z, *d)?;
                if i < last {
                    z = z.relu();
                }
            }
            Some(z.sigmoid())
        };
        Ok(NetOutput { heads, t_norm })
    }

    /// Freezes parameters: gradients still flow through, none are collected.
    pub fn freeze(&mut self) {
        self.params.freeze();
    }

    pub fn checkpoint(&self, extra: serde_json::Value) -> Result<Checkpoint> {
        let header = serde_json::json!({ "config": self.config, "extra": extra });
        Ok(Checkpoint::from_params(header, &self.params))
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        self.checkpoint(extra)?.save(path)
    }

    /// Rebuilds the network described by a checkpoint header and loads its values.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: EncoderDecoderConfig = serde_json::from_value(
            ckpt.header
                .get("config")
                .cloned()
                .ok_or_else(|| Error::MalformedCheckpoint("header has no network config".into()))?,
        )?;
        let mut net = Self::new(config, 0)?;
        ckpt.load_into(&mut net.params)?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Per-sample guide maps for a network input.
#[derive(Clone, Copy, Debug)]
pub struct InputMaps<'a> {
    /// Present for decomposition, absent for generation.
    pub photo: Option<&'a LinearImage>,
    pub albedo: &'a LinearImage,
    pub normals: &'a LinearImage,
    /// Divided by its maximum before use.
    pub depth: &'a LinearImage,
}

/// Stacks `[photo], albedo, normals, depth / max(depth)` into `(N, C, H, W)`.
pub fn input_tensor<T: Real>(samples: &[InputMaps<'_>]) -> Result<Tensor<T>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (h, w) = (first.albedo.height(), first.albedo.width());
    let mut data = Vec::new();
    let mut channels = 0;
    for s in samples {
        let start = data.len();
        let depth_max = s.depth.max_value();
        if !(depth_max > 0.0) {
            return Err(Error::InvalidArgument("depth map must have a positive maximum".into()));
        }
        let mut maps: Vec<(&LinearImage, usize, f64)> = Vec::with_capacity(4);
        if let Some(p) = s.photo {
            maps.push((p, 3, 1.0));
        }
        maps.extend([(s.albedo, 3, 1.0), (s.normals, 3, 1.0), (s.depth, 1, 1.0 / f64::from(depth_max))]);
        for (img, expect, scale) in maps {
            if img.height() != h || img.width() != w || img.channels() != expect {
                return Err(Error::shape(
                    "input_tensor",
                    &[h, w, expect],
                    &[img.height(), img.width(), img.channels()],
                ));
            }
            for c in 0..expect {
                data.extend((0..h * w).map(|p| T::lit(f64::from(img.data()[p * expect + c]) * scale)));
            }
        }
        channels = (data.len() - start) / (h * w);
    }
    Tensor::new(data, &[samples.len(), channels, h, w])
}
