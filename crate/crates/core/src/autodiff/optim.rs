use sha2::{Digest, Sha256};

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// A named model parameter. Frozen parameters are stored as constants so
/// gradients pass through them without being collected.
#[derive(Clone, Debug)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of parameters; order is the checkpoint order.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T: Real> {
    params: Vec<Param<T>>,
    frozen: bool,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            frozen: false,
        }
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, data: Vec<T>, shape: &[usize]) -> Result<usize> {
        let value = if self.frozen {
            Tensor::new(data, shape)?
        } else {
            Tensor::parameter(data, shape)?
        };
        self.params.push(Param {
            name: name.into(),
            value,
        });
        Ok(self.params.len() - 1)
    }

    pub fn get(&self, index: usize) -> &Tensor<T> {
        &self.params[index].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Turns every parameter into a constant.
    pub fn freeze(&mut self) {
        self.frozen = true;
        for p in &mut self.params {
            p.value = p.value.detach();
        }
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.value.zero_grad();
        }
    }

    /// Replaces values in place (same shapes), keeping the tracking mode.
    pub fn set_values(&mut self, values: Vec<Vec<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            let shape = p.value.shape().to_vec();
            p.value = if self.frozen {
                Tensor::new(v, &shape)?
            } else {
                Tensor::parameter(v, &shape)?
            };
        }
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for &d in p.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in p.value.data() {
                h.update(v.to_f64_lossless().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update using the gradients accumulated on `params`; `lr`
    /// overrides the configured rate (for schedules). Gradients are cleared.
    pub fn step_with_lr(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if params.is_frozen() {
            return Err(Error::InvalidArgument("cannot optimize frozen parameters".into()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        let grads = params
            .iter()
            .map(|p| p.value.grad().ok_or_else(|| Error::MissingGradient(p.name.clone())))
            .collect::<Result<Vec<_>>>()?;

        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (lr_t, eps_t, bc1_t, bc2_t) = (T::lit(lr), T::lit(eps), T::lit(bc1), T::lit(bc2));
        let mut updated = Vec::with_capacity(grads.len());
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = p
                .value
                .data()
                .iter()
                .zip(g)
                .zip(m.iter_mut().zip(v.iter_mut()))
                .map(|((&x, &g), (m, v))| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / bc1_t;
                    let v_hat = *v / bc2_t;
                    x - lr_t * m_hat / (v_hat.sqrt() + eps_t)
                })
                .collect();
            updated.push(data);
        }
        params.set_values(updated)
    }

    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(params, lr)
    }
}
