//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use cartmech_autodiff::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Optimizer moments, kept separately from the parameters they track.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let zeros: Vec<Tensor> = store.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`; parameters rejected by `trainable` are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64, trainable: impl Fn(&str) -> bool) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(LearnError::Length(format!(
                "{} gradients for {} parameters ({} optimizer slots)",
                grads.len(),
                store.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let names = store.names().to_vec();
        for (i, value) in store.values_mut().iter_mut().enumerate() {
            if !trainable(&names[i]) {
                continue;
            }
            if grads[i].shape() != value.shape() {
                return Err(LearnError::Length(format!("gradient shape mismatch for `{}`", names[i])));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (p, &g)) in value.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *p -= lr * c.weight_decay * *p;
                *p -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// `lr·(1 + cos(π·epoch/epochs))/2`.
pub fn cosine_lr(lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr;
    }
    lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}
