use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate is multiplied by this every `decay_every` steps.
    pub decay_factor: f64,
    /// 0 disables decay.
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 0.7,
            decay_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Learning rate used by the next step.
    pub fn current_lr(&self) -> f64 {
        let c = &self.config;
        if c.decay_every == 0 {
            c.lr
        } else {
            c.lr * c.decay_factor.powi((self.step / c.decay_every) as i32)
        }
    }

    pub fn shapes_match(&self, params: &ModelParams) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .tensors()
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// One bias-corrected Adam update. Nothing is modified when any gradient is
/// non-finite.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
    if grads.len() != params.len() || !state.shapes_match(params) {
        return Err(Error::Shape("gradients, moments and parameters differ in shape".into()));
    }
    for (i, (g, p)) in grads.iter().zip(params.tensors()).enumerate() {
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!("gradient of `{}` has shape {:?}", params.name(i), g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: params.name(i).to_string(),
            });
        }
    }
    let lr = state.current_lr();
    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for (i, g) in grads.iter().enumerate() {
        let p = params.get_mut(i);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..g.len() {
            let gk = g.data[k];
            m.data[k] = c.beta1 * m.data[k] + (1.0 - c.beta1) * gk;
            v.data[k] = c.beta2 * v.data[k] + (1.0 - c.beta2) * gk * gk;
            let mh = m.data[k] / bc1;
            let vh = v.data[k] / bc2;
            p.data[k] -= lr * mh / (vh.sqrt() + c.eps);
        }
    }
    Ok(())
}
