//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::ModelParams;

pub const DEFAULT_LR: f64 = 0.0002;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter array.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam step over {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let states = params
            .named_tensors()
            .iter()
            .map(|(_, t)| AdamState::new(t.len()))
            .collect();
        Adam { config, states }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let grads = grads.named_tensors();
        let tensors = params.tensors_mut();
        if tensors.len() != grads.len() || tensors.len() != self.states.len() {
            return Err(Error::Shape(
                "optimizer and model disagree on tensor count".into(),
            ));
        }
        for ((p, (_, g)), s) in tensors.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, &self.config)?;
        }
        Ok(())
    }
}
