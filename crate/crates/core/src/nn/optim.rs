//! AdamW with linear warmup followed by cosine decay.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Learning-rate multiplier for 1-based `step` out of `total_steps`.
///
/// Rises linearly to 1.0 at the last warmup step, then follows a half cosine
/// down to 0 at `total_steps`.
pub fn lr_factor(step: u64, total_steps: u64, warmup_fraction: f64) -> f64 {
    let total = total_steps.max(1);
    let warmup = (warmup_fraction * total as f64).round() as u64;
    if warmup > 0 && step <= warmup {
        return step as f64 / warmup as f64;
    }
    let decay_steps = total - warmup;
    if decay_steps == 0 {
        return 1.0;
    }
    let progress = (step.saturating_sub(warmup) as f64 / decay_steps as f64).min(1.0);
    0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    pub total_steps: u64,
    /// Optimizer steps taken so far; drives the learning-rate schedule.
    pub step: u64,
    /// Per-parameter update counts for bias correction (frozen parameters
    /// do not advance).
    pub param_steps: Vec<u64>,
    pub first_moment: Vec<Tensor2D>,
    pub second_moment: Vec<Tensor2D>,
}

impl OptimState {
    pub fn new(config: OptimConfig, params: &ParamStore, total_steps: u64) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor2D::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            total_steps,
            step: 0,
            param_steps: vec![0; params.len()],
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * lr_factor(self.step, self.total_steps, self.config.warmup_fraction)
    }
}

/// One AdamW update. `trainable[i] == false` leaves parameter `i` and its
/// moments untouched.
pub fn optim_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptimState,
    trainable: &[bool],
) -> Result<()> {
    if grads.tensors().len() != params.len()
        || state.first_moment.len() != params.len()
        || trainable.len() != params.len()
    {
        return Err(Error::ShapeMismatch {
            context: "optim_step parameter count",
            expected: (params.len(), 1),
            actual: (grads.tensors().len(), 1),
        });
    }
    state.step += 1;
    let lr = state.current_lr();
    let cfg = state.config.clone();
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = &grads.tensors()[i];
        g.ensure_shape(p.shape(), "optim_step gradient")?;
        if !trainable[i] {
            continue;
        }
        state.param_steps[i] += 1;
        let t = state.param_steps[i] as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *w -= lr * cfg.weight_decay * *w;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
