use serde::{Deserialize, Serialize};

use super::param::{ParamStore, Parameter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// One bias-corrected Adam update. A parameter that received no gradient
/// is updated as if its gradient were zero. The gradient slot is zeroed
/// afterwards.
pub fn adam_step(p: &mut Parameter, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    p.step_count += 1;
    let t = p.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let grad = p.grad().map(|g| g.to_vec());
    let Parameter {
        value,
        adam_m,
        adam_v,
        ..
    } = p;
    for (i, w) in value.data_mut().iter_mut().enumerate() {
        let g = grad.as_ref().map_or(0.0, |g| g[i]);
        adam_m[i] = cfg.beta1 * adam_m[i] + (1.0 - cfg.beta1) * g;
        adam_v[i] = cfg.beta2 * adam_v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = adam_m[i] / bc1;
        let v_hat = adam_v[i] / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    p.zero_grad();
    Ok(())
}

/// Applies [`adam_step`] to every parameter of a store.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub config: AdamConfig,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config }
    }

    pub fn step(&self, store: &mut ParamStore, lr: f64) -> Result<()> {
        for p in store.iter_mut() {
            adam_step(p, lr, &self.config)?;
        }
        Ok(())
    }
}
