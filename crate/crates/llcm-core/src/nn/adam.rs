//! Adam optimizer over flat parameter vectors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::nn::mlp::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam accumulators aligned with a model's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptState {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Result<Self> {
        if !(cfg.lr > 0.0 && (0.0..1.0).contains(&cfg.beta1) && (0.0..1.0).contains(&cfg.beta2)) {
            return Err(CoreError::config(format!(
                "invalid adam config: lr {}, betas ({}, {})",
                cfg.lr, cfg.beta1, cfg.beta2
            )));
        }
        Ok(OptState {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Replaces the learning rate mid-run (for schedules); accumulators keep
    /// their history.
    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(CoreError::config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        self.cfg.lr = lr;
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update in place.
    pub fn adam_step(&mut self, params: &mut MlpParams, grads: &[f64]) -> Result<()> {
        if grads.len() != self.m.len() || grads.len() != params.param_count() {
            return Err(CoreError::shape(format!(
                "adam_step: {} gradients for {} parameters",
                grads.len(),
                params.param_count()
            )));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            let layer = params
                .config()
                .spans()
                .into_iter()
                .find(|(_, r)| r.contains(&bad))
                .map(|(name, _)| name)
                .unwrap_or_else(|| format!("index {bad}"));
            return Err(CoreError::non_finite(format!(
                "adam_step: gradient of {layer} is {}",
                grads[bad]
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.cfg.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.cfg.beta2, t as f64);
        let mut flat = params.flat();
        for i in 0..flat.len() {
            let g = grads[i];
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * g;
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            flat[i] -= self.cfg.lr * m_hat / (libm::sqrt(v_hat) + self.cfg.eps);
        }
        params.set_flat(&flat)
    }
}
