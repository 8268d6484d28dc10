//! Exponential moving average of model parameters.

use alloc::format;

use crate::error::{CoreError, Result};
use crate::nn::mlp::MlpParams;

/// Shadow parameter copy updated as `shadow ← μ·shadow + (1 − μ)·online`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaParams {
    shadow: MlpParams,
    mu: f64,
}

impl EmaParams {
    pub fn new(init: MlpParams, mu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(CoreError::config(format!(
                "ema decay must lie in [0, 1), got {mu}"
            )));
        }
        Ok(EmaParams { shadow: init, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn shadow(&self) -> &MlpParams {
        &self.shadow
    }

    pub fn into_shadow(self) -> MlpParams {
        self.shadow
    }

    pub fn update(&mut self, online: &MlpParams) -> Result<()> {
        if online.config() != self.shadow.config() {
            return Err(CoreError::shape(format!(
                "ema update: online config {:?} does not mirror shadow {:?}",
                online.config(),
                self.shadow.config()
            )));
        }
        // Incremental form of mu*s + (1-mu)*o: equal inputs stay bitwise
        // fixed instead of picking up a rounding wobble.
        let mut flat = self.shadow.flat();
        for (s, o) in flat.iter_mut().zip(online.flat()) {
            *s += (1.0 - self.mu) * (o - *s);
        }
        self.shadow.set_flat(&flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::MlpConfig;

    fn cfg() -> MlpConfig {
        MlpConfig::new(2, alloc::vec![3], 2).unwrap()
    }

    #[test]
    fn mu_zero_copies_online() {
        let online = MlpParams::init(cfg(), 5, false).unwrap();
        let mut ema = EmaParams::new(MlpParams::zeros(cfg()).unwrap(), 0.0).unwrap();
        ema.update(&online).unwrap();
        assert_eq!(ema.shadow(), &online);
    }

    #[test]
    fn fixed_point_when_shadow_equals_online() {
        let online = MlpParams::init(cfg(), 5, false).unwrap();
        let mut ema = EmaParams::new(online.clone(), 0.7).unwrap();
        ema.update(&online).unwrap();
        assert_eq!(ema.shadow(), &online);
    }

    #[test]
    fn decay_arithmetic() {
        // shadow 0, online 1, mu 0.95 -> shadow 0.05.
        let zeros = MlpParams::zeros(cfg()).unwrap();
        let ones = {
            let mut p = MlpParams::zeros(cfg()).unwrap();
            let flat = alloc::vec![1.0; p.param_count()];
            p.set_flat(&flat).unwrap();
            p
        };
        let mut ema = EmaParams::new(zeros, 0.95).unwrap();
        ema.update(&ones).unwrap();
        for v in ema.shadow().flat() {
            assert!((v - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn mu_one_rejected() {
        let p = MlpParams::zeros(cfg()).unwrap();
        assert!(EmaParams::new(p, 1.0).is_err());
    }
}
