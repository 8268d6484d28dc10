//! Forward perturbation kernel and SDE coefficients.
//!
//! The kernel is `q_{0t}(x_t | x_0) = N(α(t) x_0, σ²(t) I)` with a
//! variance-preserving schedule: `α(t)² + σ(t)² = 1`. Anchors live on a
//! discrete index grid of `n` steps (DDPM convention, `ᾱ_i = Π (1 − β_j)`,
//! `α = √ᾱ`); continuous `t` interpolates linearly in `log ᾱ` so solvers can
//! take arbitrary step sizes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Largest per-index β admitted for the cosine schedule (keeps `log ᾱ` finite
/// at t = 1, where the raw cosine formula sends ᾱ to zero).
const BETA_CLIP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    VpLinear,
    VpCosine,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::VpLinear => "vp_linear",
            ScheduleKind::VpCosine => "vp_cosine",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "vp_linear" => Ok(ScheduleKind::VpLinear),
            "vp_cosine" => Ok(ScheduleKind::VpCosine),
            other => Err(CoreError::config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// A variance-preserving noise schedule on t ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    n: usize,
    beta_min: f64,
    beta_max: f64,
    /// `log ᾱ` at the grid times `t_i = i / n`, length `n + 1`, starting at 0.
    log_abar: Vec<f64>,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, n: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::config(format!(
                "schedule needs at least 2 discrete steps, got {n}"
            )));
        }
        if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
            return Err(CoreError::config(format!(
                "betas must satisfy 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
            )));
        }
        let mut log_abar = Vec::with_capacity(n + 1);
        log_abar.push(0.0);
        match kind {
            ScheduleKind::VpLinear => {
                let mut acc = 0.0;
                for i in 1..=n {
                    let beta = beta_min + (beta_max - beta_min) * (i - 1) as f64 / (n - 1) as f64;
                    acc += libm::log(1.0 - beta);
                    log_abar.push(acc);
                }
            }
            ScheduleKind::VpCosine => {
                // Nichol–Dhariwal cosine: ᾱ(t) = f(t)/f(0),
                // f(t) = cos²((t + s)/(1 + s) · π/2), s = 0.008, β clipped.
                let s = 0.008;
                let f = |t: f64| {
                    let a = libm::cos((t + s) / (1.0 + s) * core::f64::consts::FRAC_PI_2);
                    a * a
                };
                let f0 = f(0.0);
                let mut prev = 1.0;
                let mut acc = 0.0;
                for i in 1..=n {
                    let abar = f(i as f64 / n as f64) / f0;
                    let beta = (1.0 - abar / prev).min(BETA_CLIP);
                    acc += libm::log(1.0 - beta);
                    prev *= 1.0 - beta;
                    log_abar.push(acc);
                }
            }
        }
        Ok(ScheduleSpec {
            kind,
            n,
            beta_min,
            beta_max,
            log_abar,
        })
    }

    /// DDPM-style defaults: linear β from 1e-4 to 0.02 over 1000 steps.
    pub fn default_linear() -> Self {
        ScheduleSpec::new(ScheduleKind::VpLinear, 1000, 1e-4, 0.02)
            .expect("default schedule parameters are valid")
    }

    pub fn default_cosine() -> Self {
        ScheduleSpec::new(ScheduleKind::VpCosine, 1000, 1e-4, 0.02)
            .expect("default schedule parameters are valid")
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn n_discrete(&self) -> usize {
        self.n
    }

    pub fn betas(&self) -> (f64, f64) {
        (self.beta_min, self.beta_max)
    }

    /// Smallest usable time: one discrete grid interval above zero, keeping
    /// σ(t) bounded away from the ε-prediction singularity at t = 0.
    pub fn t_min(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn t_max(&self) -> f64 {
        1.0
    }

    /// Time of discrete index `i` (0 ..= n).
    pub fn index_time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    fn check_t(&self, t: f64, context: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(CoreError::domain(format!(
                "{context}: t = {t} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Piecewise-linear interpolation of `log ᾱ` on the index grid.
    fn log_abar_at(&self, t: f64) -> f64 {
        let pos = t * self.n as f64;
        let idx = (pos as usize).min(self.n - 1);
        let frac = pos - idx as f64;
        self.log_abar[idx] + frac * (self.log_abar[idx + 1] - self.log_abar[idx])
    }

    /// `(α_t, σ_t)` with `α² + σ² = 1`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_t(t, "alpha_sigma")?;
        let la = self.log_abar_at(t);
        let alpha = libm::exp(0.5 * la);
        // σ² = 1 − ᾱ via expm1 keeps precision near t = 0.
        let sigma = libm::sqrt(-libm::expm1(la));
        Ok((alpha, sigma))
    }

    /// `(f_t, g_t²)` of the equivalent SDE `dx = f x dt + g dw`.
    ///
    /// `f = d log α/dt`; for VP schedules `g² = dσ²/dt − 2fσ²` collapses to
    /// `g² = −2f` exactly (σ² = 1 − α² makes the two terms merge). Defined on
    /// (0, 1]: at t = 1 the one-sided (left) derivative is used so solvers
    /// can start from the terminal time; t = 0 has no usable derivative
    /// (σ = 0 there makes the drift-to-score conversion singular anyway).
    pub fn drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CoreError::domain(format!(
                "drift_diffusion: t = {t} outside (0, 1]"
            )));
        }
        let pos = t * self.n as f64;
        let idx = (pos as usize).min(self.n - 1);
        let slope = (self.log_abar[idx + 1] - self.log_abar[idx]) * self.n as f64;
        let f = 0.5 * slope;
        Ok((f, -slope))
    }

    /// Transition coefficients from time `s` to a later time `t` (s ≤ t):
    /// `x_t | x_s ~ N(α_{ts} x_s, σ_{ts}² I)` with `α_{ts} = α_t/α_s`.
    pub fn transition(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        if s > t {
            return Err(CoreError::domain(format!(
                "transition: s = {s} must not exceed t = {t}"
            )));
        }
        let (a_s, sig_s) = self.alpha_sigma(s)?;
        let (a_t, sig_t) = self.alpha_sigma(t)?;
        let a_ts = a_t / a_s;
        let var = (sig_t * sig_t - a_ts * a_ts * sig_s * sig_s).max(0.0);
        Ok((a_ts, var))
    }

    /// `α(t)·x0 + σ(t)·ε`.
    pub fn perturb(&self, x0: &Tensor, t: f64, eps: &Tensor) -> Result<Tensor> {
        let (alpha, sigma) = self.alpha_sigma(t)?;
        Tensor::lincomb(alpha, x0, sigma, eps)
    }

    /// Row-wise perturbation with a separate time per row.
    pub fn perturb_rows(&self, x0: &Tensor, ts: &[f64], eps: &Tensor) -> Result<Tensor> {
        if ts.len() != x0.n_rows() {
            return Err(CoreError::shape(format!(
                "perturb_rows: {} times for {} rows",
                ts.len(),
                x0.n_rows()
            )));
        }
        let mut alphas = Vec::with_capacity(ts.len());
        let mut sigmas = Vec::with_capacity(ts.len());
        for &t in ts {
            let (a, s) = self.alpha_sigma(t)?;
            alphas.push(a);
            sigmas.push(s);
        }
        Tensor::lincomb_rows(&alphas, x0, &sigmas, eps)
    }

    /// Descending list of `n_steps` solver start times on [t_min, t_max];
    /// step `i` integrates from `grid[i]` down to `grid[i+1]` (implicitly
    /// `t_min` after the last entry). See [`step_pairs`](Self::step_pairs).
    pub fn timestep_grid(&self, n_steps: usize) -> Result<Vec<f64>> {
        if n_steps == 0 {
            return Err(CoreError::config("timestep_grid: n_steps must be >= 1"));
        }
        let t_max = self.t_max();
        let span = t_max - self.t_min();
        Ok((0..n_steps)
            .map(|i| t_max - span * i as f64 / n_steps as f64)
            .collect())
    }

    /// `(from, to)` time pairs covering [t_max → t_min] in `n_steps` pieces.
    pub fn step_pairs(&self, n_steps: usize) -> Result<Vec<(f64, f64)>> {
        let grid = self.timestep_grid(n_steps)?;
        Ok((0..n_steps)
            .map(|i| {
                let t = grid[i];
                let s = if i + 1 < n_steps {
                    grid[i + 1]
                } else {
                    self.t_min()
                };
                (t, s)
            })
            .collect())
    }
}
