//! Reverse-time integrators: Euler–Maruyama (SDE), Euler (PF-ODE), DDIM, the
//! leapfrog step, CFG combination, and the Ψ one-step solver interface.
//!
//! Conventions: time runs 1 → t_min, so step increments use Δ = s − t < 0.
//! ε-prediction relates to the score by ε̂ = −σ_t·score, which turns the
//! reverse-SDE drift into `f·z + (g²/σ)·ε̂` and the PF-ODE drift into
//! `f·z + (g²/2σ)·ε̂`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::{BatchMeta, SampleBatch};
use crate::codec::LatentCodec;
use crate::error::{CoreError, Result};
use crate::model::NoisePredictor;
use crate::nn::embed::{Cond, NULL_TOKEN};
use crate::rng::Prng;
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;

/// Terminal prior scale σ̃ in `z_T ~ N(0, σ̃² I)`; 1 is the VP terminal
/// variance.
pub const TERMINAL_SIGMA: f64 = 1.0;

/// Stream tag for sampling draws.
const SAMPLE_STREAM: u64 = 0x7361_6D70;

/// Guard below which dividing by α_t is refused.
const ALPHA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    EulerMaruyama,
    EulerOde,
    Ddim,
    Leapfrog,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::EulerMaruyama,
        SolverKind::EulerOde,
        SolverKind::Ddim,
        SolverKind::Leapfrog,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::EulerMaruyama => "euler_maruyama",
            SolverKind::EulerOde => "euler_ode",
            SolverKind::Ddim => "ddim",
            SolverKind::Leapfrog => "leapfrog",
        }
    }

    pub fn parse(name: &str) -> Result<SolverKind> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|s| s.name()).collect();
                CoreError::config(format!(
                    "unknown solver `{name}`; valid solvers: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub solver: SolverKind,
    pub n_steps: usize,
    pub omega: f64,
    pub cond: Cond,
    pub seed: u64,
    /// Leapfrog step fraction in per-step units; 0.5 reproduces DDIM.
    pub leapfrog_h: f64,
}

impl SamplerConfig {
    pub fn new(solver: SolverKind, n_steps: usize, omega: f64, cond: Cond, seed: u64) -> Self {
        SamplerConfig {
            solver,
            n_steps,
            omega,
            cond,
            seed,
            leapfrog_h: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(CoreError::config("sampler: n_steps must be >= 1"));
        }
        if self.omega < 0.0 {
            return Err(CoreError::config(format!(
                "sampler: omega must be nonnegative, got {}",
                self.omega
            )));
        }
        if !(self.leapfrog_h > 0.0) {
            return Err(CoreError::config(format!(
                "sampler: leapfrog h must be positive, got {}",
                self.leapfrog_h
            )));
        }
        Ok(())
    }
}

/// Position/velocity carrier for the leapfrog integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogState {
    pub x: Tensor,
    pub v: Tensor,
    pub t: f64,
}

impl LeapfrogState {
    /// Fresh state at the terminal time with zero velocity (the first step
    /// derives its own half-step velocity from the model's ε̂).
    pub fn start(x: Tensor, t: f64) -> LeapfrogState {
        let v = Tensor::zeros(x.shape().to_vec());
        LeapfrogState { x, v, t }
    }
}

/// Classifier-free guidance: `ε̃ = (1+ω)ε_c − ω·ε_u`, computed as
/// `ε_c + ω(ε_c − ε_u)` so ω = 0 returns `ε_c` bit-exactly.
pub fn cfg_noise(eps_cond: &Tensor, eps_uncond: &Tensor, omega: f64) -> Result<Tensor> {
    let diff = eps_cond.sub(eps_uncond)?;
    eps_cond.add(&diff.scale(omega)?)
}

/// Model call + CFG + ε̂→x̂0 conversion: returns `(x̂0, ε̂)` with
/// `x̂0 = (z − σ_t ε̂)/α_t`, so `α_t·x̂0 + σ_t·ε̂ = z` holds identically.
pub fn predict_x0_eps(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    c: Cond,
    omega: f64,
    t: f64,
) -> Result<(Tensor, Tensor)> {
    if t < sch.t_min() || t > sch.t_max() {
        return Err(CoreError::domain(format!(
            "predict_x0_eps: t = {t} outside [{}, {}]",
            sch.t_min(),
            sch.t_max()
        )));
    }
    let eps = if omega == 0.0 {
        model.predict_eps(sch, z, c, t)?
    } else {
        let eps_c = model.predict_eps(sch, z, c, t)?;
        let eps_u = model.predict_eps(sch, z, NULL_TOKEN, t)?;
        cfg_noise(&eps_c, &eps_u, omega)?
    };
    let (alpha, sigma) = sch.alpha_sigma(t)?;
    if alpha < ALPHA_FLOOR {
        return Err(CoreError::domain(format!(
            "predict_x0_eps: alpha({t}) = {alpha} below division guard"
        )));
    }
    let x0 = Tensor::lincomb(1.0 / alpha, z, -sigma / alpha, &eps)?;
    Ok((x0, eps))
}

/// PF-ODE drift `h_θ(z, t) = f·z + (g²/2σ)·ε̂` with CFG noise.
pub fn ode_drift(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    c: Cond,
    omega: f64,
    t: f64,
) -> Result<Tensor> {
    let (_, eps) = predict_x0_eps(model, sch, z, c, omega, t)?;
    let (f, g2) = sch.drift_diffusion(t)?;
    let (_, sigma) = sch.alpha_sigma(t)?;
    Tensor::lincomb(f, z, g2 / (2.0 * sigma), &eps)
}

/// One reverse-SDE Euler–Maruyama step given explicit coefficients
/// (exposed so tests can stub f, g², σ independently of any schedule).
pub fn em_step_with_coeffs(
    z: &Tensor,
    eps_hat: &Tensor,
    f: f64,
    g2: f64,
    sigma: f64,
    dt: f64,
    noise: &Tensor,
) -> Result<Tensor> {
    let drift = Tensor::lincomb(f, z, g2 / sigma, eps_hat)?;
    let det = Tensor::lincomb(1.0, z, dt, &drift)?;
    let g = libm::sqrt(g2);
    Tensor::lincomb(1.0, &det, g * libm::sqrt(dt.abs()), noise)
}

/// One PF-ODE Euler step given explicit coefficients.
pub fn ode_step_with_coeffs(
    z: &Tensor,
    eps_hat: &Tensor,
    f: f64,
    g2: f64,
    sigma: f64,
    dt: f64,
) -> Result<Tensor> {
    let drift = Tensor::lincomb(f, z, g2 / (2.0 * sigma), eps_hat)?;
    Tensor::lincomb(1.0, z, dt, &drift)
}

fn check_descending(t: f64, s: f64, op: &str) -> Result<()> {
    if s >= t {
        return Err(CoreError::domain(format!(
            "{op}: target time s = {s} must be below t = {t}"
        )));
    }
    Ok(())
}

/// Euler–Maruyama discretization of the reverse SDE from `t` down to `s`,
/// with caller-supplied standard-normal `noise`.
pub fn euler_maruyama_step(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    c: Cond,
    omega: f64,
    t: f64,
    s: f64,
    noise: &Tensor,
) -> Result<Tensor> {
    check_descending(t, s, "euler_maruyama_step")?;
    let (_, eps) = predict_x0_eps(model, sch, z, c, omega, t)?;
    let (f, g2) = sch.drift_diffusion(t)?;
    let (_, sigma) = sch.alpha_sigma(t)?;
    em_step_with_coeffs(z, &eps, f, g2, sigma, s - t, noise)
}

/// Euler discretization of the PF-ODE from `t` down to `s`.
pub fn euler_ode_step(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    c: Cond,
    omega: f64,
    t: f64,
    s: f64,
) -> Result<Tensor> {
    check_descending(t, s, "euler_ode_step")?;
    let (_, eps) = predict_x0_eps(model, sch, z, c, omega, t)?;
    let (f, g2) = sch.drift_diffusion(t)?;
    let (_, sigma) = sch.alpha_sigma(t)?;
    ode_step_with_coeffs(z, &eps, f, g2, sigma, s - t)
}

/// DDIM update `z_s = α_s·x̂0 + σ_s·ε̂`. `s = t` is allowed and returns `z`
/// by the reconstruction identity.
pub fn ddim_step(
    sch: &ScheduleSpec,
    z: &Tensor,
    x0: &Tensor,
    eps: &Tensor,
    t: f64,
    s: f64,
) -> Result<Tensor> {
    if s > t {
        return Err(CoreError::domain(format!(
            "ddim_step: target time s = {s} above t = {t}"
        )));
    }
    if z.shape() != x0.shape() || z.shape() != eps.shape() {
        return Err(CoreError::shape(format!(
            "ddim_step: mismatched shapes z {:?}, x0 {:?}, eps {:?}",
            z.shape(),
            x0.shape(),
            eps.shape()
        )));
    }
    let _ = sch.alpha_sigma(t)?; // range check on t
    let (a_s, sig_s) = sch.alpha_sigma(s)?;
    Tensor::lincomb(a_s, x0, sig_s, eps)
}

/// One leapfrog step to time `s`: one model call yields `(x̂0, ε̂)`; the
/// position is re-anchored to `α_s·x̂0 + 2h·σ_s·ε̂` (DDIM-style
/// initialization `x_t = α_s·x̂0`, `v_t = σ_s·ε̂`, midpoint velocity
/// `v_{1/2} = 2v_t`), and the velocity is refreshed to
/// `v_{3/2} = v_{1/2} + h·F(x₁)` with `F` the PF-ODE drift at `(x₁, s)`.
/// `h = 0.5` recovers the DDIM position exactly; `h = 0` is a pure denoise.
pub fn leapfrog_step(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    state: &LeapfrogState,
    c: Cond,
    omega: f64,
    s: f64,
    h: f64,
) -> Result<LeapfrogState> {
    check_descending(state.t, s, "leapfrog_step")?;
    if h < 0.0 {
        return Err(CoreError::domain(format!(
            "leapfrog_step: h must be nonnegative, got {h}"
        )));
    }
    let (x0, eps) = predict_x0_eps(model, sch, &state.x, c, omega, state.t)?;
    let (a_s, sig_s) = sch.alpha_sigma(s)?;
    let pos = Tensor::lincomb(a_s, &x0, 2.0 * h * sig_s, &eps)?;
    let v_half = eps.scale(2.0 * sig_s)?;
    let force = ode_drift(model, sch, &pos, c, omega, s)?;
    let v_new = Tensor::lincomb(1.0, &v_half, h, &force)?;
    Ok(LeapfrogState {
        x: pos,
        v: v_new,
        t: s,
    })
}

/// The Ψ interface: single-call solver increment from `t` to `s` so that
/// `z + Ψ` is the plain one-step solve. No internal CFG — callers evaluate Ψ
/// at `c` and φ separately and combine. `s = t` returns a zero increment.
pub fn psi_solve(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    t: f64,
    s: f64,
    c: Cond,
    solver: SolverKind,
) -> Result<Tensor> {
    let inc = psi_solve_rows(
        model,
        sch,
        z,
        &vec![t; z.n_rows()],
        &vec![s; z.n_rows()],
        &vec![c; z.n_rows()],
        solver,
    )?;
    Ok(inc)
}

/// Row-wise Ψ: each row carries its own `(t, s, c)` triple. This is the form
/// distillation uses, where every batch element has its own timestep pair.
pub fn psi_solve_rows(
    model: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    ts: &[f64],
    ss: &[f64],
    conds: &[Cond],
    solver: SolverKind,
) -> Result<Tensor> {
    let n = z.n_rows();
    if ts.len() != n || ss.len() != n || conds.len() != n {
        return Err(CoreError::shape(format!(
            "psi_solve_rows: {} ts / {} ss / {} conds for {n} rows",
            ts.len(),
            ss.len(),
            conds.len()
        )));
    }
    for (t, s) in ts.iter().zip(ss) {
        if s > t {
            return Err(CoreError::domain(format!(
                "psi_solve: target time s = {s} above t = {t}"
            )));
        }
    }
    let eps = model.predict_eps_rows(sch, z, conds, ts)?;
    let d = z.n_cols();
    let mut out = Tensor::zeros(vec![n, d]);
    match solver {
        SolverKind::EulerMaruyama => {
            return Err(CoreError::unsupported(
                "psi_solve needs a deterministic solver (euler_ode, ddim, leapfrog)",
            ))
        }
        SolverKind::EulerOde => {
            for i in 0..n {
                if ss[i] == ts[i] {
                    continue; // empty interval => zero increment
                }
                let (f, g2) = sch.drift_diffusion(ts[i])?;
                let (_, sigma) = sch.alpha_sigma(ts[i])?;
                let dt = ss[i] - ts[i];
                for j in 0..d {
                    let drift = f * z.at(i, j) + g2 / (2.0 * sigma) * eps.at(i, j);
                    out.set(i, j, dt * drift);
                }
            }
        }
        // Leapfrog's position update at its DDIM-equivalent h = 0.5 equals
        // the DDIM step, so the two share one increment formula.
        SolverKind::Ddim | SolverKind::Leapfrog => {
            for i in 0..n {
                if ss[i] == ts[i] {
                    continue;
                }
                let (a_t, sig_t) = sch.alpha_sigma(ts[i])?;
                if a_t < ALPHA_FLOOR {
                    return Err(CoreError::domain(format!(
                        "psi_solve: alpha({}) below division guard",
                        ts[i]
                    )));
                }
                let (a_s, sig_s) = sch.alpha_sigma(ss[i])?;
                for j in 0..d {
                    let x0 = (z.at(i, j) - sig_t * eps.at(i, j)) / a_t;
                    out.set(i, j, a_s * x0 + sig_s * eps.at(i, j) - z.at(i, j));
                }
            }
        }
    }
    out.ensure_finite("psi_solve")?;
    Ok(out)
}

/// Full reverse-time sampling: draw `z_T ~ N(0, σ̃²I)`, run the configured
/// solver over the timestep grid, decode through the codec.
pub fn sample(
    model: &NoisePredictor,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<SampleBatch> {
    cfg.validate()?;
    if n == 0 {
        return Err(CoreError::config("sample: n must be >= 1"));
    }
    let d = model.point_dim();
    let mut rng = Prng::derive(cfg.seed, SAMPLE_STREAM);
    let mut z = rng.normal_tensor(vec![n, d]).scale(TERMINAL_SIGMA)?;
    let pairs = sch.step_pairs(cfg.n_steps)?;
    match cfg.solver {
        SolverKind::EulerMaruyama => {
            for (t, s) in pairs {
                let noise = rng.normal_tensor(vec![n, d]);
                z = euler_maruyama_step(model, sch, &z, cfg.cond, cfg.omega, t, s, &noise)?;
            }
        }
        SolverKind::EulerOde => {
            for (t, s) in pairs {
                z = euler_ode_step(model, sch, &z, cfg.cond, cfg.omega, t, s)?;
            }
        }
        SolverKind::Ddim => {
            for (t, s) in pairs {
                let (x0, eps) = predict_x0_eps(model, sch, &z, cfg.cond, cfg.omega, t)?;
                z = ddim_step(sch, &z, &x0, &eps, t, s)?;
            }
        }
        SolverKind::Leapfrog => {
            let mut state = LeapfrogState::start(z, sch.t_max());
            for (_, s) in pairs {
                state = leapfrog_step(model, sch, &state, cfg.cond, cfg.omega, s, cfg.leapfrog_h)?;
            }
            z = state.x;
        }
    }
    let points = codec.decode(&z)?;
    let labels = vec![cfg.cond.label(); n];
    SampleBatch::new(
        points,
        labels,
        BatchMeta {
            world: alloc::string::String::from("model"),
            seed: cfg.seed,
            schedule: Some(alloc::string::String::from(sch.kind().name())),
            solver: Some(alloc::string::String::from(cfg.solver.name())),
            n_steps: Some(cfg.n_steps),
            omega: Some(cfg.omega),
        },
    )
}
