//! Consistency distillation: teacher denoising-score-matching training, the
//! ε-parameterized consistency head with exact boundary behaviour, the
//! jumping-step distillation loss, the full training loop, and few-step
//! consistency inference.
//!
//! The consistency head predicts the clean latent directly:
//! `f(z, ω, c, t) = c_skip(t)·z + c_out(t)·(z − σ_t·ε̂(z, ω, c, t))/α_t`,
//! with coefficients built from `u = (t − t_min)·s_t` so that
//! `c_skip(t_min) = 1` and `c_out(t_min) = 0` hold exactly and `f` is the
//! identity at the left endpoint of the time range.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::batch::{BatchMeta, SampleBatch};
use crate::codec::LatentCodec;
use crate::error::{CoreError, Result};
use crate::model::{EpsArch, MlpEps, NoisePredictor};
use crate::nn::adam::{AdamConfig, OptState};
use crate::nn::embed::{Cond, NULL_TOKEN};
use crate::nn::ema::EmaParams;
use crate::rng::Prng;
use crate::sampler::{psi_solve_rows, SolverKind, TERMINAL_SIGMA};
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;
use crate::world::ToyWorld;

/// Data scale assumed by the consistency coefficients.
pub const SIGMA_DATA: f64 = 0.5;

/// Time stretch in `u = (t − t_min)·s_t`; larger values push `c_skip` toward
/// zero (pure prediction) faster as `t` leaves the boundary.
pub const TIME_SCALE: f64 = 10.0;

/// Default transition width for the pseudo-Huber metric.
pub const PSEUDO_HUBER_C: f64 = 0.03;

/// Guard below which dividing by α_t is refused.
const ALPHA_FLOOR: f64 = 1e-8;

// Stream tags (ASCII mnemonics) for the independent PRNG streams.
const TEACHER_DATA_STREAM: u64 = 0x7464_6174; // "tdat"
const TEACHER_NOISE_STREAM: u64 = 0x746E_6F69; // "tnoi"
const DISTILL_DATA_STREAM: u64 = 0x6464_6174; // "ddat"
const DISTILL_PLAN_STREAM: u64 = 0x6470_6C6E; // "dpln"
const STUDENT_INIT_STREAM: u64 = 0x7369_6E69; // "sini"
const PRETRAIN_DATA_STREAM: u64 = 0x7064_6174; // "pdat"
const PRETRAIN_NOISE_STREAM: u64 = 0x706E_6F69; // "pnoi"
const CONSISTENCY_SAMPLE_STREAM: u64 = 0x6373_6D70; // "csmp"

/// Distance metric inside the distillation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    SquaredL2,
    PseudoHuber { c: f64 },
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::SquaredL2 => "squared_l2",
            MetricKind::PseudoHuber { .. } => "pseudo_huber",
        }
    }

    pub fn parse(name: &str) -> Result<MetricKind> {
        match name {
            "squared_l2" => Ok(MetricKind::SquaredL2),
            "pseudo_huber" => Ok(MetricKind::PseudoHuber { c: PSEUDO_HUBER_C }),
            other => Err(CoreError::config(format!(
                "unknown metric `{other}`; valid metrics: squared_l2, pseudo_huber"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MetricKind::PseudoHuber { c } = self {
            if c.is_nan() || *c <= 0.0 {
                return Err(CoreError::config(format!(
                    "pseudo_huber width must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Which teacher a run distills from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    Oracle,
    Trained,
}

impl TeacherKind {
    pub fn name(&self) -> &'static str {
        match self {
            TeacherKind::Oracle => "oracle",
            TeacherKind::Trained => "trained",
        }
    }

    pub fn parse(name: &str) -> Result<TeacherKind> {
        match name {
            "oracle" => Ok(TeacherKind::Oracle),
            "trained" => Ok(TeacherKind::Trained),
            other => Err(CoreError::config(format!(
                "unknown teacher kind `{other}`; valid kinds: oracle, trained"
            ))),
        }
    }
}

/// Teacher training (denoising score matching) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTrainConfig {
    pub arch: EpsArch,
    pub iters: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    /// Probability of replacing the class condition with the null token,
    /// which trains the unconditional branch CFG needs.
    pub cond_dropout: f64,
}

impl TeacherTrainConfig {
    pub fn new(arch: EpsArch) -> TeacherTrainConfig {
        TeacherTrainConfig {
            arch,
            iters: 2000,
            batch: 256,
            adam: AdamConfig::default(),
            cond_dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.arch.takes_omega() {
            return Err(CoreError::config(
                "teacher networks take no omega input; omega_embed must be 0",
            ));
        }
        if self.batch == 0 {
            return Err(CoreError::config("teacher training: batch must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.cond_dropout) {
            return Err(CoreError::config(format!(
                "cond_dropout must lie in [0, 1), got {}",
                self.cond_dropout
            )));
        }
        Ok(())
    }
}

/// Train an ε-prediction teacher by denoising score matching in latent space:
/// minimize `E‖ε̂(α_t z₀ + σ_t ε, c, t) − ε‖²` with `t ~ U[t_min, 1]` and
/// condition dropout. Returns the trained net and the per-iteration loss
/// trace; zero iterations returns the (zero-final-layer) initialization
/// untouched.
pub fn train_teacher(
    world: &ToyWorld,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    cfg: &TeacherTrainConfig,
    seed: u64,
) -> Result<(MlpEps, Vec<f64>)> {
    cfg.validate()?;
    if world.dim() != cfg.arch.point_dim || world.n_classes() != cfg.arch.n_classes {
        return Err(CoreError::config(format!(
            "teacher arch is {}d/{} classes but world `{}` is {}d/{} classes",
            cfg.arch.point_dim,
            cfg.arch.n_classes,
            world.name(),
            world.dim(),
            world.n_classes()
        )));
    }
    let mut net = MlpEps::init(cfg.arch.clone(), Prng::derive_seed(seed, STUDENT_INIT_STREAM), true)?;
    let mut opt = OptState::new(cfg.adam.clone(), net.params.param_count())?;
    let mut data_rng = Prng::derive(seed, TEACHER_DATA_STREAM);
    let mut noise_rng = Prng::derive(seed, TEACHER_NOISE_STREAM);
    let mut trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let batch = world.sample_with(cfg.batch, &mut data_rng)?;
        let z0 = codec.encode(&batch.points)?;
        let conds: Vec<Cond> = batch
            .labels
            .iter()
            .map(|l| {
                if noise_rng.uniform() < cfg.cond_dropout {
                    NULL_TOKEN
                } else {
                    Cond::from_label(*l)
                }
            })
            .collect();
        let ts: Vec<f64> = (0..cfg.batch)
            .map(|_| noise_rng.uniform_in(sch.t_min(), sch.t_max()))
            .collect();
        let eps = noise_rng.normal_tensor(vec![cfg.batch, world.dim()]);
        let zt = sch.perturb_rows(&z0, &ts, &eps)?;

        let mut tape = Tape::new();
        let (out, pids) = net.predict_tape(&mut tape, &zt, None, &conds, &ts)?;
        let eps_leaf = tape.leaf(eps);
        let diff = tape.sub(out, eps_leaf)?;
        let sq = tape.mul(diff, diff)?;
        let rs = tape.row_sum(sq)?;
        let loss_var = tape.mean(rs)?;
        let loss = tape.value(loss_var).scalar_value()?;
        if !loss.is_finite() {
            return Err(CoreError::Diverged {
                iteration: iter,
                detail: String::from("teacher loss became non-finite"),
            });
        }
        let grads = tape.backward(loss_var)?;
        let flat = net.params.collect_grads(&tape, &grads, &pids)?;
        opt.adam_step(&mut net.params, &flat)?;
        trace.push(loss);
    }
    Ok((net, trace))
}

/// The consistency function `f(z, ω, c, t)` built over an ω-conditioned
/// ε-predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyHead {
    pub eps: MlpEps,
    pub sigma_data: f64,
    pub time_scale: f64,
    /// Left endpoint of the time range, where `f` must be the identity.
    t_floor: f64,
}

impl ConsistencyHead {
    pub fn new(eps: MlpEps, sigma_data: f64, time_scale: f64, t_floor: f64) -> Result<Self> {
        if !eps.arch.takes_omega() {
            return Err(CoreError::config(
                "a consistency head needs an omega-conditioned predictor",
            ));
        }
        if !(sigma_data > 0.0) || !(time_scale > 0.0) {
            return Err(CoreError::config(format!(
                "sigma_data and time_scale must be positive, got {sigma_data} / {time_scale}"
            )));
        }
        if !(t_floor > 0.0 && t_floor < 1.0) {
            return Err(CoreError::config(format!(
                "t_floor must lie in (0, 1), got {t_floor}"
            )));
        }
        Ok(ConsistencyHead {
            eps,
            sigma_data,
            time_scale,
            t_floor,
        })
    }

    /// Fresh head with default coefficient constants and a seeded net.
    pub fn init(arch: EpsArch, sch: &ScheduleSpec, seed: u64) -> Result<Self> {
        let eps = MlpEps::init(arch, seed, false)?;
        ConsistencyHead::new(eps, SIGMA_DATA, TIME_SCALE, sch.t_min())
    }

    /// Student initialized from a trained teacher: the input layer is widened
    /// with zero rows for the ω block (appended last in the input layout), so
    /// the initial student computes exactly the teacher's function.
    pub fn from_teacher(teacher: &MlpEps, omega_embed: usize, sch: &ScheduleSpec) -> Result<Self> {
        if teacher.arch.takes_omega() {
            return Err(CoreError::config(
                "from_teacher expects an omega-free teacher",
            ));
        }
        let arch = teacher.arch.clone().with_omega(omega_embed);
        arch.validate()?;
        let params = teacher.params.widen_input(arch.in_dim())?;
        let eps = MlpEps { arch, params };
        ConsistencyHead::new(eps, SIGMA_DATA, TIME_SCALE, sch.t_min())
    }

    pub fn t_floor(&self) -> f64 {
        self.t_floor
    }

    /// `(c_skip, c_out)` at time `t`; exactly `(1, 0)` at `t = t_floor`.
    pub fn coeffs(&self, t: f64) -> Result<(f64, f64)> {
        if t < self.t_floor || t > 1.0 {
            return Err(CoreError::domain(format!(
                "coeffs: t = {t} outside [{}, 1]",
                self.t_floor
            )));
        }
        let u = (t - self.t_floor) * self.time_scale;
        let s2 = self.sigma_data * self.sigma_data;
        let c_skip = s2 / (u * u + s2);
        let c_out = u * self.sigma_data / libm::sqrt(u * u + s2);
        Ok((c_skip, c_out))
    }

    /// Per-row blend factors `(p, q)` such that `f = p·z + q·ε̂` row-wise:
    /// `p = c_skip + c_out/α_t`, `q = −c_out·σ_t/α_t`.
    fn row_factors(&self, sch: &ScheduleSpec, ts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut p = Vec::with_capacity(ts.len());
        let mut q = Vec::with_capacity(ts.len());
        for &t in ts {
            let (c_skip, c_out) = self.coeffs(t)?;
            let (a, s) = sch.alpha_sigma(t)?;
            if a < ALPHA_FLOOR {
                return Err(CoreError::domain(format!(
                    "consistency forward: alpha({t}) = {a} below division guard"
                )));
            }
            p.push(c_skip + c_out / a);
            q.push(-c_out * s / a);
        }
        Ok((p, q))
    }

    /// `f(z, ω, c, t)` with one shared `(ω, c, t)` for the batch.
    pub fn forward(
        &self,
        sch: &ScheduleSpec,
        z: &Tensor,
        omega: f64,
        c: Cond,
        t: f64,
    ) -> Result<Tensor> {
        let n = z.n_rows();
        self.forward_rows(sch, z, &vec![omega; n], &vec![c; n], &vec![t; n])
    }

    /// `f` with per-row `(ω, c, t)`.
    pub fn forward_rows(
        &self,
        sch: &ScheduleSpec,
        z: &Tensor,
        omegas: &[f64],
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<Tensor> {
        let eps_hat = self.eps.predict_rows(z, Some(omegas), conds, ts)?;
        let (p, q) = self.row_factors(sch, ts)?;
        Tensor::lincomb_rows(&p, z, &q, &eps_hat)
    }

    /// Tape version of `forward_rows` for training; returns the output var
    /// and the parameter leaves.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        sch: &ScheduleSpec,
        z: &Tensor,
        omegas: &[f64],
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<(crate::autodiff::VarId, Vec<crate::autodiff::VarId>)> {
        let (eps_var, pids) = self.eps.predict_tape(tape, z, Some(omegas), conds, ts)?;
        let (p, q) = self.row_factors(sch, ts)?;
        let z_leaf = tape.leaf(z.clone());
        let zp = tape.scale_rows(z_leaf, p)?;
        let eq = tape.scale_rows(eps_var, q)?;
        let out = tape.add(zp, eq)?;
        Ok((out, pids))
    }
}

/// Distillation configuration (desk-scale defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Jumping interval in grid indices.
    pub k: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// EMA decay for the target network.
    pub mu: f64,
    pub iters: usize,
    pub batch: usize,
    pub metric: MetricKind,
    /// Ψ solver for the target; must be deterministic.
    pub solver: SolverKind,
    pub adam: AdamConfig,
    /// ω Fourier block width appended to the student input.
    pub omega_embed: usize,
    /// Hidden sizes for a fresh student when the teacher is an oracle
    /// (ignored when initializing from a trained teacher's weights).
    pub student_hidden: Vec<usize>,
    /// ε-regression iterations fitting a fresh student net to the teacher
    /// before distillation. A trained teacher hands its weights to the
    /// student directly; an oracle teacher has no weights, so this replays
    /// the same "start from the teacher" policy in function space. Ignored
    /// when the teacher carries weights.
    pub init_iters: usize,
    /// Final learning rate as a fraction of `adam.lr`, reached by linear
    /// decay over the run; 1.0 keeps the rate constant. Constant-rate Adam
    /// plateaus at a gradient-noise floor that few-step sampling feels.
    pub lr_decay: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            k: 20,
            omega_min: 0.0,
            omega_max: 4.0,
            mu: 0.95,
            iters: 2000,
            batch: 256,
            metric: MetricKind::SquaredL2,
            solver: SolverKind::Leapfrog,
            adam: AdamConfig::default(),
            omega_embed: 8,
            student_hidden: vec![128, 128, 128],
            init_iters: 1500,
            lr_decay: 0.1,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self, sch: &ScheduleSpec) -> Result<()> {
        let n = sch.n_discrete();
        if self.k == 0 || self.k > n - 1 {
            return Err(CoreError::config(format!(
                "jumping interval k = {} must lie in [1, {}] for a {n}-point grid",
                self.k,
                n - 1
            )));
        }
        if !(self.omega_min <= self.omega_max) || self.omega_min < 0.0 {
            return Err(CoreError::config(format!(
                "omega range [{}, {}] invalid (need 0 <= min <= max)",
                self.omega_min, self.omega_max
            )));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(CoreError::config(format!(
                "EMA decay mu must lie in [0, 1), got {}",
                self.mu
            )));
        }
        if self.batch == 0 {
            return Err(CoreError::config("distillation: batch must be >= 1"));
        }
        self.metric.validate()?;
        if self.solver == SolverKind::EulerMaruyama {
            return Err(CoreError::config(
                "distillation needs a deterministic solver for the target",
            ));
        }
        if self.omega_embed == 0 || self.omega_embed % 2 != 0 {
            return Err(CoreError::config(format!(
                "omega_embed must be a positive even number, got {}",
                self.omega_embed
            )));
        }
        if self.student_hidden.is_empty() {
            return Err(CoreError::config("student_hidden must be nonempty"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(CoreError::config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }

    /// Learning rate for iteration `iter` of `total`: linear from `adam.lr`
    /// down to `adam.lr * lr_decay` at the last iteration.
    fn lr_at(&self, iter: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.adam.lr;
        }
        let frac = iter as f64 / (total - 1) as f64;
        self.adam.lr * (1.0 - (1.0 - self.lr_decay) * frac)
    }
}

/// The guided solver target
/// `ẑ = z + (1+ω)·Ψ(z, t, s, c) − ω·Ψ(z, t, s, φ)`, computed so that ω = 0
/// skips the unconditional solve and returns the plain conditional one-step
/// solve bit-exactly. No gradient can flow into the teacher: everything here
/// is plain tensor arithmetic outside any tape.
pub fn distill_target(
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    t_high: f64,
    t_low: f64,
    c: Cond,
    omega: f64,
    solver: SolverKind,
) -> Result<Tensor> {
    let n = z.n_rows();
    distill_target_rows(
        teacher,
        sch,
        z,
        &vec![t_high; n],
        &vec![t_low; n],
        &vec![c; n],
        &vec![omega; n],
        solver,
    )
}

/// Row-wise `distill_target` with per-row `(t_high, t_low, c, ω)`.
#[allow(clippy::too_many_arguments)]
pub fn distill_target_rows(
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    z: &Tensor,
    ts_high: &[f64],
    ts_low: &[f64],
    conds: &[Cond],
    omegas: &[f64],
    solver: SolverKind,
) -> Result<Tensor> {
    let n = z.n_rows();
    if omegas.len() != n {
        return Err(CoreError::shape(format!(
            "distill_target: {} omegas for {n} rows",
            omegas.len()
        )));
    }
    for &w in omegas {
        if w < 0.0 {
            return Err(CoreError::domain(format!(
                "distill_target: omega must be nonnegative, got {w}"
            )));
        }
    }
    let psi_c = psi_solve_rows(teacher, sch, z, ts_high, ts_low, conds, solver)?;
    if omegas.iter().all(|&w| w == 0.0) {
        return z.add(&psi_c);
    }
    let null_conds = vec![NULL_TOKEN; n];
    let psi_u = psi_solve_rows(teacher, sch, z, ts_high, ts_low, &null_conds, solver)?;
    // z + (1+ω)ψ_c − ωψ_u, row-wise ω.
    let plus: Vec<f64> = omegas.iter().map(|w| 1.0 + w).collect();
    let minus: Vec<f64> = omegas.iter().map(|w| -w).collect();
    let combined = Tensor::lincomb_rows(&plus, &psi_c, &minus, &psi_u)?;
    z.add(&combined)
}

/// Frozen randomness for one distillation step: grid indices, times, guidance
/// weights, and the shared noise draw. Separating the draw from the loss
/// evaluation keeps the loss a deterministic function of the parameters,
/// which the finite-difference gradient tests rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct CdPlan {
    pub idx_low: Vec<usize>,
    pub t_low: Vec<f64>,
    pub t_high: Vec<f64>,
    pub omegas: Vec<f64>,
    pub eps: Tensor,
}

/// Draw one step's randomness: `n ~ U{1..N−k}`, `ω ~ U[ω_min, ω_max]`,
/// `ε ~ N(0, I)` shared between the two noised latents.
pub fn cd_plan(
    rng: &mut Prng,
    n_rows: usize,
    dim: usize,
    cfg: &DistillConfig,
    sch: &ScheduleSpec,
) -> Result<CdPlan> {
    cfg.validate(sch)?;
    if n_rows == 0 {
        return Err(CoreError::config("cd_plan: need at least one row"));
    }
    let n_grid = sch.n_discrete();
    let mut idx_low = Vec::with_capacity(n_rows);
    let mut t_low = Vec::with_capacity(n_rows);
    let mut t_high = Vec::with_capacity(n_rows);
    let mut omegas = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let idx = 1 + rng.uniform_usize(n_grid - cfg.k);
        idx_low.push(idx);
        t_low.push(sch.index_time(idx));
        t_high.push(sch.index_time(idx + cfg.k));
        omegas.push(rng.uniform_in(cfg.omega_min, cfg.omega_max));
    }
    let eps = rng.normal_tensor(vec![n_rows, dim]);
    Ok(CdPlan {
        idx_low,
        t_low,
        t_high,
        omegas,
        eps,
    })
}

/// The two noised latents of one step, built from the same ε:
/// `z_t = α(t)·z₀ + σ(t)·ε` at `t_low` and `t_high`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedPair {
    pub z_low: Tensor,
    pub z_high: Tensor,
}

pub fn noised_pair(sch: &ScheduleSpec, z0: &Tensor, plan: &CdPlan) -> Result<NoisedPair> {
    Ok(NoisedPair {
        z_low: sch.perturb_rows(z0, &plan.t_low, &plan.eps)?,
        z_high: sch.perturb_rows(z0, &plan.t_high, &plan.eps)?,
    })
}

fn metric_value(a: &Tensor, b: &Tensor, metric: MetricKind) -> Result<f64> {
    let diff = a.sub(b)?;
    let n = diff.n_rows();
    let mut total = 0.0;
    for i in 0..n {
        let rs: f64 = diff.row(i).iter().map(|v| v * v).sum();
        total += match metric {
            MetricKind::SquaredL2 => rs,
            MetricKind::PseudoHuber { c } => libm::sqrt(rs + c * c) - c,
        };
    }
    Ok(total / n as f64)
}

/// Target half of the distillation loss: solver target from `z_high`, then
/// the EMA head at `t_low`. Pure tensor arithmetic — structurally gradient-
/// stopped.
fn cd_target(
    ema_head: &ConsistencyHead,
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    z_high: &Tensor,
    conds: &[Cond],
    plan: &CdPlan,
) -> Result<Tensor> {
    let target_z = distill_target_rows(
        teacher,
        sch,
        z_high,
        &plan.t_high,
        &plan.t_low,
        conds,
        &plan.omegas,
        cfg.solver,
    )?;
    ema_head.forward_rows(sch, &target_z, &plan.omegas, conds, &plan.t_low)
}

/// Distillation loss for a frozen plan (value only).
pub fn cd_loss_from_plan(
    head: &ConsistencyHead,
    ema_head: &ConsistencyHead,
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    z0: &Tensor,
    conds: &[Cond],
    plan: &CdPlan,
) -> Result<f64> {
    let pair = noised_pair(sch, z0, plan)?;
    let target = cd_target(ema_head, teacher, sch, cfg, &pair.z_high, conds, plan)?;
    let student = head.forward_rows(sch, &pair.z_high, &plan.omegas, conds, &plan.t_high)?;
    metric_value(&student, &target, cfg.metric)
}

/// Distillation loss and its gradient with respect to the student parameters.
pub fn cd_grad_from_plan(
    head: &ConsistencyHead,
    ema_head: &ConsistencyHead,
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    z0: &Tensor,
    conds: &[Cond],
    plan: &CdPlan,
) -> Result<(f64, Vec<f64>)> {
    let pair = noised_pair(sch, z0, plan)?;
    let target = cd_target(ema_head, teacher, sch, cfg, &pair.z_high, conds, plan)?;

    let mut tape = Tape::new();
    let (student, pids) =
        head.forward_tape(&mut tape, sch, &pair.z_high, &plan.omegas, conds, &plan.t_high)?;
    let target_leaf = tape.leaf(target);
    let diff = tape.sub(student, target_leaf)?;
    let sq = tape.mul(diff, diff)?;
    let rs = tape.row_sum(sq)?;
    let loss_var = match cfg.metric {
        MetricKind::SquaredL2 => tape.mean(rs)?,
        MetricKind::PseudoHuber { c } => {
            let shifted = tape.add_scalar(rs, c * c)?;
            let root = tape.sqrt(shifted)?;
            let centered = tape.add_scalar(root, -c)?;
            tape.mean(centered)?
        }
    };
    let loss = tape.value(loss_var).scalar_value()?;
    let grads = tape.backward(loss_var)?;
    let flat = head.eps.params.collect_grads(&tape, &grads, &pids)?;
    Ok((loss, flat))
}

/// One-call distillation loss drawing its own randomness (the reference form;
/// training uses the plan/grad split).
#[allow(clippy::too_many_arguments)]
pub fn cd_loss(
    head: &ConsistencyHead,
    ema_head: &ConsistencyHead,
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    z0: &Tensor,
    conds: &[Cond],
    rng: &mut Prng,
) -> Result<f64> {
    if z0.n_rows() == 0 {
        return Err(CoreError::config("cd_loss: batch must be nonempty"));
    }
    let plan = cd_plan(rng, z0.n_rows(), z0.n_cols(), cfg, sch)?;
    cd_loss_from_plan(head, ema_head, teacher, sch, cfg, z0, conds, &plan)
}

/// Result of a distillation run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Online student.
    pub head: ConsistencyHead,
    /// EMA target network — the head to sample from.
    pub ema: ConsistencyHead,
    pub loss_trace: Vec<f64>,
}

/// The full distillation loop: per iteration draw a data batch, draw the
/// plan, take an Adam step on the distillation loss, update the EMA target.
/// Regress a fresh student net onto the teacher's exact ε over the forward
/// marginals. This is the oracle-teacher analog of starting the student from
/// the teacher's weights: after it, `ε̂(z, ω, c, t) ≈ ε_teacher(z, c, t)` for
/// every ω in the training range, which is what a weight copy plus a zeroed ω
/// block gives when the teacher is a trained net.
fn fit_net_to_teacher(
    net: &mut MlpEps,
    teacher: &NoisePredictor,
    world: &ToyWorld,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<()> {
    const COND_DROPOUT: f64 = 0.1;
    let mut opt = OptState::new(cfg.adam.clone(), net.params.param_count())?;
    let mut data_rng = Prng::derive(seed, PRETRAIN_DATA_STREAM);
    let mut noise_rng = Prng::derive(seed, PRETRAIN_NOISE_STREAM);
    for iter in 0..cfg.init_iters {
        let batch = world.sample_with(cfg.batch, &mut data_rng)?;
        let z0 = codec.encode(&batch.points)?;
        let conds: Vec<Cond> = batch
            .labels
            .iter()
            .map(|l| {
                if noise_rng.uniform() < COND_DROPOUT {
                    NULL_TOKEN
                } else {
                    Cond::from_label(*l)
                }
            })
            .collect();
        let ts: Vec<f64> = (0..cfg.batch)
            .map(|_| noise_rng.uniform_in(sch.t_min(), sch.t_max()))
            .collect();
        let omegas: Vec<f64> = (0..cfg.batch)
            .map(|_| noise_rng.uniform_in(cfg.omega_min, cfg.omega_max))
            .collect();
        let eps = noise_rng.normal_tensor(vec![cfg.batch, world.dim()]);
        let zt = sch.perturb_rows(&z0, &ts, &eps)?;
        let target = teacher.predict_eps_rows(sch, &zt, &conds, &ts)?;

        let mut tape = Tape::new();
        let (out, pids) = net.predict_tape(&mut tape, &zt, Some(&omegas), &conds, &ts)?;
        let target_leaf = tape.leaf(target);
        let diff = tape.sub(out, target_leaf)?;
        let sq = tape.mul(diff, diff)?;
        let rs = tape.row_sum(sq)?;
        let loss_var = tape.mean(rs)?;
        let loss = tape.value(loss_var).scalar_value()?;
        if !loss.is_finite() {
            return Err(CoreError::Diverged {
                iteration: iter,
                detail: String::from("student init regression loss became non-finite"),
            });
        }
        let grads = tape.backward(loss_var)?;
        let flat = net.params.collect_grads(&tape, &grads, &pids)?;
        opt.set_lr(cfg.lr_at(iter, cfg.init_iters))?;
        opt.adam_step(&mut net.params, &flat)?;
    }
    Ok(())
}

pub fn train_llcm(
    teacher: &NoisePredictor,
    world: &ToyWorld,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate(sch)?;
    if world.dim() != teacher.point_dim() || world.n_classes() != teacher.n_classes() {
        return Err(CoreError::config(format!(
            "teacher is {}d/{} classes but world `{}` is {}d/{} classes",
            teacher.point_dim(),
            teacher.n_classes(),
            world.name(),
            world.dim(),
            world.n_classes()
        )));
    }
    let mut head = match teacher {
        NoisePredictor::Mlp(m) => ConsistencyHead::from_teacher(m, cfg.omega_embed, sch)?,
        NoisePredictor::Oracle(w) => {
            let mut arch = EpsArch::teacher_default(w.dim(), w.n_classes());
            arch.hidden = cfg.student_hidden.clone();
            let mut h = ConsistencyHead::init(
                arch.with_omega(cfg.omega_embed),
                sch,
                Prng::derive_seed(seed, STUDENT_INIT_STREAM),
            )?;
            fit_net_to_teacher(&mut h.eps, teacher, world, codec, sch, cfg, seed)?;
            h
        }
    };
    let mut ema = EmaParams::new(head.eps.params.clone(), cfg.mu)?;
    let mut ema_head = head.clone();
    let mut opt = OptState::new(cfg.adam.clone(), head.eps.params.param_count())?;
    let mut data_rng = Prng::derive(seed, DISTILL_DATA_STREAM);
    let mut plan_rng = Prng::derive(seed, DISTILL_PLAN_STREAM);
    let mut trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let batch = world.sample_with(cfg.batch, &mut data_rng)?;
        let z0 = codec.encode(&batch.points)?;
        let conds: Vec<Cond> = batch.labels.iter().map(|l| Cond::from_label(*l)).collect();
        let plan = cd_plan(&mut plan_rng, cfg.batch, world.dim(), cfg, sch)?;
        let (loss, grads) =
            cd_grad_from_plan(&head, &ema_head, teacher, sch, cfg, &z0, &conds, &plan)?;
        if !loss.is_finite() {
            return Err(CoreError::Diverged {
                iteration: iter,
                detail: format!(
                    "distillation loss became non-finite (last finite loss: {:?})",
                    trace.last()
                ),
            });
        }
        opt.set_lr(cfg.lr_at(iter, cfg.iters))?;
        opt.adam_step(&mut head.eps.params, &grads)?;
        ema.update(&head.eps.params)?;
        ema_head.eps.params = ema.shadow().clone();
        trace.push(loss);
    }
    Ok(TrainOutcome {
        head,
        ema: ema_head,
        loss_trace: trace,
    })
}

/// Few-step consistency inference: denoise from the terminal prior, then
/// alternate re-noising to the next grid time (fresh ε each time) with
/// another consistency evaluation. One step decodes `f(z_T, ω, c, 1)`
/// directly.
#[allow(clippy::too_many_arguments)]
pub fn consistency_sample(
    head: &ConsistencyHead,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    n_steps: usize,
    omega: f64,
    cond: Cond,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(CoreError::config("consistency_sample: n must be >= 1"));
    }
    if omega < 0.0 {
        return Err(CoreError::config(format!(
            "consistency_sample: omega must be nonnegative, got {omega}"
        )));
    }
    let grid = sch.timestep_grid(n_steps)?;
    let d = head.eps.arch.point_dim;
    let mut rng = Prng::derive(seed, CONSISTENCY_SAMPLE_STREAM);
    let z = rng.normal_tensor(vec![n, d]).scale(TERMINAL_SIGMA)?;
    let mut x0 = head.forward(sch, &z, omega, cond, grid[0])?;
    for &tau in &grid[1..] {
        let eps = rng.normal_tensor(vec![n, d]);
        let z = sch.perturb(&x0, tau, &eps)?;
        x0 = head.forward(sch, &z, omega, cond, tau)?;
    }
    let points = codec.decode(&x0)?;
    SampleBatch::new(
        points,
        vec![cond.label(); n],
        BatchMeta {
            world: String::from("model"),
            seed,
            schedule: Some(String::from(sch.kind().name())),
            solver: Some(String::from("consistency")),
            n_steps: Some(n_steps),
            omega: Some(omega),
        },
    )
}

/// Mean ℓ2 gap of `f` evaluated along teacher PF-ODE trajectories: integrate
/// DDIM on a fine grid from the prior, probe `f` at `n_probe` evenly spaced
/// grid times on the way down, and average the distance between consecutive
/// probe outputs. A perfectly self-consistent head scores 0.
#[allow(clippy::too_many_arguments)]
pub fn self_consistency_gap(
    head: &ConsistencyHead,
    teacher: &NoisePredictor,
    sch: &ScheduleSpec,
    omega: f64,
    cond: Cond,
    n_traj: usize,
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    use crate::sampler::{ddim_step, predict_x0_eps};
    if n_traj == 0 || n_probe < 2 {
        return Err(CoreError::config(
            "self_consistency_gap: need n_traj >= 1 and n_probe >= 2",
        ));
    }
    let substeps = 10;
    let d = teacher.point_dim();
    let mut rng = Prng::derive(seed, CONSISTENCY_SAMPLE_STREAM ^ 0xFF);
    let mut z = rng
        .normal_tensor(vec![n_traj, d])
        .scale(TERMINAL_SIGMA)?;
    let pairs = sch.step_pairs(n_probe * substeps)?;
    let mut probes: Vec<Tensor> = Vec::with_capacity(n_probe + 1);
    probes.push(head.forward(sch, &z, omega, cond, sch.t_max())?);
    for (i, (t, s)) in pairs.iter().enumerate() {
        let (x0, eps) = predict_x0_eps(teacher, sch, &z, cond, omega, *t)?;
        z = ddim_step(sch, &z, &x0, &eps, *t, *s)?;
        if (i + 1) % substeps == 0 {
            probes.push(head.forward(sch, &z, omega, cond, *s)?);
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for w in probes.windows(2) {
        let diff = w[1].sub(&w[0])?;
        for i in 0..n_traj {
            let rs: f64 = diff.row(i).iter().map(|v| v * v).sum();
            total += libm::sqrt(rs);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> EpsArch {
        EpsArch {
            point_dim: 2,
            n_classes: 4,
            cond_embed: 4,
            time_embed: 8,
            omega_embed: 0,
            hidden: vec![16, 16],
        }
    }

    fn tiny_head(sch: &ScheduleSpec, seed: u64) -> ConsistencyHead {
        ConsistencyHead::init(tiny_arch().with_omega(4), sch, seed).unwrap()
    }

    fn tiny_cfg() -> DistillConfig {
        DistillConfig {
            batch: 8,
            iters: 4,
            omega_embed: 4,
            student_hidden: vec![16, 16],
            init_iters: 2,
            ..DistillConfig::default()
        }
    }

    fn oracle_setup() -> (NoisePredictor, ToyWorld, LatentCodec, ScheduleSpec) {
        let w = ToyWorld::gmm_grid(4, 2, 0.15);
        let codec = LatentCodec::identity(2);
        let sch = ScheduleSpec::default_linear();
        (NoisePredictor::oracle(w.clone()).unwrap(), w, codec, sch)
    }

    #[test]
    fn coeff_boundary_is_exact() {
        let sch = ScheduleSpec::default_linear();
        let head = tiny_head(&sch, 1);
        let (cs, co) = head.coeffs(sch.t_min()).unwrap();
        assert_eq!(cs, 1.0);
        assert_eq!(co, 0.0);
        for &t in &[0.01, 0.3, 0.777, 1.0] {
            let (cs, co) = head.coeffs(t).unwrap();
            assert!(cs.is_finite() && co.is_finite());
            assert!(cs > 0.0 && cs <= 1.0 && co >= 0.0);
        }
        assert!(head.coeffs(sch.t_min() / 2.0).is_err());
        assert!(head.coeffs(1.1).is_err());
    }

    #[test]
    fn forward_at_t_floor_is_identity() {
        let sch = ScheduleSpec::default_linear();
        let head = tiny_head(&sch, 2);
        let mut rng = Prng::new(3);
        let z = rng.normal_tensor(vec![6, 2]);
        let out = head
            .forward(&sch, &z, 1.3, Cond::Class(2), sch.t_min())
            .unwrap();
        assert!(out.max_abs_diff(&z).unwrap() < 1e-12);
    }

    #[test]
    fn zero_c_out_reduces_to_skip_scaling() {
        // With c_out = 0 the blend is p = c_skip, q = 0, so f = c_skip·z.
        let mut rng = Prng::new(4);
        let z = rng.normal_tensor(vec![3, 2]);
        let eps = rng.normal_tensor(vec![3, 2]);
        let p = vec![0.7; 3];
        let q = vec![0.0; 3];
        let out = Tensor::lincomb_rows(&p, &z, &q, &eps).unwrap();
        assert!(out.max_abs_diff(&z.scale(0.7).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn forward_tape_matches_pure_forward() {
        let sch = ScheduleSpec::default_linear();
        let head = tiny_head(&sch, 5);
        let mut rng = Prng::new(6);
        let z = rng.normal_tensor(vec![4, 2]);
        let omegas = [0.0, 1.0, 2.5, 4.0];
        let conds = [Cond::Class(0), Cond::Class(1), NULL_TOKEN, Cond::Class(3)];
        let ts = [0.01, 0.4, 0.9, 1.0];
        let pure = head.forward_rows(&sch, &z, &omegas, &conds, &ts).unwrap();
        let mut tape = Tape::new();
        let (out, _) = head
            .forward_tape(&mut tape, &sch, &z, &omegas, &conds, &ts)
            .unwrap();
        assert!(tape.value(out).max_abs_diff(&pure).unwrap() < 1e-15);
    }

    #[test]
    fn head_requires_omega_input() {
        let sch = ScheduleSpec::default_linear();
        let eps = MlpEps::init(tiny_arch(), 1, false).unwrap();
        assert!(ConsistencyHead::new(eps, SIGMA_DATA, TIME_SCALE, sch.t_min()).is_err());
    }

    #[test]
    fn from_teacher_preserves_function_and_adds_omega() {
        let sch = ScheduleSpec::default_linear();
        let teacher = MlpEps::init(tiny_arch(), 7, false).unwrap();
        let head = ConsistencyHead::from_teacher(&teacher, 4, &sch).unwrap();
        let mut rng = Prng::new(8);
        let z = rng.normal_tensor(vec![5, 2]);
        let conds = vec![Cond::Class(1); 5];
        let ts = vec![0.6; 5];
        let t_out = teacher.predict_rows(&z, None, &conds, &ts).unwrap();
        // Any ω gives the same initial output: the new input rows are zero.
        for omega in [0.0, 2.0] {
            let s_out = head
                .eps
                .predict_rows(&z, Some(&vec![omega; 5]), &conds, &ts)
                .unwrap();
            assert!(s_out.max_abs_diff(&t_out).unwrap() < 1e-15);
        }
    }

    #[test]
    fn teacher_zero_iterations_returns_init() {
        let (_, world, codec, sch) = oracle_setup();
        let mut cfg = TeacherTrainConfig::new(tiny_arch());
        cfg.iters = 0;
        let (net, trace) = train_teacher(&world, &codec, &sch, &cfg, 11).unwrap();
        assert!(trace.is_empty());
        let fresh = MlpEps::init(
            tiny_arch(),
            Prng::derive_seed(11, STUDENT_INIT_STREAM),
            true,
        )
        .unwrap();
        assert_eq!(net.params.flat(), fresh.params.flat());
    }

    #[test]
    fn teacher_loss_drops_below_half_of_initial() {
        let (_, world, codec, sch) = oracle_setup();
        let mut cfg = TeacherTrainConfig::new(tiny_arch());
        cfg.iters = 300;
        cfg.batch = 64;
        let (_, trace) = train_teacher(&world, &codec, &sch, &cfg, 12).unwrap();
        // Zero-final init puts the first loss at E||eps||^2 = dim = 2.
        assert!((trace[0] - 2.0).abs() < 0.6, "initial loss {}", trace[0]);
        let last = *trace.last().unwrap();
        assert!(last < 0.5 * trace[0], "no progress: {} -> {last}", trace[0]);
    }

    #[test]
    fn target_with_equal_times_is_input() {
        // Degenerate interval makes Ψ vanish, so the target is z itself for
        // any ω — the Ψ ≡ 0 reduction.
        let (teacher, _, _, sch) = oracle_setup();
        let mut rng = Prng::new(14);
        let z = rng.normal_tensor(vec![4, 2]);
        for omega in [0.0, 2.0] {
            let t = distill_target(
                &teacher,
                &sch,
                &z,
                0.5,
                0.5,
                Cond::Class(0),
                omega,
                SolverKind::Leapfrog,
            )
            .unwrap();
            assert_eq!(t, z);
        }
    }

    #[test]
    fn target_at_zero_omega_is_plain_conditional_solve() {
        let (teacher, _, _, sch) = oracle_setup();
        let mut rng = Prng::new(15);
        let z = rng.normal_tensor(vec![4, 2]);
        let (t_high, t_low) = (0.52, 0.5);
        let c = Cond::Class(2);
        let target = distill_target(
            &teacher,
            &sch,
            &z,
            t_high,
            t_low,
            c,
            0.0,
            SolverKind::Leapfrog,
        )
        .unwrap();
        let psi = psi_solve_rows(
            &teacher,
            &sch,
            &z,
            &[t_high; 4],
            &[t_low; 4],
            &[c; 4],
            SolverKind::Leapfrog,
        )
        .unwrap();
        assert_eq!(target, z.add(&psi).unwrap());
    }

    #[test]
    fn plan_respects_index_and_omega_ranges() {
        let (_, _, _, sch) = oracle_setup();
        let cfg = DistillConfig {
            batch: 64,
            ..tiny_cfg()
        };
        let mut rng = Prng::new(16);
        let plan = cd_plan(&mut rng, 64, 2, &cfg, &sch).unwrap();
        let n = sch.n_discrete();
        for i in 0..64 {
            assert!(plan.idx_low[i] >= 1 && plan.idx_low[i] <= n - cfg.k);
            // the pair spans exactly k grid intervals
            let gap = plan.t_high[i] - plan.t_low[i];
            assert!((gap - cfg.k as f64 / n as f64).abs() < 1e-12);
            assert!(plan.omegas[i] >= cfg.omega_min && plan.omegas[i] <= cfg.omega_max);
        }
    }

    #[test]
    fn noised_pair_shares_the_same_epsilon() {
        let (_, _, _, sch) = oracle_setup();
        let cfg = tiny_cfg();
        let mut rng = Prng::new(17);
        let z0 = rng.normal_tensor(vec![8, 2]);
        let plan = cd_plan(&mut rng, 8, 2, &cfg, &sch).unwrap();
        let pair = noised_pair(&sch, &z0, &plan).unwrap();
        for i in 0..8 {
            let (a_h, s_h) = sch.alpha_sigma(plan.t_high[i]).unwrap();
            let (a_l, s_l) = sch.alpha_sigma(plan.t_low[i]).unwrap();
            for j in 0..2 {
                let e_h = (pair.z_high.at(i, j) - a_h * z0.at(i, j)) / s_h;
                let e_l = (pair.z_low.at(i, j) - a_l * z0.at(i, j)) / s_l;
                assert!((e_h - e_l).abs() < 1e-12);
                assert!((e_h - plan.eps.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_zero_when_branches_coincide() {
        // Equal times collapse the target to f(z_high, t_high) evaluated with
        // the same parameters, so d(x, x) = 0 and the gradient vanishes.
        let (teacher, _, _, sch) = oracle_setup();
        let head = tiny_head(&sch, 18);
        let cfg = tiny_cfg();
        let mut rng = Prng::new(19);
        let z0 = rng.normal_tensor(vec![4, 2]);
        let conds = vec![Cond::Class(0); 4];
        let plan = CdPlan {
            idx_low: vec![500; 4],
            t_low: vec![0.5; 4],
            t_high: vec![0.5; 4],
            omegas: vec![1.0; 4],
            eps: rng.normal_tensor(vec![4, 2]),
        };
        let (loss, grads) =
            cd_grad_from_plan(&head, &head, &teacher, &sch, &cfg, &z0, &conds, &plan).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.abs() < 1e-18));
    }

    #[test]
    fn loss_nonnegative_for_both_metrics() {
        let (teacher, _, _, sch) = oracle_setup();
        let head = tiny_head(&sch, 20);
        let ema = tiny_head(&sch, 21);
        let mut rng = Prng::new(22);
        let z0 = rng.normal_tensor(vec![8, 2]);
        let conds = vec![Cond::Class(1); 8];
        for metric in [
            MetricKind::SquaredL2,
            MetricKind::PseudoHuber { c: PSEUDO_HUBER_C },
        ] {
            let cfg = DistillConfig {
                metric,
                ..tiny_cfg()
            };
            let mut loss_rng = Prng::new(23);
            let loss =
                cd_loss(&head, &ema, &teacher, &sch, &cfg, &z0, &conds, &mut loss_rng).unwrap();
            assert!(loss >= 0.0, "{}: {loss}", metric.name());
        }
    }

    #[test]
    fn metric_values_match_hand_computation() {
        let a = Tensor::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let b = Tensor::zeros(vec![2, 2]);
        // rows sums of squares: 25 and 0 -> mean 12.5
        assert_eq!(metric_value(&a, &b, MetricKind::SquaredL2).unwrap(), 12.5);
        // pseudo-Huber with c = 1: (sqrt(26) - 1 + sqrt(1) - 1)/2
        let ph = metric_value(&a, &b, MetricKind::PseudoHuber { c: 1.0 }).unwrap();
        assert!((ph - (libm::sqrt(26.0) - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let (teacher, _, _, sch) = oracle_setup();
        let head = tiny_head(&sch, 24);
        let ema = tiny_head(&sch, 25);
        let mut rng = Prng::new(26);
        let z0 = rng.normal_tensor(vec![4, 2]);
        let conds = vec![Cond::Class(0), Cond::Class(1), Cond::Class(2), NULL_TOKEN];
        for metric in [
            MetricKind::SquaredL2,
            MetricKind::PseudoHuber { c: PSEUDO_HUBER_C },
        ] {
            let cfg = DistillConfig {
                metric,
                ..tiny_cfg()
            };
            let plan = cd_plan(&mut rng, 4, 2, &cfg, &sch).unwrap();
            let (_, grads) =
                cd_grad_from_plan(&head, &ema, &teacher, &sch, &cfg, &z0, &conds, &plan).unwrap();
            let flat = head.eps.params.flat();
            let h = 1e-5;
            // probe a spread of parameter indices
            for idx in (0..flat.len()).step_by(flat.len() / 17) {
                let mut probe = head.clone();
                let mut w = flat.clone();
                w[idx] += h;
                probe.eps.params.set_flat(&w).unwrap();
                let up =
                    cd_loss_from_plan(&probe, &ema, &teacher, &sch, &cfg, &z0, &conds, &plan)
                        .unwrap();
                w[idx] -= 2.0 * h;
                probe.eps.params.set_flat(&w).unwrap();
                let down =
                    cd_loss_from_plan(&probe, &ema, &teacher, &sch, &cfg, &z0, &conds, &plan)
                        .unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (grads[idx] - fd).abs() / grads[idx].abs().max(fd.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{}: param {idx} ad {} fd {fd}",
                    metric.name(),
                    grads[idx]
                );
            }
        }
    }

    #[test]
    fn loss_depends_on_ema_but_grads_stay_well_defined() {
        // The target branch is evaluated outside the tape: perturbing the EMA
        // parameters changes the loss value (the target moved) while the
        // gradient is still exactly the gradient of the student branch
        // against a constant target.
        let (teacher, _, _, sch) = oracle_setup();
        let head = tiny_head(&sch, 27);
        let ema_a = tiny_head(&sch, 28);
        let mut ema_b = ema_a.clone();
        let mut w = ema_b.eps.params.flat();
        for v in w.iter_mut() {
            *v += 0.05;
        }
        ema_b.eps.params.set_flat(&w).unwrap();
        let cfg = tiny_cfg();
        let mut rng = Prng::new(29);
        let z0 = rng.normal_tensor(vec![4, 2]);
        let conds = vec![Cond::Class(0); 4];
        let plan = cd_plan(&mut rng, 4, 2, &cfg, &sch).unwrap();
        let la =
            cd_loss_from_plan(&head, &ema_a, &teacher, &sch, &cfg, &z0, &conds, &plan).unwrap();
        let lb =
            cd_loss_from_plan(&head, &ema_b, &teacher, &sch, &cfg, &z0, &conds, &plan).unwrap();
        assert!((la - lb).abs() > 1e-9, "target ignored the EMA parameters");
        let (_, ga) =
            cd_grad_from_plan(&head, &ema_a, &teacher, &sch, &cfg, &z0, &conds, &plan).unwrap();
        assert!(ga.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn train_llcm_runs_and_mu_zero_keeps_ema_equal_to_student() {
        let (teacher, world, codec, sch) = oracle_setup();
        let cfg = DistillConfig {
            mu: 0.0,
            ..tiny_cfg()
        };
        let out = train_llcm(&teacher, &world, &codec, &sch, &cfg, 30).unwrap();
        assert_eq!(out.loss_trace.len(), cfg.iters);
        assert_eq!(out.head.eps.params.flat(), out.ema.eps.params.flat());
        assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn train_llcm_from_mlp_teacher_widens_weights() {
        let (_, world, codec, sch) = oracle_setup();
        let teacher_net = MlpEps::init(tiny_arch(), 31, false).unwrap();
        let teacher = NoisePredictor::Mlp(teacher_net.clone());
        let cfg = DistillConfig {
            iters: 1,
            ..tiny_cfg()
        };
        let out = train_llcm(&teacher, &world, &codec, &sch, &cfg, 32).unwrap();
        let expect_in = tiny_arch().with_omega(cfg.omega_embed).in_dim();
        assert_eq!(out.head.eps.params.config().in_dim, expect_in);
    }

    #[test]
    fn consistency_sample_one_step_is_single_forward() {
        let sch = ScheduleSpec::default_linear();
        let head = tiny_head(&sch, 33);
        let codec = LatentCodec::seeded(2, 34).unwrap();
        let (n, seed, omega, c) = (6, 35, 1.5, Cond::Class(3));
        let batch = consistency_sample(&head, &codec, &sch, 1, omega, c, n, seed).unwrap();
        let mut rng = Prng::derive(seed, CONSISTENCY_SAMPLE_STREAM);
        let z = rng.normal_tensor(vec![n, 2]).scale(TERMINAL_SIGMA).unwrap();
        let x0 = head.forward(&sch, &z, omega, c, 1.0).unwrap();
        let want = codec.decode(&x0).unwrap();
        assert_eq!(batch.points, want);
        assert_eq!(batch.labels, vec![Some(3); n]);
    }

    #[test]
    fn consistency_sample_is_deterministic_and_step_dependent() {
        let sch = ScheduleSpec::default_linear();
        let head = tiny_head(&sch, 36);
        let codec = LatentCodec::identity(2);
        let a = consistency_sample(&head, &codec, &sch, 4, 0.5, NULL_TOKEN, 8, 37).unwrap();
        let b = consistency_sample(&head, &codec, &sch, 4, 0.5, NULL_TOKEN, 8, 37).unwrap();
        assert_eq!(a, b);
        let c = consistency_sample(&head, &codec, &sch, 2, 0.5, NULL_TOKEN, 8, 37).unwrap();
        assert!(a.points.max_abs_diff(&c.points).unwrap() > 1e-9);
    }

    #[test]
    fn self_consistency_gap_zero_for_identity_like_head() {
        // An untrained head has a large gap; the oracle teacher's trajectory
        // probes must at least produce a finite positive number.
        let (teacher, _, _, sch) = oracle_setup();
        let head = tiny_head(&sch, 38);
        let gap =
            self_consistency_gap(&head, &teacher, &sch, 0.0, Cond::Class(0), 4, 4, 39).unwrap();
        assert!(gap.is_finite() && gap > 0.0);
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let sch = ScheduleSpec::default_linear();
        let base = tiny_cfg();
        for bad in [
            DistillConfig { k: 0, ..base.clone() },
            DistillConfig { k: 1000, ..base.clone() },
            DistillConfig { omega_min: 2.0, omega_max: 1.0, ..base.clone() },
            DistillConfig { mu: 1.0, ..base.clone() },
            DistillConfig { batch: 0, ..base.clone() },
            DistillConfig { solver: SolverKind::EulerMaruyama, ..base.clone() },
            DistillConfig { omega_embed: 3, ..base.clone() },
            DistillConfig { student_hidden: vec![], ..base.clone() },
        ] {
            assert!(bad.validate(&sch).is_err());
        }
        assert!(base.validate(&sch).is_ok());
        assert!(DistillConfig::default().validate(&sch).is_ok());
    }

    #[test]
    fn metric_and_teacher_kind_parse_round_trip() {
        for m in [
            MetricKind::SquaredL2,
            MetricKind::PseudoHuber { c: PSEUDO_HUBER_C },
        ] {
            assert_eq!(MetricKind::parse(m.name()).unwrap(), m);
        }
        assert!(MetricKind::parse("l1").is_err());
        for k in [TeacherKind::Oracle, TeacherKind::Trained] {
            assert_eq!(TeacherKind::parse(k.name()).unwrap(), k);
        }
        assert!(TeacherKind::parse("distilled").is_err());
    }
}
