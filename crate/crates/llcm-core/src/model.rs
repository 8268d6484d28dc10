//! Noise predictors: the analytic oracle and the conditional MLP.
//!
//! A predictor maps `(z, [ω,] c, t)` to `ε̂`. The oracle wraps a mixture
//! world's exact score (`ε* = −σ_t · score`); the MLP assembles
//! `[z, cond_embed, time_embed, (ω_embed)]` rows and runs the network. The ω
//! block exists only for distilled students — teachers have no ω input.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, VarId};
use crate::error::{CoreError, Result};
use crate::nn::embed::{embed_condition, embed_time, fourier_features, Cond};
use crate::nn::mlp::{MlpConfig, MlpParams};
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;
use crate::world::ToyWorld;

/// ω values are divided by this before Fourier embedding, keeping the typical
/// guidance range [0, 4] well inside one embedding period.
pub const OMEGA_SCALE: f64 = 8.0;

/// Dimension plan for an ε-prediction MLP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsArch {
    pub point_dim: usize,
    pub n_classes: usize,
    pub cond_embed: usize,
    pub time_embed: usize,
    /// 0 = no ω input (teacher); > 0 = ω Fourier block (student).
    pub omega_embed: usize,
    pub hidden: Vec<usize>,
}

impl EpsArch {
    pub fn teacher_default(point_dim: usize, n_classes: usize) -> EpsArch {
        EpsArch {
            point_dim,
            n_classes,
            cond_embed: 8,
            time_embed: 16,
            omega_embed: 0,
            hidden: alloc::vec![128, 128, 128],
        }
    }

    /// Same plan with an ω block appended (student arch derived from teacher).
    pub fn with_omega(mut self, omega_embed: usize) -> EpsArch {
        self.omega_embed = omega_embed;
        self
    }

    pub fn in_dim(&self) -> usize {
        self.point_dim + self.cond_embed + self.time_embed + self.omega_embed
    }

    pub fn takes_omega(&self) -> bool {
        self.omega_embed > 0
    }

    pub fn mlp_config(&self) -> Result<MlpConfig> {
        MlpConfig::new(self.in_dim(), self.hidden.clone(), self.point_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.point_dim == 0 || self.n_classes == 0 {
            return Err(CoreError::config(format!(
                "arch needs positive point dim and classes, got {} / {}",
                self.point_dim, self.n_classes
            )));
        }
        if self.omega_embed % 2 != 0 || self.time_embed % 2 != 0 || self.time_embed == 0 {
            return Err(CoreError::config(
                "fourier embedding dims must be even (time > 0)",
            ));
        }
        self.mlp_config().map(|_| ())
    }
}

/// MLP ε-predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEps {
    pub arch: EpsArch,
    pub params: MlpParams,
}

impl MlpEps {
    pub fn init(arch: EpsArch, seed: u64, zero_final: bool) -> Result<Self> {
        arch.validate()?;
        let params = MlpParams::init(arch.mlp_config()?, seed, zero_final)?;
        Ok(MlpEps { arch, params })
    }

    /// Builds the `[n, in_dim]` network input. `omegas`/`conds`/`ts` are
    /// per-row; pass `omegas = None` for ω-free teachers.
    pub fn assemble_rows(
        &self,
        z: &Tensor,
        omegas: Option<&[f64]>,
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<Tensor> {
        let n = z.n_rows();
        if z.rank() != 2 || z.n_cols() != self.arch.point_dim {
            return Err(CoreError::shape(format!(
                "assemble: points shape {:?}, expected [n, {}]",
                z.shape(),
                self.arch.point_dim
            )));
        }
        if conds.len() != n || ts.len() != n {
            return Err(CoreError::shape(format!(
                "assemble: {} conds / {} ts for {n} rows",
                conds.len(),
                ts.len()
            )));
        }
        match (self.arch.takes_omega(), omegas) {
            (true, None) => {
                return Err(CoreError::config(
                    "this predictor takes an omega input but none was provided",
                ))
            }
            (false, Some(_)) => {
                return Err(CoreError::config(
                    "this predictor has no omega input block",
                ))
            }
            (true, Some(o)) if o.len() != n => {
                return Err(CoreError::shape(format!(
                    "assemble: {} omegas for {n} rows",
                    o.len()
                )))
            }
            _ => {}
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = z.row(i).to_vec();
            let ce = embed_condition(conds[i], self.arch.n_classes, self.arch.cond_embed)?;
            row.extend_from_slice(ce.data());
            let te = embed_time(ts[i], self.arch.time_embed)?;
            row.extend_from_slice(te.data());
            if let Some(o) = omegas {
                if o[i] < 0.0 {
                    return Err(CoreError::domain(format!(
                        "omega must be nonnegative, got {}",
                        o[i]
                    )));
                }
                let oe = fourier_features(o[i] / OMEGA_SCALE, self.arch.omega_embed)?;
                row.extend_from_slice(oe.data());
            }
            rows.push(row);
        }
        Tensor::from_rows(&rows)
    }

    /// Pure forward with one shared `(ω, c, t)` for the whole batch.
    pub fn predict(&self, z: &Tensor, omega: Option<f64>, c: Cond, t: f64) -> Result<Tensor> {
        let n = z.n_rows();
        let omegas = omega.map(|o| alloc::vec![o; n]);
        let input = self.assemble_rows(
            z,
            omegas.as_deref(),
            &alloc::vec![c; n],
            &alloc::vec![t; n],
        )?;
        self.params.forward(&input)
    }

    /// Pure forward with per-row `(ω, c, t)`.
    pub fn predict_rows(
        &self,
        z: &Tensor,
        omegas: Option<&[f64]>,
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<Tensor> {
        let input = self.assemble_rows(z, omegas, conds, ts)?;
        self.params.forward(&input)
    }

    /// Tape forward for training: input assembly is constant, so only the
    /// network parameters appear as differentiable leaves.
    pub fn predict_tape(
        &self,
        tape: &mut Tape,
        z: &Tensor,
        omegas: Option<&[f64]>,
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<(VarId, Vec<VarId>)> {
        let input = self.assemble_rows(z, omegas, conds, ts)?;
        let iv = tape.leaf(input);
        self.params.forward_tape(tape, iv)
    }
}

/// Teacher/predictor dispatch: exact oracle or trained MLP.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePredictor {
    /// Closed-form ε* from a mixture world (exact in whatever space the
    /// world lives in — pass the codec-mapped world for latent diffusion).
    Oracle(ToyWorld),
    Mlp(MlpEps),
}

impl NoisePredictor {
    pub fn oracle(world: ToyWorld) -> Result<NoisePredictor> {
        if !world.is_mixture() {
            return Err(CoreError::unsupported(format!(
                "oracle predictor needs a mixture world, got `{}`",
                world.name()
            )));
        }
        Ok(NoisePredictor::Oracle(world))
    }

    pub fn point_dim(&self) -> usize {
        match self {
            NoisePredictor::Oracle(w) => w.dim(),
            NoisePredictor::Mlp(m) => m.arch.point_dim,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            NoisePredictor::Oracle(w) => w.n_classes(),
            NoisePredictor::Mlp(m) => m.arch.n_classes,
        }
    }

    /// `ε̂(z, c, t)`, one shared condition and time for the batch.
    pub fn predict_eps(
        &self,
        sch: &ScheduleSpec,
        z: &Tensor,
        c: Cond,
        t: f64,
    ) -> Result<Tensor> {
        match self {
            NoisePredictor::Oracle(w) => {
                let (_, sigma) = sch.alpha_sigma(t)?;
                let score = w.analytic_score(sch, z, c, t)?;
                score.scale(-sigma)
            }
            NoisePredictor::Mlp(m) => m.predict(z, None, c, t),
        }
    }

    /// Per-row conditions and times (used by the Ψ target solver, where every
    /// batch row carries its own timestep pair).
    pub fn predict_eps_rows(
        &self,
        sch: &ScheduleSpec,
        z: &Tensor,
        conds: &[Cond],
        ts: &[f64],
    ) -> Result<Tensor> {
        match self {
            NoisePredictor::Oracle(w) => {
                if conds.len() != z.n_rows() || ts.len() != z.n_rows() {
                    return Err(CoreError::shape(format!(
                        "predict_eps_rows: {} conds / {} ts for {} rows",
                        conds.len(),
                        ts.len(),
                        z.n_rows()
                    )));
                }
                let mut out = Tensor::zeros(alloc::vec![z.n_rows(), w.dim()]);
                for i in 0..z.n_rows() {
                    let row = Tensor::from_rows(&[z.row(i).to_vec()])?;
                    let eps = self.predict_eps(sch, &row, conds[i], ts[i])?;
                    for j in 0..w.dim() {
                        out.set(i, j, eps.at(0, j));
                    }
                }
                Ok(out)
            }
            NoisePredictor::Mlp(m) => m.predict_rows(z, None, conds, ts),
        }
    }
}
