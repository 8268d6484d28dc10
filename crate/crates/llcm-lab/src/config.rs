//! Run configuration: one JSON document covering every pipeline stage.
//!
//! Files may omit fields (each has the documented default), but whatever a
//! command writes back into its run directory is fully resolved — reading
//! that file again reproduces the exact same configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use llcm_core::distill::{DistillConfig, TeacherTrainConfig};
use llcm_core::model::EpsArch;
use llcm_core::nn::adam::AdamConfig;
use llcm_core::{Cond, LatentCodec, MetricKind, ScheduleSpec, SolverKind, ToyWorld};

use crate::checkpoint::CodecDesc;
use crate::error::{LabError, Result};

/// Format stamp written into configs and manifests; bump on breaking layout
/// changes.
pub const FORMAT_VERSION: u32 = 1;

fn default_version() -> u32 {
    FORMAT_VERSION
}
fn default_seed() -> u64 {
    1
}
fn default_out_dir() -> String {
    "runs/llcm".into()
}
fn default_world() -> String {
    "gmm_grid".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSection {
    /// "identity" or "seeded" (random rotation + shift).
    pub kind: String,
    pub seed: u64,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection {
            kind: "identity".into(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: String,
    pub n: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = ScheduleSpec::default_linear();
        ScheduleSection {
            kind: s.kind().name().into(),
            n: s.n_discrete(),
            beta_min: 1e-4,
            beta_max: 2e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    pub hidden: Vec<usize>,
    pub cond_embed: usize,
    pub time_embed: usize,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub cond_dropout: f64,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let arch = EpsArch::teacher_default(2, 2);
        let t = TeacherTrainConfig::new(arch.clone());
        TeacherSection {
            hidden: arch.hidden,
            cond_embed: arch.cond_embed,
            time_embed: arch.time_embed,
            iters: t.iters,
            batch: t.batch,
            lr: t.adam.lr,
            cond_dropout: t.cond_dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub k: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub mu: f64,
    pub iters: usize,
    pub batch: usize,
    /// "squared_l2" or "pseudo_huber".
    pub metric: String,
    pub solver: String,
    pub lr: f64,
    pub lr_decay: f64,
    pub omega_embed: usize,
    pub student_hidden: Vec<usize>,
    pub init_iters: usize,
}

impl Default for DistillSection {
    fn default() -> Self {
        let d = DistillConfig::default();
        DistillSection {
            k: d.k,
            omega_min: d.omega_min,
            omega_max: d.omega_max,
            mu: d.mu,
            iters: d.iters,
            batch: d.batch,
            // The bounded-gradient metric is the desk default: squared-l2
            // lets the high-t rows (amplified by c_out/alpha) drown out the
            // mid-t signal at this scale.
            metric: "pseudo_huber".into(),
            solver: d.solver.name().into(),
            lr: d.adam.lr,
            lr_decay: d.lr_decay,
            omega_embed: d.omega_embed,
            student_hidden: d.student_hidden,
            init_iters: d.init_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub solver: String,
    pub steps: usize,
    pub omega: f64,
    /// Class label; null means unconditional.
    pub class: Option<u32>,
    pub n: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            solver: "ddim".into(),
            steps: 50,
            omega: 0.0,
            class: None,
            n: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_world")]
    pub world: String,
    #[serde(default)]
    pub codec: CodecSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub samplers: Vec<SamplerSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: FORMAT_VERSION,
            seed: default_seed(),
            out_dir: default_out_dir(),
            world: default_world(),
            codec: CodecSection::default(),
            schedule: ScheduleSection::default(),
            teacher: TeacherSection::default(),
            distill: DistillSection::default(),
            samplers: vec![SamplerSection::default()],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::usage(format!("cannot read config `{}`: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| LabError::usage(format!("config `{}`: {e}", path.display())))?;
        if cfg.version != FORMAT_VERSION {
            return Err(LabError::usage(format!(
                "config `{}` has format version {}, this build reads {FORMAT_VERSION}",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Pretty JSON with every field present.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn world(&self) -> Result<ToyWorld> {
        Ok(ToyWorld::parse(&self.world)?)
    }

    pub fn codec_desc(&self) -> CodecDesc {
        CodecDesc {
            kind: self.codec.kind.clone(),
            seed: self.codec.seed,
        }
    }

    pub fn codec(&self) -> Result<LatentCodec> {
        self.codec_desc().build(self.world()?.dim())
    }

    pub fn schedule(&self) -> Result<ScheduleSpec> {
        let kind = llcm_core::ScheduleKind::parse(&self.schedule.kind)?;
        Ok(ScheduleSpec::new(
            kind,
            self.schedule.n,
            self.schedule.beta_min,
            self.schedule.beta_max,
        )?)
    }

    pub fn teacher_config(&self) -> Result<TeacherTrainConfig> {
        let w = self.world()?;
        let mut arch = EpsArch::teacher_default(w.dim(), w.n_classes());
        arch.hidden = self.teacher.hidden.clone();
        arch.cond_embed = self.teacher.cond_embed;
        arch.time_embed = self.teacher.time_embed;
        let mut cfg = TeacherTrainConfig::new(arch);
        cfg.iters = self.teacher.iters;
        cfg.batch = self.teacher.batch;
        cfg.adam = AdamConfig {
            lr: self.teacher.lr,
            ..AdamConfig::default()
        };
        cfg.cond_dropout = self.teacher.cond_dropout;
        Ok(cfg)
    }

    pub fn distill_config(&self) -> Result<DistillConfig> {
        let metric = MetricKind::parse(&self.distill.metric)?;
        let solver = SolverKind::parse(&self.distill.solver)?;
        Ok(DistillConfig {
            k: self.distill.k,
            omega_min: self.distill.omega_min,
            omega_max: self.distill.omega_max,
            mu: self.distill.mu,
            iters: self.distill.iters,
            batch: self.distill.batch,
            metric,
            solver,
            adam: AdamConfig {
                lr: self.distill.lr,
                ..AdamConfig::default()
            },
            omega_embed: self.distill.omega_embed,
            student_hidden: self.distill.student_hidden.clone(),
            init_iters: self.distill.init_iters,
            lr_decay: self.distill.lr_decay,
        })
    }
}

/// Condition from an optional class label.
pub fn cond_from(class: Option<u32>) -> Cond {
    Cond::from_label(class)
}

/// `LLCM_SEED` beats the configured seed when present; a malformed value is
/// a usage error rather than a silent fallback.
pub fn env_seed_override(seed: u64) -> Result<u64> {
    match std::env::var("LLCM_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| LabError::usage(format!("LLCM_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(seed),
    }
}
