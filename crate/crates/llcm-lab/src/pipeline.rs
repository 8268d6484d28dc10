//! Command implementations. Each writes its artifacts into a run directory
//! and finishes with a `manifest.json` describing them.

use std::path::{Path, PathBuf};

use serde_json::json;

use llcm_core::batch::{BatchMeta, SampleBatch};
use llcm_core::distill::{consistency_sample, train_llcm, train_teacher};
use llcm_core::metrics::{frechet_distance, metric_report};
use llcm_core::model::NoisePredictor;
use llcm_core::nn::gradcheck::gradcheck_mlp;
use llcm_core::sampler::{sample, SamplerConfig};
use llcm_core::{Cond, SolverKind, Tensor};

use crate::checkpoint::{self, CkptModel};
use crate::config::{cond_from, env_seed_override, RunConfig};
use crate::csvio;
use crate::error::{LabError, Result};
use crate::manifest::ManifestBuilder;
use crate::pgm::{self, Range};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| LabError::usage(format!("cannot create `{}`: {e}", dir.display())))?;
    Ok(())
}

fn write_loss_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("iter,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Resolves the run directory: `--out` beats the configured one.
fn run_dir(cfg: &RunConfig, out_override: Option<&Path>) -> PathBuf {
    out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

/// Loads the config, applies the `LLCM_SEED` override, and echoes the
/// resolved copy into the run directory.
fn prepare(
    config_path: &Path,
    out_override: Option<&Path>,
    command: &str,
) -> Result<(RunConfig, PathBuf, ManifestBuilder)> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.seed = env_seed_override(cfg.seed)?;
    let dir = run_dir(&cfg, out_override);
    ensure_dir(&dir)?;
    let resolved = cfg.to_json()?;
    cfg.save(&dir.join("config.json"))?;
    let mut mb = ManifestBuilder::new(command, cfg.seed);
    mb.config_json(&resolved);
    mb.output(&dir.join("config.json"))?;
    Ok((cfg, dir, mb))
}

pub fn cmd_teacher(config_path: &Path, out_override: Option<&Path>) -> Result<()> {
    let (cfg, dir, mut mb) = prepare(config_path, out_override, "teacher")?;
    let world = cfg.world()?;
    let codec = cfg.codec()?;
    let sch = cfg.schedule()?;
    let tcfg = cfg.teacher_config()?;

    let (net, trace) = train_teacher(&world, &codec, &sch, &tcfg, cfg.seed)?;

    let ckpt_path = dir.join("teacher.ckpt");
    checkpoint::save_teacher(&ckpt_path, &net, &sch, &cfg.codec_desc())?;
    let loss_path = dir.join("teacher_loss.csv");
    write_loss_csv(&loss_path, &trace)?;

    mb.output(&ckpt_path)?;
    mb.output(&loss_path)?;
    mb.extra("world", json!(cfg.world));
    mb.extra("schedule", json!(cfg.schedule.kind));
    mb.extra("iters", json!(tcfg.iters));
    mb.extra(
        "final_loss",
        json!(trace.last().copied().unwrap_or(f64::NAN)),
    );
    mb.write(&dir.join("manifest.json"))?;
    println!(
        "teacher: {} iterations, final loss {:.6}, wrote {}",
        trace.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        ckpt_path.display()
    );
    Ok(())
}

/// Teacher source for distillation: explicit checkpoint or the analytic
/// oracle for the configured world.
pub enum TeacherSource {
    Oracle,
    Checkpoint(PathBuf),
}

pub fn cmd_distill(
    config_path: &Path,
    teacher_src: &TeacherSource,
    k_override: Option<usize>,
    out_override: Option<&Path>,
) -> Result<()> {
    let (cfg, dir, mut mb) = prepare(config_path, out_override, "distill")?;
    let world = cfg.world()?;
    let codec = cfg.codec()?;
    let sch = cfg.schedule()?;
    let mut dcfg = cfg.distill_config()?;
    if let Some(k) = k_override {
        dcfg.k = k;
    }
    dcfg.validate(&sch)?;

    let teacher = match teacher_src {
        TeacherSource::Oracle => NoisePredictor::oracle(codec.map_world(&world)?)?,
        TeacherSource::Checkpoint(p) => {
            let ckpt = checkpoint::load(p)?;
            if ckpt.schedule != sch {
                return Err(LabError::usage(format!(
                    "`{}` was trained under a different schedule than the config; \
                     align the config's schedule section with the teacher run",
                    p.display()
                )));
            }
            match ckpt.model {
                CkptModel::Teacher(net) => NoisePredictor::Mlp(net),
                CkptModel::Consistency(_) => {
                    return Err(LabError::usage(format!(
                        "`{}` is a consistency checkpoint; distillation needs a teacher",
                        p.display()
                    )))
                }
            }
        }
    };

    let out = train_llcm(&teacher, &world, &codec, &sch, &dcfg, cfg.seed)?;

    let desc = cfg.codec_desc();
    let student_path = dir.join("student.ckpt");
    checkpoint::save_consistency(&student_path, &out.head, &sch, &desc)?;
    let ema_path = dir.join("ema.ckpt");
    checkpoint::save_consistency(&ema_path, &out.ema, &sch, &desc)?;
    let loss_path = dir.join("loss_trace.csv");
    write_loss_csv(&loss_path, &out.loss_trace)?;

    mb.output(&student_path)?;
    mb.output(&ema_path)?;
    mb.output(&loss_path)?;
    mb.extra("world", json!(cfg.world));
    mb.extra(
        "teacher",
        match teacher_src {
            TeacherSource::Oracle => json!("oracle"),
            TeacherSource::Checkpoint(p) => json!(p.display().to_string()),
        },
    );
    mb.extra("k", json!(dcfg.k));
    mb.extra("iters", json!(dcfg.iters));
    mb.extra("metric", json!(dcfg.metric.name()));
    mb.extra("solver", json!(dcfg.solver.name()));
    let first = out.loss_trace.first().copied().unwrap_or(f64::NAN);
    let last = out.loss_trace.last().copied().unwrap_or(f64::NAN);
    mb.extra("first_loss", json!(first));
    mb.extra("final_loss", json!(last));
    mb.write(&dir.join("manifest.json"))?;
    println!(
        "distill: k={}, {} iterations, loss {first:.6} -> {last:.6}, wrote {}",
        dcfg.k,
        out.loss_trace.len(),
        dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sample(
    ckpt_path: &Path,
    solver_name: &str,
    steps: usize,
    omega: f64,
    class: Option<u32>,
    n: usize,
    seed_flag: Option<u64>,
    out_csv: &Path,
) -> Result<()> {
    let solver = SolverKind::parse(solver_name)?;
    // An explicit --seed wins; otherwise LLCM_SEED, otherwise 0.
    let seed = match seed_flag {
        Some(s) => s,
        None => env_seed_override(0)?,
    };
    let cond = cond_from(class);
    let ckpt = checkpoint::load(ckpt_path)?;
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }

    let ckpt_bytes = std::fs::read(ckpt_path)?;
    let ckpt_hash = checkpoint::sha256_hex(&ckpt_bytes);

    let mut mb = ManifestBuilder::new("sample", seed);
    // The checkpoint carries the schedule and codec it was trained under, so
    // sampling reproduces the training-time pipeline exactly.
    let (batch, mode) = match &ckpt.model {
        CkptModel::Teacher(net) => {
            let model = NoisePredictor::Mlp(net.clone());
            let scfg = SamplerConfig::new(solver, steps, omega, cond, seed);
            (
                sample(&model, &ckpt.codec, &ckpt.schedule, &scfg, n)?,
                solver.name().to_string(),
            )
        }
        CkptModel::Consistency(head) => (
            consistency_sample(head, &ckpt.codec, &ckpt.schedule, steps, omega, cond, n, seed)?,
            format!("consistency({})", solver.name()),
        ),
    };

    csvio::write_batch(out_csv, &batch)?;
    mb.output(out_csv)?;
    mb.extra("ckpt", json!(ckpt_path.display().to_string()));
    mb.extra("ckpt_sha256", json!(ckpt_hash));
    mb.extra("ckpt_kind", json!(ckpt.model.kind()));
    mb.extra("mode", json!(mode));
    mb.extra("solver", json!(solver.name()));
    mb.extra("steps", json!(steps));
    mb.extra("omega", json!(omega));
    mb.extra("class", json!(class));
    mb.extra("n", json!(n));
    mb.extra("schedule", json!(ckpt.schedule.kind().name()));
    let manifest_path = manifest_sibling(out_csv);
    mb.write(&manifest_path)?;
    println!(
        "sample: {} points via {mode}, {} steps, omega {omega}, wrote {}",
        batch.n(),
        steps,
        out_csv.display()
    );
    Ok(())
}

/// Draws reference points straight from a named world, for eval baselines.
pub fn cmd_world(world_name: &str, n: usize, seed_flag: Option<u64>, out_csv: &Path) -> Result<()> {
    let world = llcm_core::ToyWorld::parse(world_name)?;
    let seed = match seed_flag {
        Some(s) => s,
        None => env_seed_override(0)?,
    };
    if n == 0 {
        return Err(LabError::usage("--n must be at least 1"));
    }
    let batch = world.sample(n, seed)?;
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    csvio::write_batch(out_csv, &batch)?;
    let mut mb = ManifestBuilder::new("world", seed);
    mb.output(out_csv)?;
    mb.extra("world", json!(world_name));
    mb.extra("n", json!(n));
    mb.write(&manifest_sibling(out_csv))?;
    println!(
        "world: {} points from {world_name}, wrote {}",
        batch.n(),
        out_csv.display()
    );
    Ok(())
}

/// `foo.csv` → `foo.manifest.json`.
fn manifest_sibling(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

pub fn cmd_eval(ref_csv: &Path, gen_csv: &Path, out_json: &Path) -> Result<()> {
    let a = csvio::read_batch(gen_csv)?;
    let b = csvio::read_batch(ref_csv)?;
    if a.dim() != b.dim() {
        return Err(LabError::usage(format!(
            "dimension mismatch: `{}` is {}-d, `{}` is {}-d",
            gen_csv.display(),
            a.dim(),
            ref_csv.display(),
            b.dim()
        )));
    }
    let report = metric_report(&a, &b, None)?;
    let doc = json!({
        "frechet_distance": report.frechet_distance,
        "mmd2": report.mmd2,
        "bandwidth": report.bandwidth,
        "mean_gap": report.mean_gap,
        "cov_gap": report.cov_gap,
        "n_a": report.n_a,
        "n_b": report.n_b,
        "dims": report.dims,
    });
    if let Some(parent) = out_json.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    std::fs::write(out_json, serde_json::to_string_pretty(&doc)? + "\n")?;
    println!(
        "eval: frechet_distance {:.6}, mmd2 {:.6}, wrote {}",
        report.frechet_distance,
        report.mmd2,
        out_json.display()
    );
    Ok(())
}

/// Pools per-class few-step consistency samples into one labeled batch.
fn pooled_consistency(
    head: &llcm_core::ConsistencyHead,
    sch: &llcm_core::ScheduleSpec,
    steps: usize,
    omega: f64,
    n_classes: usize,
    n_per_class: usize,
    seed: u64,
) -> Result<SampleBatch> {
    let codec = llcm_core::LatentCodec::identity(head.eps.arch.point_dim);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..n_classes as u32 {
        let b = consistency_sample(
            head,
            &codec,
            sch,
            steps,
            omega,
            Cond::Class(class),
            n_per_class,
            seed.wrapping_add(class as u64),
        )?;
        for i in 0..b.n() {
            rows.push(b.points.row(i).to_vec());
            labels.push(Some(class));
        }
    }
    Ok(SampleBatch::new(
        Tensor::from_rows(&rows)?,
        labels,
        BatchMeta::default(),
    )?)
}

pub fn cmd_sweep_k(
    config_path: &Path,
    k_list: &[usize],
    out_override: Option<&Path>,
) -> Result<()> {
    if k_list.is_empty() {
        return Err(LabError::usage("--k-list must name at least one k"));
    }
    let (cfg, dir, mut mb) = prepare(config_path, out_override, "sweep_k")?;
    let world = cfg.world()?;
    let codec = cfg.codec()?;
    let sch = cfg.schedule()?;
    let base = cfg.distill_config()?;
    let teacher = NoisePredictor::oracle(codec.map_world(&world)?)?;

    let eval_n_per_class = (cfg.samplers.first().map(|s| s.n).unwrap_or(1000)
        / world.n_classes())
    .max(50);
    let real = world.sample(eval_n_per_class * world.n_classes(), cfg.seed ^ 0x5245_414c)?;
    let real_latent = SampleBatch::new(codec.encode(&real.points)?, real.labels.clone(), real.meta.clone())?;

    let mut table = String::from("k,frechet_distance,paper_default\n");
    for &k in k_list {
        let mut dcfg = base.clone();
        dcfg.k = k;
        dcfg.validate(&sch)?;
        let out = train_llcm(&teacher, &world, &codec, &sch, &dcfg, cfg.seed)?;
        let pooled = pooled_consistency(
            &out.ema,
            &sch,
            4,
            0.0,
            world.n_classes(),
            eval_n_per_class,
            cfg.seed ^ (k as u64),
        )?;
        let fd = frechet_distance(&pooled, &real_latent)?;
        let flag = if k == 20 { 1 } else { 0 };
        table.push_str(&format!("{k},{fd},{flag}\n"));
        println!("sweep-k: k={k} frechet_distance={fd:.6}");
    }

    let table_path = dir.join("sweep.csv");
    std::fs::write(&table_path, table)?;
    mb.output(&table_path)?;
    mb.extra("k_list", json!(k_list));
    mb.extra("world", json!(cfg.world));
    mb.extra("eval_steps", json!(4));
    mb.extra("eval_n_per_class", json!(eval_n_per_class));
    mb.write(&dir.join("manifest.json"))?;
    println!("sweep-k: wrote {}", table_path.display());
    Ok(())
}

pub fn cmd_heatmap(in_csv: &Path, out_pgm: &Path, bins: usize, range_text: &str) -> Result<()> {
    let range = Range::parse(range_text)?;
    let batch = csvio::read_batch(in_csv)?;
    let pixels = pgm::histogram(&batch.points, bins, range)?;
    if let Some(parent) = out_pgm.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    pgm::write_pgm(out_pgm, bins, &pixels)?;
    println!(
        "heatmap: {} points into {bins}x{bins} bins, wrote {}",
        batch.n(),
        out_pgm.display()
    );
    Ok(())
}

pub fn cmd_gradcheck(seed: u64) -> Result<()> {
    let report = gradcheck_mlp(seed)?;
    println!(
        "gradcheck: {} parameters, max relative error {:.3e} at {} (threshold {:.0e}) -> {}",
        report.n_checked,
        report.max_rel_err,
        report.worst_param,
        report.threshold,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    if report.passed() {
        Ok(())
    } else {
        Err(LabError::Numeric(format!(
            "gradient check failed at {}: max relative error {:.3e} >= {:.0e}",
            report.worst_param, report.max_rel_err, report.threshold
        )))
    }
}

/// Parses `1,5,10` into a k list.
pub fn parse_k_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| LabError::usage(format!("`{p}` in --k-list is not an integer")))
        })
        .collect()
}
