//! Argument surface. Exit codes: 0 success, 1 numeric failure, 2 usage or
//! configuration error (clap's own parse failures also exit 2).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{LabError, Result};
use crate::pipeline::{self, TeacherSource};

#[derive(Debug, Parser)]
#[command(
    name = "llcm",
    about = "Desk-scale leapfrog latent consistency model laboratory",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Run directory (overrides the configured `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the diffusion teacher and write teacher.ckpt.
    Teacher(ConfigArgs),
    /// Distill a consistency student; writes student.ckpt, ema.ckpt and
    /// loss_trace.csv.
    Distill {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Teacher checkpoint from a previous `teacher` run.
        #[arg(long, conflicts_with = "oracle")]
        teacher: Option<PathBuf>,
        /// Distill from the analytic score of the configured world instead
        /// of a trained checkpoint.
        #[arg(long)]
        oracle: bool,
        /// Override the configured jumping step.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sample from a checkpoint into a CSV.
    Sample {
        /// Teacher or consistency checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// ddim | euler_ode | euler_maruyama | leapfrog.
        #[arg(long, default_value = "ddim")]
        solver: String,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Classifier-free guidance scale.
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        /// Class label to condition on (unconditional when absent).
        #[arg(long)]
        class: Option<u32>,
        /// Number of points to draw.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Sampling seed (falls back to LLCM_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw reference points straight from a named world.
    World {
        /// gmm_grid | two_moons | checkerboard | rings
        #[arg(long)]
        world: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two sample CSVs and write a metric report JSON.
    Eval {
        /// Reference samples.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Generated samples.
        #[arg(long)]
        gen: PathBuf,
        /// Report path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Distill once per jumping step and tabulate 4-step sample quality.
    SweepK {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated jumping steps, e.g. 1,5,10,20,50.
        #[arg(long = "k-list")]
        k_list: String,
    },
    /// Render a 2-D histogram of a sample CSV as a binary PGM.
    Heatmap {
        /// Input CSV.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output PGM path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        bins: usize,
        /// "auto" or "x0,x1,y0,y1".
        #[arg(long, default_value = "auto")]
        range: String,
    },
    /// Run the finite-difference gradient suite over every layer rule.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Teacher(c) => pipeline::cmd_teacher(&c.config, c.out.as_deref()),
        Command::Distill {
            cfg,
            teacher,
            oracle,
            k,
        } => {
            let src = match (teacher, oracle) {
                (Some(p), false) => TeacherSource::Checkpoint(p),
                (None, true) => TeacherSource::Oracle,
                (None, false) => {
                    return Err(LabError::usage(
                        "distill needs a teacher: pass --teacher PATH or --oracle",
                    ))
                }
                (Some(_), true) => unreachable!("clap rejects --teacher with --oracle"),
            };
            pipeline::cmd_distill(&cfg.config, &src, k, cfg.out.as_deref())
        }
        Command::Sample {
            ckpt,
            solver,
            steps,
            omega,
            class,
            n,
            seed,
            out,
        } => pipeline::cmd_sample(&ckpt, &solver, steps, omega, class, n, seed, &out),
        Command::World {
            world,
            n,
            seed,
            out,
        } => pipeline::cmd_world(&world, n, seed, &out),
        Command::Eval {
            reference,
            gen,
            out,
        } => pipeline::cmd_eval(&reference, &gen, &out),
        Command::SweepK { cfg, k_list } => {
            let ks = pipeline::parse_k_list(&k_list)?;
            pipeline::cmd_sweep_k(&cfg.config, &ks, cfg.out.as_deref())
        }
        Command::Heatmap {
            input,
            out,
            bins,
            range,
        } => pipeline::cmd_heatmap(&input, &out, bins, &range),
        Command::Gradcheck { seed } => pipeline::cmd_gradcheck(seed),
    }
}

/// Parses `argv` and runs the selected command, mapping errors onto the
/// documented exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
