//! `gptd`: fits value models from trajectory files and runs the
//! approximation, retention, learning and timing studies.

mod commands;
mod model_file;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gptd_core::experiments::ExperimentConfig;

use commands::RunContext;

#[derive(Parser)]
#[command(name = "gptd", version, about = "Sparse GP temporal-difference value estimation")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step; replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured estimator to a trajectory file and write a model file.
    Fit {
        /// Trajectory file (JSON: inputs, rewards, episode_breaks, terminal).
        trajectory: PathBuf,
        /// Model file path; defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Maximize the evidence before fitting.
        #[arg(long)]
        optimize: bool,
    },
    /// Predict value mean and variance at query inputs from a model file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// JSON array of input vectors.
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Sparse-to-exact evidence ratios before and after pseudo-input optimization.
    CompareApprox,
    /// Low-rank dictionary retention over a threshold sweep.
    Retention,
    /// Policy iteration learning curves for every seed.
    Learn {
        /// Also write exact and sparse value grids for the first seed.
        #[arg(long)]
        landscape: bool,
    },
    /// Fit and predict wall times across data sizes and pseudo-input counts.
    Bench,
    /// Print the effective configuration, defaults included.
    Config,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SPARSE_GPTD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).with_context(|| {
        format!("SPARSE_GPTD_THREADS must be a positive integer, got {raw:?}")
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.validate().context("invalid configuration")?;
    let ctx = RunContext { seed: cfg.seeds[0], out: PathBuf::from(&cfg.output.dir), cfg };
    match cli.command {
        Command::Fit { trajectory, model, optimize } => {
            commands::fit(&ctx, &trajectory, model.as_deref(), optimize)?;
        }
        Command::Predict { model, inputs } => {
            commands::predict(&ctx, &model, &inputs)?;
        }
        Command::CompareApprox => {
            commands::compare(&ctx)?;
        }
        Command::Retention => {
            commands::retention_sweep(&ctx)?;
        }
        Command::Learn { landscape } => {
            commands::learning(&ctx, landscape)?;
        }
        Command::Bench => {
            commands::timing(&ctx)?;
        }
        Command::Config => {
            print!("{}", toml::to_string_pretty(&ctx.cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
