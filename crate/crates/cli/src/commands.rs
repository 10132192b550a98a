use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gptd_core::agent::{EstimatorKind, FittedModel};
use gptd_core::experiments::{
    bench, compare_approx, curve_rows, landscape_study, learn, retention, BenchRow, ExperimentConfig, Task,
};
use gptd_core::hyperopt::{init_pseudo, optimize, optimize_exact};
use gptd_core::{fit_exact, fit_lowrank, fit_sparse, spgp};
use serde::Serialize;

use crate::model_file::{load_trajectory, ModelFile};
use crate::output::{config_hash, output_file, write_csv};

/// Configuration and global flags shared by every subcommand.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunContext {
    fn hash(&self) -> String {
        config_hash(&self.cfg)
    }
}

pub fn fit(ctx: &RunContext, trajectory: &Path, model_path: Option<&Path>, optimize_first: bool) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let traj = load_trajectory(trajectory)?;
    if traj.is_empty() {
        bail!("trajectory file {} holds no transitions", trajectory.display());
    }
    let mut params = cfg.agent.prior.params(&traj.bounding_box())?;
    let mut opt = cfg.optimizer.clone();
    opt.rng_seed = opt.rng_seed.wrapping_add(ctx.seed);

    let start = Instant::now();
    let (file, log_marginal, retention_fraction) = match cfg.estimator {
        EstimatorKind::Exact => {
            if optimize_first {
                params = optimize_exact(&traj, &params, &opt)?.0;
            }
            let post = fit_exact(&traj, &params)?;
            let lml = post.log_marginal();
            (ModelFile::Exact { params, trajectory: traj.clone() }, lml, None)
        }
        EstimatorKind::Sparse => {
            let mut z = init_pseudo(&traj, cfg.m(), cfg.agent.init_strategy, ctx.seed)?;
            if optimize_first {
                let r = optimize(&traj, &params, &z, &opt)?;
                params = r.params;
                z = r.pseudo_inputs;
            }
            let post = fit_sparse(&traj, &params, &z)?;
            let lml = spgp::log_marginal(&traj, &params, &z)?;
            (ModelFile::Sparse { model: post }, lml, None)
        }
        EstimatorKind::Lowrank => {
            if optimize_first {
                params = optimize_exact(&traj, &params, &opt)?.0;
            }
            let post = fit_lowrank(&traj, &params, cfg.nu())?;
            let lml = post.log_marginal();
            let kept = post.retention_fraction();
            (ModelFile::Lowrank { params, nu: cfg.nu(), trajectory: traj.clone() }, lml, Some(kept))
        }
    };
    let fit_ms = start.elapsed().as_secs_f64() * 1e3;

    let path = match model_path {
        Some(p) => p.to_path_buf(),
        None => output_file(&ctx.out, "model.json")?,
    };
    file.save(&path)?;
    println!("estimator: {}", cfg.estimator.name());
    println!("inputs: {}", traj.n_inputs());
    println!("log_marginal: {log_marginal}");
    println!("fit_ms: {fit_ms:.3}");
    if let Some(f) = retention_fraction {
        println!("retention_fraction: {f}");
    }
    println!("model: {}", path.display());
    Ok(path)
}

#[derive(Serialize)]
struct PredictionRow {
    index: usize,
    mean: f64,
    variance: f64,
}

pub fn predict(ctx: &RunContext, model: &Path, queries: &Path) -> Result<PathBuf> {
    let fitted = ModelFile::load(model)?.into_model()?;
    let text = std::fs::read_to_string(queries).with_context(|| format!("reading {}", queries.display()))?;
    let xs: Vec<Vec<f64>> =
        serde_json::from_str(&text).with_context(|| format!("parsing query file {}", queries.display()))?;
    let rows = xs
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let (mean, variance) = match &fitted {
                FittedModel::Exact(p) => p.predict(x)?,
                FittedModel::Sparse(p) => p.predict(x)?,
                FittedModel::LowRank(p) => p.predict(x)?,
            };
            Ok(PredictionRow { index, mean, variance })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = output_file(&ctx.out, "predictions.csv")?;
    write_csv(&path, &ctx.hash(), &rows)?;
    println!("predictions: {}", path.display());
    Ok(path)
}

pub fn compare(ctx: &RunContext) -> Result<PathBuf> {
    let rows = compare_approx(&ctx.cfg.compare, ctx.seed)?;
    let path = output_file(&ctx.out, "compare_approx.csv")?;
    write_csv(&path, &ctx.hash(), &rows)?;
    println!("compare_approx: {} rows -> {}", rows.len(), path.display());
    Ok(path)
}

pub fn retention_sweep(ctx: &RunContext) -> Result<PathBuf> {
    let rows = retention(&ctx.cfg.retention, ctx.seed)?;
    let path = output_file(&ctx.out, "retention.csv")?;
    write_csv(&path, &ctx.hash(), &rows)?;
    println!("retention: {} rows -> {}", rows.len(), path.display());
    Ok(path)
}

pub fn learning(ctx: &RunContext, landscape: bool) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    if cfg.task == Task::SyntheticPrior {
        bail!("learn needs an environment task, not synthetic_prior");
    }
    let runs = learn(cfg)?;
    let rows = curve_rows(&runs, cfg.estimator.name());
    let curve = output_file(&ctx.out, "learning_curve.csv")?;
    write_csv(&curve, &ctx.hash(), &rows)?;
    for r in &runs {
        let rewards: Vec<f64> = r.run.curve.iter().map(|e| e.total_reward).collect();
        let k = rewards.len().min(10);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "seed {}: {} episodes, first-{k} mean {:.3}, last-{k} mean {:.3}",
            r.seed,
            rewards.len(),
            mean(&rewards[..k]),
            mean(&rewards[rewards.len() - k..])
        );
    }
    let mut written = vec![curve];
    if landscape {
        let first = runs.first().context("no seeds configured")?;
        let env = cfg.make_env(first.seed)?;
        let data = first.run.data.last_episodes(cfg.landscape.window);
        let study = landscape_study(&data, env.as_ref(), cfg.mode, &first.run.learner.params, &cfg.landscape, first.seed)?;
        let path = output_file(&ctx.out, "landscape.csv")?;
        write_csv(&path, &ctx.hash(), &study.rows)?;
        println!("landscape: N = {}, M = {}, pearson {:.4}", study.n_inputs, study.pseudo_inputs.len(), study.correlation);
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    estimator: &'a str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    fit_ms: f64,
    predict_us: f64,
}

impl<'a> From<&'a BenchRow> for TimingRow<'a> {
    fn from(r: &'a BenchRow) -> Self {
        TimingRow { estimator: &r.estimator, n: r.n, m: r.m, fit_ms: r.fit_ms, predict_us: r.predict_us }
    }
}

pub fn timing(ctx: &RunContext) -> Result<PathBuf> {
    let rows = bench(&ctx.cfg.bench, ctx.seed)?;
    let table: Vec<TimingRow> = rows.iter().map(TimingRow::from).collect();
    let path = output_file(&ctx.out, "bench.csv")?;
    write_csv(&path, &ctx.hash(), &table)?;
    println!("bench: {} rows -> {}", rows.len(), path.display());
    Ok(path)
}
