use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LandscapeConfig};
use crate::agent::{policy_iteration, LearningRun, ValueMode, ValueModel};
use crate::envs::Environment;
use crate::error::{GptdError, Result};
use crate::gptd::{fit_exact, ModelParams, Trajectory};
use crate::hyperopt::{init_pseudo, optimize, optimize_exact};
use crate::spgp::{fit_sparse, PseudoInputSet};

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub episode: usize,
    pub total_reward: f64,
    pub estimator: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub run: LearningRun,
}

/// Policy iteration for every configured seed, in parallel. Runs come back
/// in seed order.
pub fn learn(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let agent = cfg.agent_config();
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let mut env = cfg.make_env(seed)?;
            let initial = cfg.initial_policy(env.as_ref());
            let run = policy_iteration(env.as_mut(), initial, &agent, seed)?;
            Ok(SeedRun { seed, run })
        })
        .collect()
}

pub fn curve_rows(runs: &[SeedRun], estimator: &str) -> Vec<CurveRow> {
    runs.iter()
        .flat_map(|r| {
            r.run.curve.iter().map(move |e| CurveRow {
                seed: r.seed,
                episode: e.episode,
                total_reward: e.total_reward,
                estimator: estimator.to_string(),
                wall_ms: e.wall_ms,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub estimator: String,
    pub x0: f64,
    pub x1: f64,
    pub value: f64,
}

/// Bounding box of the state part of the inputs.
fn state_box(data: &Trajectory, state_dim: usize) -> Result<Vec<(f64, f64)>> {
    let bbox = data.bounding_box();
    if bbox.len() < state_dim || state_dim < 2 {
        return Err(GptdError::InvalidInput("landscape needs at least two state dimensions in the data".into()));
    }
    Ok(bbox[..state_dim].to_vec())
}

fn state_mean(data: &Trajectory, state_dim: usize) -> Vec<f64> {
    let n = data.inputs.len() as f64;
    (0..state_dim).map(|d| data.inputs.iter().map(|x| x[d]).sum::<f64>() / n).collect()
}

/// Predicted state value on a `grid`×`grid` lattice spanning the first two
/// state dimensions of `data`; other state dimensions sit at their data
/// mean. In action-value mode the value is the best grid action's mean.
pub fn value_landscape(
    model: &dyn ValueModel,
    env: &dyn Environment,
    data: &Trajectory,
    mode: ValueMode,
    grid: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if grid < 2 {
        return Err(GptdError::InvalidInput("landscape grid needs at least 2 points per axis".into()));
    }
    let sd = env.state_dim();
    let bbox = state_box(data, sd)?;
    let base = state_mean(data, sd);
    let actions = env.action_grid();
    let axis = |d: usize, i: usize| bbox[d].0 + (bbox[d].1 - bbox[d].0) * i as f64 / (grid - 1) as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let mut s = base.clone();
            s[0] = axis(0, i);
            s[1] = axis(1, j);
            let v = match mode {
                ValueMode::StateValue => model.mean(&s)?,
                ValueMode::ActionValue => {
                    let mut best = f64::NEG_INFINITY;
                    for a in &actions {
                        let x: Vec<f64> = s.iter().chain(a).copied().collect();
                        best = best.max(model.mean(&x)?);
                    }
                    best
                }
            };
            out.push((s[0], s[1], v));
        }
    }
    Ok(out)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone)]
pub struct LandscapeStudy {
    /// Hyperparameters shared by both estimators.
    pub params: ModelParams,
    pub pseudo_inputs: PseudoInputSet,
    pub rows: Vec<LandscapeRow>,
    pub correlation: f64,
    pub n_inputs: usize,
}

/// Exact and sparse value landscapes on the same data with shared
/// hyperparameters. Hyperparameters maximize the exact evidence; the sparse
/// model then places its pseudo inputs with those held fixed.
pub fn landscape_study(
    data: &Trajectory,
    env: &dyn Environment,
    mode: ValueMode,
    init_params: &ModelParams,
    cfg: &LandscapeConfig,
    seed: u64,
) -> Result<LandscapeStudy> {
    let (params, _) = optimize_exact(data, init_params, &cfg.hyper_optimizer)?;
    let exact = fit_exact(data, &params)?;
    let z0 = init_pseudo(data, cfg.m, cfg.init_strategy, seed)?;
    let mut pseudo = cfg.pseudo_optimizer.clone();
    pseudo.optimize_hyperparams = false;
    let z = match optimize(data, &params, &z0, &pseudo) {
        Ok(r) => r.pseudo_inputs,
        Err(GptdError::OptimizationFailed { .. }) => z0,
        Err(e) => return Err(e),
    };
    let sparse = fit_sparse(data, &params, &z)?;
    let ge = value_landscape(&exact, env, data, mode, cfg.grid)?;
    let gs = value_landscape(&sparse, env, data, mode, cfg.grid)?;
    let ve: Vec<f64> = ge.iter().map(|p| p.2).collect();
    let vs: Vec<f64> = gs.iter().map(|p| p.2).collect();
    let correlation = pearson(&ve, &vs);
    let rows = ge
        .iter()
        .map(|&(x0, x1, value)| LandscapeRow { estimator: "exact".into(), x0, x1, value })
        .chain(gs.iter().map(|&(x0, x1, value)| LandscapeRow { estimator: "sparse".into(), x0, x1, value }))
        .collect();
    Ok(LandscapeStudy { params, pseudo_inputs: z, rows, correlation, n_inputs: data.n_inputs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::EstimatorKind;

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeds_give_disjoint_curve_groups() {
        let cfg = ExperimentConfig { episodes: 2, seeds: vec![1, 2], ..Default::default() };
        let runs = learn(&cfg).unwrap();
        let rows = curve_rows(&runs, EstimatorKind::Sparse.name());
        assert_eq!(rows.len(), 4);
        assert!(rows[..2].iter().all(|r| r.seed == 1));
        assert!(rows[2..].iter().all(|r| r.seed == 2));
    }
}
