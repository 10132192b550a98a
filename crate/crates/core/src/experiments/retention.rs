use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{sample_prior_trajectory, SyntheticConfig};
use crate::agent::{input_ranges, run_episode, Policy, PriorConfig, ValueMode};
use crate::envs::{Environment, MountainCar, MountainCarConfig};
use crate::error::{GptdError, Result};
use crate::gptd::{ModelParams, Trajectory};
use crate::lowrank::retention_fraction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetentionConfig {
    pub nu_min: f64,
    pub nu_max: f64,
    /// Log-spaced grid points between `nu_min` and `nu_max`.
    pub nu_points: usize,
    /// Trajectories per source.
    pub trajectories: usize,
    pub synthetic: SyntheticConfig,
    pub mountain_car: MountainCarConfig,
    /// Kernel for the Mountain Car rollouts.
    pub mountain_car_prior: PriorConfig,
}

impl Default for RetentionConfig {
    fn default() -> Self {
        RetentionConfig {
            nu_min: 1e-8,
            nu_max: 1.0,
            nu_points: 9,
            trajectories: 100,
            synthetic: SyntheticConfig::default(),
            mountain_car: MountainCarConfig::default(),
            mountain_car_prior: PriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionSource {
    MountainCar,
    Prior,
}

impl RetentionSource {
    pub fn name(self) -> &'static str {
        match self {
            RetentionSource::MountainCar => "mountain_car",
            RetentionSource::Prior => "prior",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub source: RetentionSource,
    pub nu: f64,
    pub mean: f64,
    pub std: f64,
}

fn nu_grid(cfg: &RetentionConfig) -> Result<Vec<f64>> {
    if !(cfg.nu_min > 0.0 && cfg.nu_max >= cfg.nu_min) || cfg.nu_points == 0 {
        return Err(GptdError::InvalidInput("retention grid needs 0 < nu_min <= nu_max and nu_points >= 1".into()));
    }
    if cfg.nu_points == 1 {
        return Ok(vec![cfg.nu_min]);
    }
    let (a, b) = (cfg.nu_min.ln(), cfg.nu_max.ln());
    Ok((0..cfg.nu_points).map(|i| (a + (b - a) * i as f64 / (cfg.nu_points - 1) as f64).exp()).collect())
}

/// Uniform-random-policy Mountain Car episodes in action-value mode.
fn mountain_car_trajectories(cfg: &RetentionConfig, seed: u64) -> Result<(Vec<Trajectory>, ModelParams)> {
    let probe = MountainCar::new(cfg.mountain_car.clone(), seed);
    let params = cfg.mountain_car_prior.params(&input_ranges(&probe, ValueMode::ActionValue))?;
    let policy = Policy::EpsilonGreedy { actions: probe.action_grid(), epsilon: 1.0 };
    let trajs = (0..cfg.trajectories)
        .map(|i| {
            let mut env = MountainCar::new(cfg.mountain_car.clone(), seed.wrapping_add(i as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ep = run_episode(&mut env, &policy, None, ValueMode::ActionValue, cfg.mountain_car.max_steps, 1.0, &mut rng)?;
            Trajectory::single_episode(ep.inputs, ep.rewards)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((trajs, params))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Retention of the low-rank dictionary over a log-spaced threshold grid for
/// Mountain Car rollouts and prior samples. Rows are ordered by source, then
/// threshold.
pub fn retention(cfg: &RetentionConfig, seed: u64) -> Result<Vec<RetentionRow>> {
    let grid = nu_grid(cfg)?;
    let (mc, mc_params) = mountain_car_trajectories(cfg, seed)?;
    let prior: Vec<(Trajectory, ModelParams)> = (0..cfg.trajectories)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((1 << 32) | i as u64);
            sample_prior_trajectory(&cfg.synthetic, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut jobs: Vec<(RetentionSource, f64)> = Vec::new();
    for source in [RetentionSource::MountainCar, RetentionSource::Prior] {
        jobs.extend(grid.iter().map(|&nu| (source, nu)));
    }
    jobs.into_par_iter()
        .map(|(source, nu)| {
            let fractions = match source {
                RetentionSource::MountainCar => {
                    mc.iter().map(|t| retention_fraction(t, &mc_params.kernel, nu)).collect::<Result<Vec<_>>>()?
                }
                RetentionSource::Prior => {
                    prior.iter().map(|(t, p)| retention_fraction(t, &p.kernel, nu)).collect::<Result<Vec<_>>>()?
                }
            };
            let (mean, std) = mean_std(&fractions);
            Ok(RetentionRow { source, nu, mean, std })
        })
        .collect()
}
