use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{sample_prior_trajectory, SyntheticConfig};
use crate::error::{GptdError, Result};
use crate::gptd::exact_log_marginal;
use crate::hyperopt::{optimize, OptimConfig};
use crate::spgp::{log_marginal, PseudoInputSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub synthetic: SyntheticConfig,
    /// Pseudo-input counts to sweep; counts at or above the number of inputs
    /// are dropped.
    pub subset_sizes: Vec<usize>,
    /// Add a cell using every input as a pseudo input.
    pub include_full: bool,
    /// Random subsets drawn per cell. The full cell has only one.
    pub subsets: usize,
    /// Settings of the pseudo-input optimization.
    pub optimizer: OptimConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            synthetic: SyntheticConfig::default(),
            subset_sizes: vec![5, 10, 20, 40],
            include_full: true,
            subsets: 100,
            optimizer: OptimConfig {
                optimize_hyperparams: false,
                regularization_weight: 0.0,
                max_iterations: 50,
                ..OptimConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub m: usize,
    pub subset: usize,
    pub log_marginal_exact: f64,
    pub log_marginal_before: f64,
    pub log_marginal_after: f64,
    pub ratio_before: f64,
    pub ratio_after: f64,
}

/// Sparse-to-exact log-evidence ratios on one prior-sampled dataset, before
/// and after optimizing the pseudo-input locations. Hyperparameters stay at
/// their generating values. Rows are ordered by `(m, subset)`.
pub fn compare_approx(cfg: &CompareConfig, seed: u64) -> Result<Vec<CompareRow>> {
    if cfg.subsets == 0 {
        return Err(GptdError::InvalidInput("subsets must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (traj, params) = sample_prior_trajectory(&cfg.synthetic, &mut rng)?;
    let exact = exact_log_marginal(&traj, &params)?;
    let n_in = traj.n_inputs();

    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut sizes: Vec<usize> = cfg.subset_sizes.iter().copied().filter(|&m| m >= 1 && m < n_in).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for &m in &sizes {
        cells.extend((0..cfg.subsets).map(|s| (m, s)));
    }
    if cfg.include_full {
        cells.push((n_in, 0));
    }

    cells
        .into_par_iter()
        .map(|(m, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((m as u64) << 32) | s as u64);
            let mut picks = sample(&mut rng, n_in, m).into_vec();
            picks.sort_unstable();
            let z = PseudoInputSet::new(picks.iter().map(|&i| traj.inputs[i].clone()).collect())?;
            let before = log_marginal(&traj, &params, &z)?;
            let after = match optimize(&traj, &params, &z, &cfg.optimizer) {
                Ok(r) => log_marginal(&traj, &r.params, &r.pseudo_inputs).unwrap_or(before),
                Err(_) => before,
            };
            Ok(CompareRow {
                m,
                subset: s,
                log_marginal_exact: exact,
                log_marginal_before: before,
                log_marginal_after: after,
                ratio_before: before / exact,
                ratio_after: after / exact,
            })
        })
        .collect()
}
