use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GptdError, Result};
use crate::gptd::{fit_exact, ModelParams, Trajectory};
use crate::hyperopt::{init_pseudo, InitStrategy};
use crate::kernel::KernelParams;
use crate::spgp::fit_sparse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub pseudo_counts: Vec<usize>,
    /// Timed repetitions; the median is reported.
    pub reps: usize,
    /// Query points per prediction timing.
    pub queries: usize,
    /// Skip the exact model above this many transitions.
    pub exact_max: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100, 250, 500, 1000, 2000],
            pseudo_counts: vec![5, 10, 25],
            reps: 5,
            queries: 200,
            exact_max: 2000,
        }
    }
}

/// `estimator, N, M, fit_ms, predict_us`; `M` is 0 for the exact model and
/// `predict_us` is per query (mean and variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub fit_ms: f64,
    pub predict_us: f64,
}

/// Episodes of a smooth 2-D random walk with noisy rewards.
pub fn bench_trajectory(n_transitions: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::default();
    let per_episode = 50;
    let mut left = n_transitions;
    while left > 0 {
        let t = left.min(per_episode);
        let mut x: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut inputs = vec![x.to_vec()];
        let mut rewards = Vec::with_capacity(t);
        for _ in 0..t {
            x[0] = (x[0] + rng.random_range(-0.1..0.1)).clamp(-1.0, 1.0);
            x[1] = (x[1] + rng.random_range(-0.1..0.1)).clamp(-1.0, 1.0);
            rewards.push((2.0 * x[0]).sin() * x[1].cos() + 0.05 * rng.random_range(-1.0..1.0));
            inputs.push(x.to_vec());
        }
        traj.push_episode(inputs, rewards, false)?;
        left -= t;
    }
    Ok(traj)
}

pub fn bench_params() -> ModelParams {
    ModelParams::new(KernelParams::isotropic(1.0, 0.5, 2).expect("valid"), 0.01, 0.9).expect("valid")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn queries(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

/// Median fit and per-query prediction times. Runs sequentially so timings
/// are not contended. Rows ordered by `(N, estimator, M)`.
pub fn bench(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    if cfg.reps == 0 || cfg.queries == 0 {
        return Err(GptdError::InvalidInput("reps and queries must be positive".into()));
    }
    let params = bench_params();
    let qs = queries(cfg.queries, seed);
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let traj = bench_trajectory(n, seed)?;
        if n <= cfg.exact_max {
            let mut fit = Vec::with_capacity(cfg.reps);
            let mut pred = Vec::with_capacity(cfg.reps);
            for _ in 0..cfg.reps {
                let t = Instant::now();
                let post = fit_exact(&traj, &params)?;
                fit.push(t.elapsed().as_secs_f64() * 1e3);
                let t = Instant::now();
                for q in &qs {
                    black_box(post.predict(q)?);
                }
                pred.push(t.elapsed().as_secs_f64() * 1e6 / qs.len() as f64);
            }
            rows.push(BenchRow { estimator: "exact".into(), n, m: 0, fit_ms: median(fit), predict_us: median(pred) });
        }
        for &m in &cfg.pseudo_counts {
            let z = init_pseudo(&traj, m, InitStrategy::RandomSubset, seed)?;
            let mut fit = Vec::with_capacity(cfg.reps);
            let mut pred = Vec::with_capacity(cfg.reps);
            for _ in 0..cfg.reps {
                let t = Instant::now();
                let post = fit_sparse(&traj, &params, &z)?;
                fit.push(t.elapsed().as_secs_f64() * 1e3);
                let t = Instant::now();
                for q in &qs {
                    black_box(post.predict(q)?);
                }
                pred.push(t.elapsed().as_secs_f64() * 1e6 / qs.len() as f64);
            }
            rows.push(BenchRow { estimator: "sparse".into(), n, m, fit_ms: median(fit), predict_us: median(pred) });
        }
    }
    Ok(rows)
}
