//! Evidence maximization over log-hyperparameters and pseudo-input locations.
//!
//! The maximized objective is the sparse log marginal minus a quadratic
//! penalty `w * (|kernel log-params|^2 + |Z|^2)`. The noise level is left
//! unpenalized.

mod init;
pub mod lbfgs;

pub use init::{init_pseudo, init_pseudo_with_jitter, InitStrategy, INIT_JITTER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GptdError, Result};
use crate::gptd::{exact_log_marginal_grad, ModelParams, Trajectory};
use crate::spgp::{log_marginal_grad, PseudoInputSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub regularization_weight: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    pub optimize_hyperparams: bool,
    pub optimize_pseudo_inputs: bool,
    /// Curvature pairs kept by L-BFGS.
    pub memory: usize,
    /// Std. dev. of the perturbation of log-hyperparameters on restarts after
    /// the first; pseudo inputs move by this fraction of the data range.
    pub restart_spread: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            regularization_weight: 1e-3,
            restarts: 1,
            rng_seed: 0,
            optimize_hyperparams: true,
            optimize_pseudo_inputs: true,
            memory: 10,
            restart_spread: 0.25,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(GptdError::InvalidInput("gradient_tolerance must be positive".into()));
        }
        if !(self.regularization_weight >= 0.0) {
            return Err(GptdError::InvalidInput("regularization_weight must be non-negative".into()));
        }
        if self.restarts == 0 {
            return Err(GptdError::InvalidInput("restarts must be at least 1".into()));
        }
        if !(self.restart_spread >= 0.0) {
            return Err(GptdError::InvalidInput("restart_spread must be non-negative".into()));
        }
        Ok(())
    }

    fn settings(&self) -> lbfgs::Settings {
        lbfgs::Settings {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            memory: self.memory,
        }
    }
}

/// Regularized sparse evidence and its gradient, laid out as
/// `[log sf, log len_1.., log sigma^2, z_11, .., z_MD]`.
pub fn objective(
    traj: &Trajectory,
    params: &ModelParams,
    z: &PseudoInputSet,
    cfg: &OptimConfig,
) -> Result<(f64, Vec<f64>)> {
    let (lml, mut grad) = log_marginal_grad(traj, params, z)?;
    let w = cfg.regularization_weight;
    if w == 0.0 {
        return Ok((lml, grad));
    }
    let kernel = params.kernel.to_vec();
    let zf = z.to_flat();
    let penalty: f64 = kernel.iter().chain(&zf).map(|v| v * v).sum();
    for (g, v) in grad.iter_mut().zip(&kernel) {
        *g -= 2.0 * w * v;
    }
    let off = params.n_hyper();
    for (g, v) in grad[off..].iter_mut().zip(&zf) {
        *g -= 2.0 * w * v;
    }
    Ok((lml - w * penalty, grad))
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub params: ModelParams,
    pub pseudo_inputs: PseudoInputSet,
    pub value: f64,
    /// Objective after each accepted step of the selected restart, starting
    /// with its initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
}

struct Layout {
    n_hyper: usize,
    dim: usize,
    free: Vec<usize>,
    hyper_free: bool,
}

impl Layout {
    fn new(params: &ModelParams, z: &PseudoInputSet, cfg: &OptimConfig) -> Self {
        let n_hyper = params.n_hyper();
        let mut free = Vec::new();
        if cfg.optimize_hyperparams {
            free.extend(0..n_hyper);
        }
        if cfg.optimize_pseudo_inputs {
            free.extend(n_hyper..n_hyper + z.len() * z.dim());
        }
        Layout { n_hyper, dim: z.dim(), free, hyper_free: cfg.optimize_hyperparams }
    }

    fn pack(&self, params: &ModelParams, z: &PseudoInputSet) -> Vec<f64> {
        let mut v = params.hyper_vec();
        v.extend(z.to_flat());
        v
    }

    fn unpack(&self, base: &ModelParams, full: &[f64]) -> Result<(ModelParams, PseudoInputSet)> {
        // Frozen hyperparameters skip the log/exp round trip.
        let params = if self.hyper_free { base.with_hyper_vec(&full[..self.n_hyper]) } else { base.clone() };
        params.validate()?;
        Ok((params, PseudoInputSet::from_flat(&full[self.n_hyper..], self.dim)?))
    }
}

fn jittered_start(full: &[f64], layout: &Layout, traj: &Trajectory, spread: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale: Vec<f64> = traj.bounding_box().iter().map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 }).collect();
    let mut v = full.to_vec();
    for &i in &layout.free {
        let e: f64 = StandardNormal.sample(rng);
        let s = if i < layout.n_hyper { spread } else { spread * scale[(i - layout.n_hyper) % layout.dim] };
        v[i] += s * e;
    }
    v
}

/// Maximizes [`objective`] from `init_params`/`init_z`. Restart 0 starts at
/// the given point and later restarts from seeded perturbations of it; the
/// best restart wins with ties going to the lowest index.
pub fn optimize(
    traj: &Trajectory,
    init_params: &ModelParams,
    init_z: &PseudoInputSet,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    cfg.validate()?;
    let layout = Layout::new(init_params, init_z, cfg);
    let start = layout.pack(init_params, init_z);

    let run = |restart: usize| -> Option<OptimResult> {
        let x0 = if restart == 0 {
            start.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(restart as u64);
            jittered_start(&start, &layout, traj, cfg.restart_spread, &mut rng)
        };
        let eval = |free: &[f64]| -> Option<(f64, Vec<f64>)> {
            let mut full = x0.clone();
            for (&i, v) in layout.free.iter().zip(free) {
                full[i] = *v;
            }
            let (p, z) = layout.unpack(init_params, &full).ok()?;
            let (value, grad) = objective(traj, &p, &z, cfg).ok()?;
            Some((-value, layout.free.iter().map(|&i| -grad[i]).collect()))
        };
        let free0: Vec<f64> = layout.free.iter().map(|&i| x0[i]).collect();
        let min = lbfgs::minimize(eval, &free0, cfg.settings())?;
        let mut full = x0.clone();
        for (&i, v) in layout.free.iter().zip(&min.x) {
            full[i] = *v;
        }
        let (params, pseudo_inputs) = if restart == 0 && min.iterations == 0 {
            (init_params.clone(), init_z.clone())
        } else {
            layout.unpack(init_params, &full).ok()?
        };
        Some(OptimResult {
            params,
            pseudo_inputs,
            value: -min.value,
            trace: min.trace.iter().map(|v| -v).collect(),
            iterations: min.iterations,
            converged: min.converged,
            restart,
        })
    };

    let results: Vec<Option<OptimResult>> = (0..cfg.restarts).into_par_iter().map(run).collect();
    let mut best: Option<OptimResult> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    best.ok_or(GptdError::OptimizationFailed { restarts: cfg.restarts, best: None })
}

/// Maximizes the exact evidence minus `w * |kernel log-params|^2` over the
/// log-hyperparameters. Restarts and masks behave as in [`optimize`];
/// the pseudo-input mask is ignored.
pub fn optimize_exact(traj: &Trajectory, init_params: &ModelParams, cfg: &OptimConfig) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    let start = init_params.hyper_vec();
    if !cfg.optimize_hyperparams {
        let (v, _) = exact_objective(traj, init_params, cfg)?;
        return Ok((init_params.clone(), vec![v]));
    }
    let run = |restart: usize| -> Option<(ModelParams, f64, Vec<f64>)> {
        let mut x0 = start.clone();
        if restart > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(restart as u64);
            for v in x0.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += cfg.restart_spread * e;
            }
        }
        let eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
            let p = init_params.with_hyper_vec(x);
            p.validate().ok()?;
            let (v, g) = exact_objective(traj, &p, cfg).ok()?;
            Some((-v, g.iter().map(|x| -x).collect()))
        };
        let min = lbfgs::minimize(eval, &x0, cfg.settings())?;
        Some((init_params.with_hyper_vec(&min.x), -min.value, min.trace.iter().map(|v| -v).collect()))
    };
    let results: Vec<_> = (0..cfg.restarts).into_par_iter().map(run).collect();
    let mut best: Option<(ModelParams, f64, Vec<f64>)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.1 > b.1) {
            best = Some(r);
        }
    }
    best.map(|(p, _, t)| (p, t)).ok_or(GptdError::OptimizationFailed { restarts: cfg.restarts, best: None })
}

/// Regularized exact evidence over `[log sf, log len_1.., log sigma^2]`.
pub fn exact_objective(traj: &Trajectory, params: &ModelParams, cfg: &OptimConfig) -> Result<(f64, Vec<f64>)> {
    let (lml, mut grad) = exact_log_marginal_grad(traj, params)?;
    let kernel = params.kernel.to_vec();
    let w = cfg.regularization_weight;
    for (g, v) in grad.iter_mut().zip(&kernel) {
        *g -= 2.0 * w * v;
    }
    Ok((lml - w * kernel.iter().map(|v| v * v).sum::<f64>(), grad))
}
