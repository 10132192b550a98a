//! Policies, rollouts, greedy improvement and approximate policy iteration.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{goal_distance, heading_error, Environment};
use crate::error::{GptdError, Result};
use crate::gptd::{fit_exact, ExactPosterior, ModelParams, Trajectory};
use crate::hyperopt::{init_pseudo, optimize, optimize_exact, InitStrategy, OptimConfig};
use crate::kernel::KernelParams;
use crate::lowrank::{fit_lowrank, LowRankPosterior};
use crate::spgp::{fit_sparse, PseudoInputSet, SparsePosterior};

/// What the GP inputs are: state-action pairs or states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    #[default]
    ActionValue,
    StateValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Policy {
    /// Greedy over a discrete action grid, uniform random with probability
    /// `epsilon` or while no value model exists.
    EpsilonGreedy { actions: Vec<Vec<f64>>, epsilon: f64 },
    /// Turn rate proportional to heading error.
    LinearHeading { k_omega: f64 },
    /// Acceleration and turn rate from range and heading error.
    FourierNav { k_r: f64, k_theta: f64 },
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::EpsilonGreedy { actions, epsilon } => {
                if actions.is_empty() {
                    return Err(GptdError::InvalidInput("action grid is empty".into()));
                }
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(GptdError::InvalidInput(format!("epsilon {epsilon} outside [0, 1]")));
                }
                Ok(())
            }
            Policy::LinearHeading { k_omega } if k_omega.is_finite() => Ok(()),
            Policy::FourierNav { k_r, k_theta } if k_r.is_finite() && k_theta.is_finite() => Ok(()),
            _ => Err(GptdError::InvalidInput("policy gain is not finite".into())),
        }
    }

    /// Tunable parameters; empty for epsilon-greedy.
    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            Policy::EpsilonGreedy { .. } => Vec::new(),
            Policy::LinearHeading { k_omega } => vec![k_omega],
            Policy::FourierNav { k_r, k_theta } => vec![k_r, k_theta],
        }
    }

    /// Deterministic action of a parametric policy.
    pub fn parametric_action(&self, env: &dyn Environment, state: &[f64]) -> Option<Vec<f64>> {
        let goal = env.goal().unwrap_or([0.0, 0.0]);
        match *self {
            Policy::EpsilonGreedy { .. } => None,
            Policy::LinearHeading { k_omega } => Some(env.nav_action(0.0, k_omega * heading_error(state, goal))),
            Policy::FourierNav { k_r, k_theta } => {
                let e_th = heading_error(state, goal);
                let e_r = goal_distance(state, goal);
                let accel = k_r * e_r * e_th.cos();
                let omega = k_r * e_th.cos() * e_th.sin() + k_theta * e_th;
                Some(env.nav_action(accel, omega))
            }
        }
    }
}

/// Anything that predicts a posterior value mean.
pub trait ValueModel: Send + Sync {
    fn mean(&self, x: &[f64]) -> Result<f64>;
}

impl ValueModel for ExactPosterior {
    fn mean(&self, x: &[f64]) -> Result<f64> {
        self.predict_mean(x)
    }
}

impl ValueModel for SparsePosterior {
    fn mean(&self, x: &[f64]) -> Result<f64> {
        self.predict_mean(x)
    }
}

impl ValueModel for LowRankPosterior {
    fn mean(&self, x: &[f64]) -> Result<f64> {
        self.predict_mean(x)
    }
}

/// A fitted estimator of any kind.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Exact(ExactPosterior),
    Sparse(SparsePosterior),
    LowRank(LowRankPosterior),
}

impl ValueModel for FittedModel {
    fn mean(&self, x: &[f64]) -> Result<f64> {
        match self {
            FittedModel::Exact(p) => p.predict_mean(x),
            FittedModel::Sparse(p) => p.predict_mean(x),
            FittedModel::LowRank(p) => p.predict_mean(x),
        }
    }
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    s.iter().chain(a).copied().collect()
}

/// Grid action with the largest predicted mean at `state`; ties go to the
/// lowest index.
pub fn greedy_action(model: Option<&dyn ValueModel>, state: &[f64], actions: &[Vec<f64>]) -> Result<usize> {
    let model = model.ok_or(GptdError::Unfitted)?;
    if actions.is_empty() {
        return Err(GptdError::InvalidInput("action grid is empty".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, a) in actions.iter().enumerate() {
        let v = model.mean(&concat(state, a))?;
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best.0)
}

fn clamp_to_grid(action: Vec<f64>, grid: &[Vec<f64>]) -> Vec<f64> {
    action
        .into_iter()
        .enumerate()
        .map(|(d, v)| {
            let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a[d]), hi.max(a[d])));
            v.clamp(lo, hi)
        })
        .collect()
}

/// Chooses an action. Parametric policies also explore uniformly over the
/// environment's grid with probability `epsilon`.
pub fn select_action(
    env: &dyn Environment,
    policy: &Policy,
    model: Option<&dyn ValueModel>,
    state: &[f64],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    match policy {
        Policy::EpsilonGreedy { actions, epsilon } => {
            if model.is_none() || rng.random::<f64>() < *epsilon {
                Ok(actions.choose(rng).expect("non-empty grid").clone())
            } else {
                Ok(actions[greedy_action(model, state, actions)?].clone())
            }
        }
        _ => {
            let grid = env.action_grid();
            if rng.random::<f64>() < epsilon {
                Ok(grid.choose(rng).expect("non-empty grid").clone())
            } else {
                Ok(clamp_to_grid(policy.parametric_action(env, state).expect("parametric"), &grid))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub inputs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal: bool,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Rolls out one episode from the start state. With `T` transitions the
/// episode carries `T + 1` inputs; in action-value mode the last input pairs
/// the final state with the action the policy would take there.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &Policy,
    model: Option<&dyn ValueModel>,
    mode: ValueMode,
    max_steps: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    policy.validate()?;
    if mode == ValueMode::StateValue && matches!(policy, Policy::EpsilonGreedy { .. }) && model.is_some() {
        return Err(GptdError::InvalidInput("epsilon-greedy action selection needs action values".into()));
    }
    let mut state = env.start_state();
    let mut action = select_action(env, policy, model, &state, epsilon, rng)?;
    let input = |s: &[f64], a: &[f64]| match mode {
        ValueMode::ActionValue => concat(s, a),
        ValueMode::StateValue => s.to_vec(),
    };
    let mut ep = Episode { inputs: vec![input(&state, &action)], rewards: Vec::new(), states: vec![state.clone()], terminal: false };
    for _ in 0..max_steps {
        let step = env.step(&state, &action);
        state = step.next_state;
        action = select_action(env, policy, model, &state, epsilon, rng)?;
        ep.inputs.push(input(&state, &action));
        ep.rewards.push(step.reward);
        ep.states.push(state.clone());
        if step.terminal {
            ep.terminal = true;
            break;
        }
    }
    Ok(ep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Bracket of the heading-gain line search.
    pub k_omega_bounds: [f64; 2],
    pub k_r_bounds: [f64; 2],
    pub k_theta_bounds: [f64; 2],
    /// Points per axis of the two-gain grid.
    pub grid_size: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { k_omega_bounds: [0.0, 5.0], k_r_bounds: [0.0, 2.0], k_theta_bounds: [0.0, 5.0], grid_size: 100 }
    }
}

/// Mean predicted value of following `policy` for one step from each
/// evaluation state.
pub fn policy_score(
    model: &dyn ValueModel,
    env: &dyn Environment,
    policy: &Policy,
    mode: ValueMode,
    eval_states: &[Vec<f64>],
) -> Result<f64> {
    let grid = env.action_grid();
    let mut total = 0.0;
    for s in eval_states {
        let a = clamp_to_grid(policy.parametric_action(env, s).expect("parametric"), &grid);
        total += match mode {
            ValueMode::ActionValue => model.mean(&concat(s, &a))?,
            ValueMode::StateValue => model.mean(&env.dynamics(s, &a))?,
        };
    }
    Ok(total / eval_states.len() as f64)
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Improves a parametric policy against the model; epsilon-greedy policies
/// are returned unchanged since their greediness lives in action selection.
/// The incumbent is kept unless a candidate scores strictly higher.
pub fn greedy_update(
    model: &dyn ValueModel,
    env: &dyn Environment,
    policy: &Policy,
    mode: ValueMode,
    eval_states: &[Vec<f64>],
    search: &SearchConfig,
) -> Result<Policy> {
    if matches!(policy, Policy::EpsilonGreedy { .. }) {
        return Ok(policy.clone());
    }
    if eval_states.is_empty() {
        return Err(GptdError::InvalidInput("no evaluation states for the policy search".into()));
    }
    let score = |p: &Policy| policy_score(model, env, p, mode, eval_states);
    let incumbent = score(policy)?;
    match *policy {
        Policy::EpsilonGreedy { .. } => unreachable!(),
        Policy::LinearHeading { .. } => {
            let [lo, hi] = search.k_omega_bounds;
            let f = |k: f64| score(&Policy::LinearHeading { k_omega: k });
            // Coarse scan for a bracket, then golden-section refinement.
            let n = 20;
            let h = (hi - lo) / n as f64;
            let mut best = (lo, f(lo)?);
            for i in 1..=n {
                let k = lo + h * i as f64;
                let v = f(k)?;
                if v > best.1 {
                    best = (k, v);
                }
            }
            let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let (mut fc, mut fd) = (f(c)?, f(d)?);
            for _ in 0..40 {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = f(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = f(d)?;
                }
            }
            for (k, v) in [(c, fc), (d, fd)] {
                if v > best.1 {
                    best = (k, v);
                }
            }
            Ok(if best.1 > incumbent { Policy::LinearHeading { k_omega: best.0 } } else { policy.clone() })
        }
        Policy::FourierNav { .. } => {
            let n = search.grid_size.max(2);
            let axis = |[lo, hi]: [f64; 2], i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let mut best: Option<(f64, f64, f64)> = None;
            for i in 0..n {
                for j in 0..n {
                    let (k_r, k_theta) = (axis(search.k_r_bounds, i), axis(search.k_theta_bounds, j));
                    let v = score(&Policy::FourierNav { k_r, k_theta })?;
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((k_r, k_theta, v));
                    }
                }
            }
            let (k_r, k_theta, v) = best.expect("non-empty grid");
            Ok(if v > incumbent { Policy::FourierNav { k_r, k_theta } } else { policy.clone() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    #[default]
    Sparse,
    Lowrank,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Sparse => "sparse",
            EstimatorKind::Lowrank => "lowrank",
        }
    }
}

/// Initial model hyperparameters. Unset length scales default to a quarter
/// of each input's range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub signal_variance: f64,
    pub length_scales: Option<Vec<f64>>,
    pub noise_variance: f64,
    pub discount: f64,
    pub terminal_value_zero: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            signal_variance: 1.0,
            length_scales: None,
            noise_variance: 0.01,
            discount: 0.9,
            terminal_value_zero: false,
        }
    }
}

impl PriorConfig {
    pub fn params(&self, input_ranges: &[(f64, f64)]) -> Result<ModelParams> {
        let ls = match &self.length_scales {
            Some(l) => l.clone(),
            None => input_ranges.iter().map(|(lo, hi)| if hi > lo { 0.25 * (hi - lo) } else { 1.0 }).collect(),
        };
        let mut p = ModelParams::new(KernelParams::new(self.signal_variance, &ls)?, self.noise_variance, self.discount)?;
        p.terminal_value_zero = self.terminal_value_zero;
        Ok(p)
    }
}

/// Input ranges of an environment under a value mode.
pub fn input_ranges(env: &dyn Environment, mode: ValueMode) -> Vec<(f64, f64)> {
    let mut r = env.state_bounds();
    if mode == ValueMode::ActionValue {
        let grid = env.action_grid();
        for d in 0..env.action_dim() {
            r.push(grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a[d]), hi.max(a[d]))));
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub episodes: usize,
    pub mode: ValueMode,
    pub estimator: EstimatorKind,
    /// Pseudo inputs for the sparse estimator.
    pub m: usize,
    /// Admission threshold for the low-rank estimator.
    pub nu: f64,
    /// Most recent episodes kept for fitting.
    pub window: usize,
    /// Episodes between evidence maximizations; 0 disables them.
    pub refit_every_k_episodes: usize,
    pub epsilon: f64,
    pub eval_states: usize,
    pub max_retries: usize,
    pub init_strategy: InitStrategy,
    pub prior: PriorConfig,
    pub optimizer: OptimConfig,
    pub search: SearchConfig,
    /// Stop once parametric policy gains move less than this.
    pub convergence_tolerance: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            episodes: 100,
            mode: ValueMode::ActionValue,
            estimator: EstimatorKind::Sparse,
            m: 5,
            nu: 0.1,
            window: 20,
            refit_every_k_episodes: 5,
            epsilon: 0.1,
            eval_states: 64,
            max_retries: 3,
            init_strategy: InitStrategy::RandomSubset,
            prior: PriorConfig::default(),
            optimizer: OptimConfig::default(),
            search: SearchConfig::default(),
            convergence_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub steps: usize,
    pub wall_ms: f64,
    /// Fit failures that forced a fresh rollout of this episode.
    pub retries: usize,
}

/// Estimator state carried across episodes.
#[derive(Debug, Clone)]
pub struct Learner {
    pub kind: EstimatorKind,
    pub params: ModelParams,
    pub pseudo_inputs: Option<PseudoInputSet>,
    pub m: usize,
    pub nu: f64,
    pub init_strategy: InitStrategy,
}

impl Learner {
    /// Fits the estimator, first maximizing the evidence when `optimize`.
    /// The low-rank baseline is never optimized through its own evidence.
    pub fn fit(&mut self, data: &Trajectory, optimize_now: bool, cfg: &OptimConfig, seed: u64) -> Result<FittedModel> {
        match self.kind {
            EstimatorKind::Exact => {
                if optimize_now {
                    self.params = optimize_exact(data, &self.params, cfg)?.0;
                }
                Ok(FittedModel::Exact(fit_exact(data, &self.params)?))
            }
            EstimatorKind::Sparse => {
                let z = match self.pseudo_inputs.take() {
                    Some(z) => z,
                    None => init_pseudo(data, self.m, self.init_strategy, seed)?,
                };
                let (params, z) = if optimize_now {
                    let r = optimize(data, &self.params, &z, cfg)?;
                    (r.params, r.pseudo_inputs)
                } else {
                    (self.params.clone(), z)
                };
                let post = fit_sparse(data, &params, &z);
                self.params = params;
                self.pseudo_inputs = Some(z);
                Ok(FittedModel::Sparse(post?))
            }
            EstimatorKind::Lowrank => Ok(FittedModel::LowRank(fit_lowrank(data, &self.params, self.nu)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearningRun {
    pub policy: Policy,
    pub curve: Vec<EpisodeRecord>,
    pub model: Option<FittedModel>,
    pub learner: Learner,
    /// Data the final model was fitted on.
    pub data: Trajectory,
}

/// Alternates rollouts, refits and greedy updates for `cfg.episodes`
/// episodes, or until a parametric policy stops moving.
pub fn policy_iteration(env: &mut dyn Environment, initial: Policy, cfg: &AgentConfig, seed: u64) -> Result<LearningRun> {
    initial.validate()?;
    if cfg.estimator == EstimatorKind::Sparse && cfg.m == 0 {
        return Err(GptdError::InvalidInput("sparse estimator needs m >= 1".into()));
    }
    if cfg.estimator == EstimatorKind::Lowrank && !(cfg.nu > 0.0) {
        return Err(GptdError::InvalidInput("low-rank estimator needs nu > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner {
        kind: cfg.estimator,
        params: cfg.prior.params(&input_ranges(env, cfg.mode))?,
        pseudo_inputs: None,
        m: cfg.m,
        nu: cfg.nu,
        init_strategy: cfg.init_strategy,
    };
    let mut policy = initial;
    let mut model: Option<FittedModel> = None;
    let mut data = Trajectory::default();
    let mut eval_states: Vec<Vec<f64>> = Vec::new();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let max_steps = env.max_steps();

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        let mut retries = 0;
        let (ep, fitted, window) = loop {
            let ep = run_episode(env, &policy, model.as_ref().map(|m| m as &dyn ValueModel), cfg.mode, max_steps, cfg.epsilon, &mut rng)?;
            let mut window = data.clone();
            window.push_episode(ep.inputs.clone(), ep.rewards.clone(), ep.terminal)?;
            let window = window.last_episodes(cfg.window.max(1));
            let optimize_now = cfg.refit_every_k_episodes > 0 && episode % cfg.refit_every_k_episodes == 0;
            let mut attempt = learner.clone();
            match attempt.fit(&window, optimize_now, &cfg.optimizer, seed.wrapping_add(episode as u64)) {
                Ok(m) => {
                    learner = attempt;
                    break (ep, m, window);
                }
                Err(e) if retries >= cfg.max_retries => return Err(e),
                Err(_) => retries += 1,
            }
        };
        data = window;
        if eval_states.is_empty() {
            let n = ep.states.len();
            eval_states = if n >= cfg.eval_states {
                sample(&mut rng, n, cfg.eval_states).into_iter().map(|i| ep.states[i].clone()).collect()
            } else {
                (0..cfg.eval_states).map(|_| ep.states[rng.random_range(0..n)].clone()).collect()
            };
        }
        let updated = greedy_update(&fitted, env, &policy, cfg.mode, &eval_states, &cfg.search)?;
        let moved = policy
            .parameters()
            .iter()
            .zip(updated.parameters())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let converged = !updated.parameters().is_empty() && episode > 0 && moved < cfg.convergence_tolerance;
        policy = updated;
        model = Some(fitted);
        curve.push(EpisodeRecord {
            episode,
            total_reward: ep.total_reward(),
            steps: ep.rewards.len(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            retries,
        });
        if converged {
            break;
        }
    }
    Ok(LearningRun { policy, curve, model, learner, data })
}
