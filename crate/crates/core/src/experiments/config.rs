use serde::{Deserialize, Serialize};

use super::bench::BenchConfig;
use super::compare::CompareConfig;
use super::retention::RetentionConfig;
use crate::agent::{AgentConfig, EstimatorKind, Policy, PriorConfig, SearchConfig, ValueMode};
use crate::envs::{Environment, MountainCar, MountainCarConfig, Usv, UsvConfig, Uuv, UuvConfig};
use crate::error::{GptdError, Result};
use crate::hyperopt::{InitStrategy, OptimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    MountainCar,
    Usv,
    Uuv,
    SyntheticPrior,
}

/// Starting gains of the parametric vehicle policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyInit {
    pub k_omega: f64,
    pub k_r: f64,
    pub k_theta: f64,
}

impl Default for PolicyInit {
    fn default() -> Self {
        PolicyInit { k_omega: 0.5, k_r: 0.05, k_theta: 0.5 }
    }
}

/// Agent settings not already at the top level of [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentTuning {
    pub window: usize,
    pub refit_every_k_episodes: usize,
    pub epsilon: f64,
    pub eval_states: usize,
    pub max_retries: usize,
    pub init_strategy: InitStrategy,
    pub prior: PriorConfig,
    pub search: SearchConfig,
    pub convergence_tolerance: f64,
}

impl Default for AgentTuning {
    fn default() -> Self {
        let a = AgentConfig::default();
        AgentTuning {
            window: a.window,
            refit_every_k_episodes: a.refit_every_k_episodes,
            epsilon: a.epsilon,
            eval_states: a.eval_states,
            max_retries: a.max_retries,
            init_strategy: a.init_strategy,
            prior: a.prior,
            search: a.search,
            convergence_tolerance: a.convergence_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    /// Grid points per state axis.
    pub grid: usize,
    /// Pseudo inputs of the sparse landscape.
    pub m: usize,
    /// Most recent episodes of the learning data to fit on.
    pub window: usize,
    pub init_strategy: InitStrategy,
    /// Shared hyperparameters come from maximizing the exact evidence.
    pub hyper_optimizer: OptimConfig,
    /// Pseudo-input placement with the shared hyperparameters held fixed.
    pub pseudo_optimizer: OptimConfig,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            grid: 50,
            m: 5,
            window: 6,
            init_strategy: InitStrategy::RandomSubset,
            hyper_optimizer: OptimConfig { max_iterations: 100, optimize_pseudo_inputs: false, ..OptimConfig::default() },
            pseudo_optimizer: OptimConfig {
                max_iterations: 200,
                optimize_hyperparams: false,
                regularization_weight: 0.0,
                ..OptimConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for CSV and model outputs.
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

/// Everything one CLI invocation needs. Unset `m`/`nu` take the task's
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub estimator: EstimatorKind,
    pub mode: ValueMode,
    pub m: Option<usize>,
    pub nu: Option<f64>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub optimizer: OptimConfig,
    pub agent: AgentTuning,
    pub policy: PolicyInit,
    pub mountain_car: MountainCarConfig,
    pub usv: UsvConfig,
    pub uuv: UuvConfig,
    pub compare: CompareConfig,
    pub retention: RetentionConfig,
    pub bench: BenchConfig,
    pub landscape: LandscapeConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::MountainCar,
            estimator: EstimatorKind::Sparse,
            mode: ValueMode::ActionValue,
            m: None,
            nu: None,
            episodes: 100,
            seeds: vec![0],
            optimizer: OptimConfig::default(),
            agent: AgentTuning::default(),
            policy: PolicyInit::default(),
            mountain_car: MountainCarConfig::default(),
            usv: UsvConfig::default(),
            uuv: UuvConfig::default(),
            compare: CompareConfig::default(),
            retention: RetentionConfig::default(),
            bench: BenchConfig::default(),
            landscape: LandscapeConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn m(&self) -> usize {
        self.m.unwrap_or(match self.task {
            Task::MountainCar | Task::SyntheticPrior => 5,
            Task::Usv | Task::Uuv => 50,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or(match self.task {
            Task::Uuv => 5.0,
            _ => 0.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimator == EstimatorKind::Sparse && self.m() == 0 {
            return Err(GptdError::InvalidInput("m must be at least 1 for the sparse estimator".into()));
        }
        if self.estimator == EstimatorKind::Lowrank && !(self.nu() > 0.0) {
            return Err(GptdError::InvalidInput("nu must be positive for the low-rank estimator".into()));
        }
        if self.seeds.is_empty() {
            return Err(GptdError::InvalidInput("at least one seed is required".into()));
        }
        self.optimizer.validate()
    }

    pub fn agent_config(&self) -> AgentConfig {
        let t = &self.agent;
        AgentConfig {
            episodes: self.episodes,
            mode: self.mode,
            estimator: self.estimator,
            m: self.m(),
            nu: self.nu(),
            window: t.window,
            refit_every_k_episodes: t.refit_every_k_episodes,
            epsilon: t.epsilon,
            eval_states: t.eval_states,
            max_retries: t.max_retries,
            init_strategy: t.init_strategy,
            prior: t.prior.clone(),
            optimizer: self.optimizer.clone(),
            search: t.search.clone(),
            convergence_tolerance: t.convergence_tolerance,
        }
    }

    pub fn make_env(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self.task {
            Task::MountainCar => Box::new(MountainCar::new(self.mountain_car.clone(), seed)),
            Task::Usv => Box::new(Usv::new(self.usv.clone(), seed)),
            Task::Uuv => Box::new(Uuv::new(self.uuv.clone(), seed)),
            Task::SyntheticPrior => {
                return Err(GptdError::InvalidInput("synthetic_prior has no environment to control".into()))
            }
        })
    }

    pub fn initial_policy(&self, env: &dyn Environment) -> Policy {
        match self.task {
            Task::Usv => Policy::LinearHeading { k_omega: self.policy.k_omega },
            Task::Uuv => Policy::FourierNav { k_r: self.policy.k_r, k_theta: self.policy.k_theta },
            _ => Policy::EpsilonGreedy { actions: env.action_grid(), epsilon: self.agent.epsilon },
        }
    }
}
