//! Gaussian-process temporal-difference value estimation.
//!
//! * [`gptd`]: trajectories, the TD operator and the exact GP-SARSA posterior.
//! * [`spgp`]: the sparse pseudo-input posterior, its evidence and gradient.
//! * [`lowrank`]: the rejection-based low-rank baseline.
//! * [`hyperopt`]: evidence maximization over hyperparameters and pseudo inputs.
//! * [`envs`]: Mountain Car and the surface / underwater vehicle tasks.
//! * [`agent`]: policies, rollouts and policy iteration.
//! * [`experiments`]: the approximation, retention, learning and timing studies.

pub mod agent;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod gptd;
pub mod hyperopt;
pub mod kernel;
pub mod linalg;
pub mod lowrank;
pub mod spgp;

pub use error::{GptdError, Result};
pub use gptd::{fit_exact, ExactPosterior, ModelParams, Trajectory};
pub use kernel::KernelParams;
pub use spgp::{fit_sparse, PseudoInputSet, SparsePosterior};
pub use lowrank::{fit_lowrank, LowRankPosterior};
pub use hyperopt::{optimize, OptimConfig};
