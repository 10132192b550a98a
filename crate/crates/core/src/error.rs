use thiserror::Error;

use crate::gptd::ModelParams;
use crate::spgp::PseudoInputSet;

pub type Result<T> = std::result::Result<T, GptdError>;

#[derive(Debug, Error)]
pub enum GptdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory contains no transitions")]
    EmptyTrajectory,

    #[error("ill-conditioned model: {0}")]
    IllConditioned(String),

    #[error("optimization failed on all {restarts} restarts")]
    OptimizationFailed {
        restarts: usize,
        /// Best feasible point seen before every restart broke down, if any.
        best: Option<Box<(ModelParams, PseudoInputSet)>>,
    },

    #[error("value model has not been fitted")]
    Unfitted,
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GptdError::DimensionMismatch { expected, got })
    }
}
