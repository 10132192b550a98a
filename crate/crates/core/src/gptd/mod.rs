//! Temporal-difference GP data model: trajectories, the differencing operator
//! `H`, and the exact posterior.

mod exact;
mod operator;
mod trajectory;

pub use exact::{exact_log_marginal, exact_log_marginal_grad, fit_exact, ExactPosterior};
pub use operator::{build_h, TdOperator};
pub use trajectory::Trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{GptdError, Result};
use crate::kernel::KernelParams;

/// Kernel hyperparameters, observation noise and discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kernel: KernelParams,
    /// `sigma^2` of the i.i.d. temporal-difference residual.
    pub noise_variance: f64,
    pub discount: f64,
    /// Drop the `-gamma` coupling on the final transition of terminal episodes,
    /// pinning the terminal value to zero.
    #[serde(default)]
    pub terminal_value_zero: bool,
}

impl ModelParams {
    pub fn new(kernel: KernelParams, noise_variance: f64, discount: f64) -> Result<Self> {
        let p = ModelParams { kernel, noise_variance, discount, terminal_value_zero: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(GptdError::InvalidInput(format!("noise variance {} must be positive", self.noise_variance)));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(GptdError::InvalidInput(format!("discount {} outside [0, 1]", self.discount)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Number of optimizable log-hyperparameters (kernel plus noise).
    pub fn n_hyper(&self) -> usize {
        self.kernel.n_params() + 1
    }

    /// `[log sf, log len_1, .., log len_D, log sigma^2]`.
    pub fn hyper_vec(&self) -> Vec<f64> {
        let mut v = self.kernel.to_vec();
        v.push(self.noise_variance.ln());
        v
    }

    pub fn with_hyper_vec(&self, v: &[f64]) -> ModelParams {
        let nk = self.kernel.n_params();
        ModelParams {
            kernel: KernelParams::from_slice(&v[..nk]),
            noise_variance: v[nk].exp(),
            discount: self.discount,
            terminal_value_zero: self.terminal_value_zero,
        }
    }
}
