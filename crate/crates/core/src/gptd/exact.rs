use nalgebra::{DMatrix, DVector};

use super::{ModelParams, TdOperator, Trajectory};
use crate::error::{check_dim, GptdError, Result};
use crate::kernel::SeArd;
use crate::linalg::Factor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Exact GP-SARSA / GP-TD posterior.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `(K_rr + sigma^2 I)^{-1} r`.
    weights: DVector<f64>,
    /// `H^T weights`, so the mean is a single dot product with `k_*`.
    input_weights: DVector<f64>,
    factor: Factor,
    inputs: Vec<Vec<f64>>,
    op: TdOperator,
    params: ModelParams,
    kernel: SeArd,
    log_marginal: f64,
}

fn kernel_blocks(traj: &Trajectory, params: &ModelParams) -> Result<(TdOperator, DMatrix<f64>, DMatrix<f64>)> {
    params.validate()?;
    if traj.is_empty() {
        return Err(GptdError::EmptyTrajectory);
    }
    check_dim(params.dim(), traj.dim().unwrap_or(0))?;
    let op = TdOperator::new(traj, params.discount, params.terminal_value_zero)?;
    let kqq = SeArd::new(&params.kernel).gram(&traj.inputs);
    let hk = op.apply(&kqq);
    let krr = op.apply(&hk.transpose());
    Ok((op, kqq, krr))
}

pub fn fit_exact(traj: &Trajectory, params: &ModelParams) -> Result<ExactPosterior> {
    let (op, _, mut krr) = kernel_blocks(traj, params)?;
    for i in 0..krr.nrows() {
        krr[(i, i)] += params.noise_variance;
    }
    let factor = Factor::new(&krr, "K_rr + sigma^2 I")?;
    let r = DVector::from_column_slice(&traj.rewards);
    let weights = factor.solve_vec(&r);
    let n = r.len() as f64;
    let log_marginal = -0.5 * (r.dot(&weights) + factor.log_det() + n * LN_2PI);
    if !log_marginal.is_finite() {
        return Err(GptdError::IllConditioned("exact log marginal is not finite".into()));
    }
    let input_weights = op.apply_transpose_vec(&weights);
    Ok(ExactPosterior {
        weights,
        input_weights,
        factor,
        inputs: traj.inputs.clone(),
        op,
        params: params.clone(),
        kernel: SeArd::new(&params.kernel),
        log_marginal,
    })
}

impl ExactPosterior {
    /// Posterior with no observations: the GP prior.
    pub fn prior(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(ExactPosterior {
            weights: DVector::zeros(0),
            input_weights: DVector::zeros(0),
            factor: Factor::new(&DMatrix::zeros(0, 0), "empty")?,
            inputs: Vec::new(),
            op: TdOperator::empty(params.discount),
            params: params.clone(),
            kernel: SeArd::new(&params.kernel),
            log_marginal: 0.0,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    fn k_star(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.k(xi, x)))
    }

    /// Posterior mean only, `O(N)`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.params.dim(), x.len())?;
        Ok(self.inputs.iter().zip(self.input_weights.iter()).map(|(xi, w)| w * self.kernel.k(xi, x)).sum())
    }

    /// Posterior `(mean, variance)`; the variance is clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.params.dim(), x.len())?;
        if self.inputs.is_empty() {
            return Ok((0.0, self.kernel.diag()));
        }
        let k_r = self.op.apply_vec(&self.k_star(x));
        let mean = k_r.dot(&self.weights);
        let v = self.factor.solve_lower_vec(&k_r);
        let var = self.kernel.diag() - v.norm_squared();
        Ok((mean, var.max(0.0)))
    }

    /// Variance before clamping; exposed for diagnostics.
    pub fn raw_variance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.params.dim(), x.len())?;
        if self.inputs.is_empty() {
            return Ok(self.kernel.diag());
        }
        let k_r = self.op.apply_vec(&self.k_star(x));
        Ok(self.kernel.diag() - self.factor.solve_lower_vec(&k_r).norm_squared())
    }
}

/// `log N(r | 0, K_rr + sigma^2 I)`, dense `O(N^3)`.
pub fn exact_log_marginal(traj: &Trajectory, params: &ModelParams) -> Result<f64> {
    Ok(fit_exact(traj, params)?.log_marginal)
}

/// Exact log marginal and its gradient over `[log sf, log len_1.., log sigma^2]`.
pub fn exact_log_marginal_grad(traj: &Trajectory, params: &ModelParams) -> Result<(f64, Vec<f64>)> {
    let post = fit_exact(traj, params)?;
    let op = &post.op;
    let n = op.n_rows();
    // W = w w^T - (K_rr + sigma^2 I)^{-1}; dL = 1/2 <H^T W H, dK_qq> + 1/2 sigma^2 tr(W).
    let mut w = post.factor.inverse();
    w.neg_mut();
    w.ger(1.0, &post.weights, &post.weights, 1.0);
    let trace_w = w.trace();
    let hw = op.apply_transpose(&w);
    let g = op.apply_transpose(&hw.transpose());

    let se = &post.kernel;
    let dim = params.dim();
    let mut grad = vec![0.0; dim + 2];
    let xs = &post.inputs;
    for i in 0..xs.len() {
        grad[0] += 0.5 * g[(i, i)] * se.diag();
        for j in 0..i {
            let kij = se.k(&xs[i], &xs[j]);
            let gij = g[(i, j)] + g[(j, i)];
            grad[0] += 0.5 * gij * kij;
            for d in 0..dim {
                grad[1 + d] += 0.5 * gij * se.dk_dloglen(&xs[i], &xs[j], kij, d);
            }
        }
    }
    grad[dim + 1] = 0.5 * params.noise_variance * trace_w;
    debug_assert_eq!(w.nrows(), n);
    Ok((post.log_marginal, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;

    fn params(sf: f64, len: f64, dim: usize, noise: f64, gamma: f64) -> ModelParams {
        ModelParams::new(KernelParams::isotropic(sf, len, dim).unwrap(), noise, gamma).unwrap()
    }

    #[test]
    fn constant_kernel_hand_example() {
        let t = Trajectory::single_episode(vec![vec![0.0], vec![1.0]], vec![1.0]).unwrap();
        let post = fit_exact(&t, &params(1.0, 1e6, 1, 1.0, 0.0)).unwrap();
        assert!((post.weights()[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn infinite_noise_limit() {
        let t = Trajectory::single_episode(vec![vec![0.0], vec![0.5], vec![1.3]], vec![1.0, -2.0]).unwrap();
        let post = fit_exact(&t, &params(1.0, 0.7, 1, 1e12, 0.9)).unwrap();
        let rnorm = 5f64.sqrt();
        assert!(post.weights().iter().all(|w| w.abs() < 1e-9 * rnorm));
    }

    #[test]
    fn prior_and_far_field() {
        let p = params(1.7, 0.5, 2, 0.1, 0.9);
        assert_eq!(ExactPosterior::prior(&p).unwrap().predict(&[3.0, 1.0]).unwrap(), (0.0, 1.7));

        let t = Trajectory::single_episode(vec![vec![0.0, 0.0], vec![0.1, 0.2], vec![0.3, 0.1]], vec![1.0, 2.0])
            .unwrap();
        let post = fit_exact(&t, &p).unwrap();
        let (m, v) = post.predict(&[40.0, -40.0]).unwrap();
        assert!(m.abs() < 1e-6 && (v - 1.7).abs() < 1e-6);
        assert!((post.predict_mean(&[0.2, 0.1]).unwrap() - post.predict(&[0.2, 0.1]).unwrap().0).abs() < 1e-12);
        assert!(post.predict(&[0.0]).is_err());
    }

    #[test]
    fn factor_reproduces_matrix() {
        let t = Trajectory::single_episode((0..6).map(|i| vec![i as f64 * 0.4]).collect(), vec![0.5; 5]).unwrap();
        let p = params(1.0, 0.8, 1, 0.05, 0.95);
        let post = fit_exact(&t, &p).unwrap();
        let (_, _, mut krr) = kernel_blocks(&t, &p).unwrap();
        for i in 0..5 {
            krr[(i, i)] += 0.05;
        }
        assert!(crate::linalg::rel_frobenius(&krr, &post.factor().reconstruct()) < 1e-8);
    }

    #[test]
    fn empty_trajectory_errors() {
        let p = params(1.0, 1.0, 1, 0.1, 0.9);
        assert!(matches!(fit_exact(&Trajectory::default(), &p), Err(GptdError::EmptyTrajectory)));
    }
}
