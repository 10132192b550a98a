//! Rejection-based low-rank GPTD baseline.
//!
//! Inputs are streamed in time order. An input joins the dictionary when its
//! conditional variance given the current dictionary exceeds the threshold
//! `nu`; otherwise it is represented by its projection coefficients onto the
//! dictionary. With `a_i` the coefficient row of input `i` and `K~` the
//! dictionary kernel matrix, the covariance is approximated as
//! `K_qq ~ A K~ A^T` and the exact GPTD equations are solved in that rank.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, GptdError, Result};
use crate::gptd::{ModelParams, TdOperator, Trajectory};
use crate::kernel::{KernelParams, SeArd};
use crate::linalg::Factor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Retained inputs together with a growing Cholesky factor of their kernel
/// matrix.
#[derive(Debug, Clone)]
pub struct Dictionary {
    kernel: SeArd,
    points: Vec<Vec<f64>>,
    // Row i of the lower-triangular factor, i + 1 entries.
    chol_rows: Vec<Vec<f64>>,
}

impl Dictionary {
    pub fn new(kernel: &KernelParams) -> Self {
        Dictionary { kernel: SeArd::new(kernel), points: Vec::new(), chol_rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    // L^{-1} k_D(x)
    fn half_solve(&self, k: &[f64]) -> Vec<f64> {
        let mut h = Vec::with_capacity(k.len());
        for (i, row) in self.chol_rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&h).map(|(a, b)| a * b).sum();
            h.push((k[i] - s) / row[i]);
        }
        h
    }

    // L^{-T} h
    fn back_solve(&self, h: &[f64]) -> Vec<f64> {
        let m = h.len();
        let mut c = vec![0.0; m];
        for i in (0..m).rev() {
            let s: f64 = ((i + 1)..m).map(|j| self.chol_rows[j][i] * c[j]).sum();
            c[i] = (h[i] - s) / self.chol_rows[i][i];
        }
        c
    }

    fn k_dict(&self, x: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| self.kernel.k(p, x)).collect()
    }

    /// Conditional variance of `x` given the dictionary and its projection
    /// coefficients `K~^{-1} k_D(x)`.
    pub fn novelty(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let h = self.half_solve(&self.k_dict(x));
        let delta = self.kernel.diag() - h.iter().map(|v| v * v).sum::<f64>();
        (delta.max(0.0), self.back_solve(&h))
    }

    /// Admits `x` unconditionally.
    pub fn admit(&mut self, x: &[f64]) -> Result<()> {
        let h = self.half_solve(&self.k_dict(x));
        let delta = self.kernel.diag() - h.iter().map(|v| v * v).sum::<f64>();
        if !(delta > 0.0) {
            return Err(GptdError::IllConditioned("dictionary admission with zero conditional variance".into()));
        }
        let mut row = h;
        row.push(delta.sqrt());
        self.chol_rows.push(row);
        self.points.push(x.to_vec());
        Ok(())
    }

    /// Dense lower-triangular factor of `K~`.
    pub fn factor(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| if j <= i { self.chol_rows[i][j] } else { 0.0 })
    }
}

pub fn novelty(x: &[f64], dict: &Dictionary) -> (f64, Vec<f64>) {
    dict.novelty(x)
}

/// Streams the inputs through the admission rule and returns the dictionary
/// and each input's coefficient row (length = dictionary size at the time).
/// The first input is always admitted.
pub fn sparsify(traj: &Trajectory, kernel: &KernelParams, nu: f64) -> Result<(Dictionary, Vec<Vec<f64>>)> {
    if !(nu > 0.0) {
        return Err(GptdError::InvalidInput(format!("threshold nu = {nu} must be positive")));
    }
    traj.validate()?;
    let mut dict = Dictionary::new(kernel);
    let mut rows = Vec::with_capacity(traj.n_inputs());
    for x in &traj.inputs {
        check_dim(kernel.dim(), x.len())?;
        let (delta, coeffs) = dict.novelty(x);
        if dict.is_empty() || delta > nu {
            dict.admit(x)?;
            let mut row = vec![0.0; dict.len()];
            row[dict.len() - 1] = 1.0;
            rows.push(row);
        } else {
            rows.push(coeffs);
        }
    }
    Ok((dict, rows))
}

/// Share of inputs admitted to the dictionary.
pub fn retention_fraction(traj: &Trajectory, kernel: &KernelParams, nu: f64) -> Result<f64> {
    let (dict, _) = sparsify(traj, kernel, nu)?;
    Ok(dict.len() as f64 / traj.n_inputs().max(1) as f64)
}

/// Low-rank GPTD posterior.
#[derive(Debug, Clone)]
pub struct LowRankPosterior {
    dictionary: Dictionary,
    l: DMatrix<f64>,
    /// `L^{-T} B^{-1} Psi^T r`; the mean is `k_D(x)^T alpha`.
    alpha: DVector<f64>,
    b_factor: Factor,
    params: ModelParams,
    retention: f64,
    log_marginal: f64,
}

/// Fits the baseline; returns the posterior, whose
/// [`LowRankPosterior::retention_fraction`] reports the admitted share.
///
/// With `Phi = H A` and `Psi = Phi L` (`L L^T = K~`), the approximate
/// `K_rr = Psi Psi^T` and all solves go through `B = sigma^2 I + Psi^T Psi`.
pub fn fit_lowrank(traj: &Trajectory, params: &ModelParams, nu: f64) -> Result<LowRankPosterior> {
    params.validate()?;
    if traj.is_empty() {
        return Err(GptdError::EmptyTrajectory);
    }
    let (dictionary, rows) = sparsify(traj, &params.kernel, nu)?;
    let op = TdOperator::new(traj, params.discount, params.terminal_value_zero)?;
    let m = dictionary.len();
    let n = op.n_rows();
    let gamma = op.gamma();

    let mut phi = DMatrix::zeros(n, m);
    for (t, &(a, b)) in op.rows().iter().enumerate() {
        for (j, v) in rows[a].iter().enumerate() {
            phi[(t, j)] += v;
        }
        if let Some(b) = b {
            for (j, v) in rows[b].iter().enumerate() {
                phi[(t, j)] -= gamma * v;
            }
        }
    }
    let l = dictionary.factor();
    let psi = &phi * &l;
    let s2 = params.noise_variance;
    let mut b = psi.tr_mul(&psi);
    for i in 0..m {
        b[(i, i)] += s2;
    }
    let b_factor = Factor::new(&b, "sigma^2 I + Psi^T Psi")?;
    let r = DVector::from_column_slice(&traj.rewards);
    let psi_r = psi.tr_mul(&r);
    let b_inv_psi_r = b_factor.solve_vec(&psi_r);
    let alpha = l.tr_solve_lower_triangular(&b_inv_psi_r).expect("dictionary factor is nonsingular");

    // log N(r | 0, Psi Psi^T + sigma^2 I)
    let quad = (r.norm_squared() - psi_r.dot(&b_inv_psi_r)) / s2;
    let log_det = (n as f64 - m as f64) * s2.ln() + b_factor.log_det();
    let log_marginal = -0.5 * (quad + log_det + n as f64 * LN_2PI);

    Ok(LowRankPosterior {
        retention: m as f64 / traj.n_inputs() as f64,
        dictionary,
        l,
        alpha,
        b_factor,
        params: params.clone(),
        log_marginal,
    })
}

impl LowRankPosterior {
    pub fn retention_fraction(&self) -> f64 {
        self.retention
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Evidence under the low-rank covariance; reported, never optimized.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.params.dim(), x.len())?;
        Ok(self.dictionary.k_dict(x).iter().zip(self.alpha.iter()).map(|(k, a)| k * a).sum())
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.params.dim(), x.len())?;
        let k = DVector::from_vec(self.dictionary.k_dict(x));
        let mean = k.dot(&self.alpha);
        let u = self.l.solve_lower_triangular(&k).expect("dictionary factor is nonsingular");
        let var = self.dictionary.kernel.diag() - u.norm_squared()
            + self.params.noise_variance * u.dot(&self.b_factor.solve_vec(&u));
        Ok((mean, var.max(0.0)))
    }
}
