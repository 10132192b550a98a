use nalgebra::{DMatrix, DVector};

use super::PseudoInputSet;
use crate::error::{check_dim, GptdError, Result};
use crate::gptd::{ModelParams, TdOperator, Trajectory};
use crate::kernel::SeArd;
use crate::linalg::Factor;

/// Intermediate quantities shared by the sparse fit, log marginal and gradient.
///
/// With `L_uu L_uu^T = K_uu` and `D = Q + sigma^2 I`, solves go through
/// `V = L_uu^{-1} K_ur` and the well-conditioned `A = I + V D^{-1} V^T`, so
/// that `M = K_uu + K_ur D^{-1} K_ru = L_uu A L_uu^T`. Nothing here is larger
/// than `N x M`.
#[derive(Debug, Clone)]
pub struct FitWorkspace {
    pub(crate) kernel: SeArd,
    pub(crate) op: TdOperator,
    /// `K_uu` including any jitter the factorization needed.
    pub(crate) k_uu: DMatrix<f64>,
    pub(crate) k_uu_factor: Factor,
    /// `K_qu`, inputs by pseudo inputs.
    pub(crate) k_qu: DMatrix<f64>,
    /// `K_ru = H K_qu`.
    pub(crate) k_ru: DMatrix<f64>,
    /// `V = L_uu^{-1} K_ur`, `M x N`.
    pub(crate) v: DMatrix<f64>,
    /// `diag(K_rr)`.
    pub(crate) k_rr_diag: DVector<f64>,
    /// `diag(K_rr - K_ru K_uu^{-1} K_ur)` clamped at zero.
    pub(crate) q_diag: DVector<f64>,
    /// Rows where the clamp did not bind.
    pub(crate) q_active: Vec<bool>,
    /// `Q + sigma^2`.
    pub(crate) d: DVector<f64>,
    pub(crate) a_factor: Factor,
    /// `V D^{-1} r`.
    pub(crate) vdr: DVector<f64>,
    pub(crate) r: DVector<f64>,
}

impl FitWorkspace {
    pub fn new(traj: &Trajectory, params: &ModelParams, z: &PseudoInputSet) -> Result<Self> {
        params.validate()?;
        if traj.is_empty() {
            return Err(GptdError::EmptyTrajectory);
        }
        check_dim(params.dim(), traj.dim().unwrap_or(0))?;
        check_dim(params.dim(), z.dim())?;

        let kernel = SeArd::new(&params.kernel);
        let op = TdOperator::new(traj, params.discount, params.terminal_value_zero)?;
        let n = op.n_rows();
        let m = z.len();

        let mut k_uu = kernel.gram(z.locations());
        let k_uu_factor = Factor::new(&k_uu, "K_uu")?;
        for i in 0..m {
            k_uu[(i, i)] += k_uu_factor.jitter();
        }
        let k_qu = kernel.matrix(&traj.inputs, z.locations());
        let k_ru = op.apply(&k_qu);
        let v = k_uu_factor.solve_lower(&k_ru.transpose());

        let gamma = op.gamma();
        let sf = kernel.diag();
        let mut k_rr_diag = DVector::zeros(n);
        let mut q_diag = DVector::zeros(n);
        let mut q_active = vec![true; n];
        let mut d = DVector::zeros(n);
        for (t, &(a, b)) in op.rows().iter().enumerate() {
            let krr = match b {
                Some(b) => sf * (1.0 + gamma * gamma) - 2.0 * gamma * kernel.k(&traj.inputs[a], &traj.inputs[b]),
                None => sf,
            };
            k_rr_diag[t] = krr;
            let q = krr - v.column(t).norm_squared();
            if q < 0.0 {
                q_active[t] = false;
            }
            q_diag[t] = q.max(0.0);
            d[t] = q_diag[t] + params.noise_variance;
        }

        // A = I + (V D^{-1/2})(V D^{-1/2})^T
        let mut vs = v.clone();
        for t in 0..n {
            let s = d[t].sqrt().recip();
            vs.column_mut(t).scale_mut(s);
        }
        let mut a = DMatrix::identity(m, m);
        a.gemm(1.0, &vs, &vs.transpose(), 1.0);
        let a_factor = Factor::new(&a, "I + V D^-1 V^T")?;

        let r = DVector::from_column_slice(&traj.rewards);
        let dr = r.component_div(&d);
        let vdr = &v * &dr;

        Ok(FitWorkspace { kernel, op, k_uu, k_uu_factor, k_qu, k_ru, v, k_rr_diag, q_diag, q_active, d, a_factor, vdr, r })
    }

    pub fn n_transitions(&self) -> usize {
        self.op.n_rows()
    }

    pub fn n_pseudo(&self) -> usize {
        self.k_uu.nrows()
    }

    pub fn k_uu(&self) -> &DMatrix<f64> {
        &self.k_uu
    }

    pub fn k_qu(&self) -> &DMatrix<f64> {
        &self.k_qu
    }

    pub fn k_ru(&self) -> &DMatrix<f64> {
        &self.k_ru
    }

    pub fn q_diag(&self) -> &DVector<f64> {
        &self.q_diag
    }

    /// `M = K_uu + K_ur (Q + sigma^2 I)^{-1} K_ru`.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let mut scaled = self.k_ru.clone();
        for t in 0..scaled.nrows() {
            let s = self.d[t].recip();
            scaled.row_mut(t).scale_mut(s);
        }
        let mut m = self.k_uu.clone();
        m.gemm(1.0, &self.k_ru.transpose(), &scaled, 1.0);
        m
    }

    /// `A^{-1} V D^{-1} r`.
    pub(crate) fn a_inv_vdr(&self) -> DVector<f64> {
        self.a_factor.solve_vec(&self.vdr)
    }

    /// `alpha = M^{-1} K_ur D^{-1} r = L_uu^{-T} A^{-1} V D^{-1} r`.
    pub fn alpha(&self) -> DVector<f64> {
        self.k_uu_factor.solve_upper_vec(&self.a_inv_vdr())
    }

    /// `Lambda = K_uu^{-1} - M^{-1} = L_uu^{-T} (I - A^{-1}) L_uu^{-1}`.
    pub fn lambda(&self) -> DMatrix<f64> {
        let m = self.n_pseudo();
        let mut inner = self.a_factor.inverse();
        inner.neg_mut();
        for i in 0..m {
            inner[(i, i)] += 1.0;
        }
        let left = self.k_uu_factor.solve_upper(&inner);
        let mut lambda = self.k_uu_factor.solve_upper(&left.transpose());
        crate::linalg::symmetrize(&mut lambda);
        lambda
    }

    /// `L = K_uu M^{-1} K_uu = L_uu A^{-1} L_uu^T` and the posterior mean of `u`.
    pub fn pseudo_posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let l_uu = self.k_uu_factor.l();
        let mean = l_uu * self.a_inv_vdr();
        let mut cov = l_uu * self.a_factor.solve(&l_uu.transpose());
        crate::linalg::symmetrize(&mut cov);
        (mean, cov)
    }
}
