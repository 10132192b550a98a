use nalgebra::DVector;

use super::{FitWorkspace, PseudoInputSet};
use crate::error::{GptdError, Result};
use crate::gptd::{ModelParams, Trajectory};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl FitWorkspace {
    /// `log N(r | 0, D + K_ru K_uu^{-1} K_ur)` via the determinant and
    /// inversion lemmas.
    pub fn log_marginal(&self) -> Result<f64> {
        let n = self.n_transitions() as f64;
        let quad = self.r.dot(&self.r.component_div(&self.d)) - self.vdr.dot(&self.a_inv_vdr());
        let log_det = self.d.iter().map(|v| v.ln()).sum::<f64>() + self.a_factor.log_det();
        let value = -0.5 * (quad + log_det + n * LN_2PI);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(GptdError::IllConditioned("sparse log marginal is not finite".into()))
        }
    }

    /// Gradient of [`FitWorkspace::log_marginal`] over
    /// `[log sf, log len_1.., log sigma^2, z_11, z_12, .., z_MD]`.
    ///
    /// Writing `K_r = D + P` with `P = K_ru K_uu^{-1} K_ur`, `W = b b^T - K_r^{-1}`
    /// for `b = K_r^{-1} r`, and `B = K_uu^{-1} K_ur`, every partial reduces to
    ///
    /// ```text
    /// dL = 1/2 sum_t c_t W_tt dK_rr,tt + 1/2 dsigma^2 tr W
    ///      + <W~ B^T, dK_ru> - 1/2 <B W~ B^T, dK_uu>
    /// ```
    ///
    /// with `W~ = W - diag(c W_tt)` and `c_t` zero where the `Q` clamp binds.
    /// Only `diag(W)` and `N x M` products are formed.
    pub fn log_marginal_grad(&self, params: &ModelParams, traj: &Trajectory, z: &PseudoInputSet) -> Vec<f64> {
        let n = self.n_transitions();
        let m = self.n_pseudo();
        let dim = params.dim();
        let se = &self.kernel;
        let gamma = self.op.gamma();

        let a_vdr = self.a_inv_vdr();
        // b = D^{-1} r - D^{-1} V^T A^{-1} V D^{-1} r
        let beta = (&self.r - self.v.tr_mul(&a_vdr)).component_div(&self.d);
        let b_mat = self.k_uu_factor.solve_upper(&self.v);
        // diag(K_r^{-1})
        let s = self.a_factor.solve_lower(&self.v);
        let w_diag = DVector::from_fn(n, |t, _| {
            let dt = self.d[t];
            let kinv = 1.0 / dt - s.column(t).norm_squared() / (dt * dt);
            beta[t] * beta[t] - kinv
        });

        // K_r^{-1} B^T = D^{-1} (B^T - V^T A^{-1} V D^{-1} B^T)
        let mut dinv_bt = b_mat.transpose();
        for t in 0..n {
            let sc = self.d[t].recip();
            dinv_bt.row_mut(t).scale_mut(sc);
        }
        let vdb = &self.v * &dinv_bt;
        let c = self.a_factor.solve(&vdb);
        let mut krinv_bt = b_mat.transpose() - self.v.tr_mul(&c);
        for t in 0..n {
            let sc = self.d[t].recip();
            krinv_bt.row_mut(t).scale_mut(sc);
        }

        // G_ru = W~ B^T
        let b_beta = &b_mat * &beta;
        let mut g_ru = &beta * b_beta.transpose() - krinv_bt;
        for t in 0..n {
            if self.q_active[t] {
                let w = w_diag[t];
                for j in 0..m {
                    g_ru[(t, j)] -= w * b_mat[(j, t)];
                }
            }
        }
        let mut g_uu = &b_mat * &g_ru;
        crate::linalg::symmetrize(&mut g_uu);
        let g_qu = self.op.apply_transpose(&g_ru);

        let xs = &traj.inputs;
        let zs = z.locations();
        let mut grad = vec![0.0; dim + 2 + m * dim];

        // Diagonal K_rr terms.
        for (t, &(a, b)) in self.op.rows().iter().enumerate() {
            if !self.q_active[t] {
                continue;
            }
            let half_w = 0.5 * w_diag[t];
            grad[0] += half_w * self.k_rr_diag[t];
            if let Some(b) = b {
                let kab = se.k(&xs[a], &xs[b]);
                for d in 0..dim {
                    grad[1 + d] -= half_w * 2.0 * gamma * se.dk_dloglen(&xs[a], &xs[b], kab, d);
                }
            }
        }
        grad[dim + 1] = 0.5 * params.noise_variance * w_diag.sum();

        // K_qu terms.
        let zoff = dim + 2;
        for i in 0..xs.len() {
            for j in 0..m {
                let g = g_qu[(i, j)];
                if g == 0.0 {
                    continue;
                }
                let kij = self.k_qu[(i, j)];
                grad[0] += g * kij;
                for d in 0..dim {
                    grad[1 + d] += g * se.dk_dloglen(&xs[i], &zs[j], kij, d);
                    grad[zoff + j * dim + d] += g * se.dk_dsecond(&xs[i], &zs[j], kij, d);
                }
            }
        }

        // K_uu terms, jitter excluded.
        for i in 0..m {
            grad[0] -= 0.5 * g_uu[(i, i)] * se.diag();
            for j in 0..i {
                let kij = se.k(&zs[i], &zs[j]);
                let g = g_uu[(i, j)];
                grad[0] -= g * kij;
                for d in 0..dim {
                    grad[1 + d] -= g * se.dk_dloglen(&zs[i], &zs[j], kij, d);
                    // d k(z_i, z_j) / d z_id = -dk_dsecond(z_i, z_j)
                    let dzi = -se.dk_dsecond(&zs[i], &zs[j], kij, d);
                    grad[zoff + i * dim + d] -= g * dzi;
                    grad[zoff + j * dim + d] += g * dzi;
                }
            }
        }
        grad
    }
}

pub fn log_marginal(traj: &Trajectory, params: &ModelParams, z: &PseudoInputSet) -> Result<f64> {
    FitWorkspace::new(traj, params, z)?.log_marginal()
}

/// Log marginal and its analytic gradient; see
/// [`FitWorkspace::log_marginal_grad`] for the layout.
pub fn log_marginal_grad(traj: &Trajectory, params: &ModelParams, z: &PseudoInputSet) -> Result<(f64, Vec<f64>)> {
    let ws = FitWorkspace::new(traj, params, z)?;
    let value = ws.log_marginal()?;
    let grad = ws.log_marginal_grad(params, traj, z);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(GptdError::IllConditioned("sparse log marginal gradient is not finite".into()));
    }
    Ok((value, grad))
}

/// Length of the gradient vector for a given model and pseudo-input set.
pub fn gradient_len(params: &ModelParams, z: &PseudoInputSet) -> usize {
    params.n_hyper() + z.len() * params.dim()
}
