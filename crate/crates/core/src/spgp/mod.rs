//! Sparse pseudo-input GPTD (SPGP-SARSA / SPGP-TD).
//!
//! `M` pseudo inputs `Z` carry latent pseudo values `u ~ N(0, K_uu)`. Rewards
//! are conditionally independent given `u`:
//!
//! ```text
//! r | u ~ N(K_ru K_uu^{-1} u, Q + sigma^2 I),   Q = diag(K_rr - K_ru K_uu^{-1} K_ur)
//! ```
//!
//! and marginalizing `u` yields a posterior summarized by an `M`-vector
//! `alpha` and an `M x M` matrix `Lambda`:
//!
//! ```text
//! mean(x) = k_u(x)^T alpha
//! var(x)  = k(x, x) - k_u(x)^T Lambda k_u(x)
//! ```
//!
//! Fitting and evidence evaluation cost `O(N M^2)`; no `N x N` matrix is ever
//! allocated.

mod marginal;
mod workspace;

pub use marginal::{gradient_len, log_marginal, log_marginal_grad};
pub use workspace::FitWorkspace;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GptdError, Result};
use crate::gptd::{ModelParams, Trajectory};
use crate::kernel::SeArd;
use crate::linalg::Factor;

/// Minimum separation between two pseudo inputs.
pub const MIN_SEPARATION: f64 = 1e-10;

/// Support locations of the pseudo values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PseudoInputSet {
    locations: Vec<Vec<f64>>,
}

impl PseudoInputSet {
    pub fn new(locations: Vec<Vec<f64>>) -> Result<Self> {
        if locations.is_empty() {
            return Err(GptdError::InvalidInput("pseudo-input set needs at least one location".into()));
        }
        let dim = locations[0].len();
        if dim == 0 {
            return Err(GptdError::InvalidInput("pseudo inputs must have at least one dimension".into()));
        }
        for (i, z) in locations.iter().enumerate() {
            check_dim(dim, z.len())?;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(GptdError::InvalidInput(format!("pseudo input {i} is not finite")));
            }
            for (j, w) in locations[..i].iter().enumerate() {
                let dist = z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dist < MIN_SEPARATION {
                    return Err(GptdError::InvalidInput(format!("pseudo inputs {j} and {i} collide")));
                }
            }
        }
        Ok(PseudoInputSet { locations })
    }

    pub fn from_flat(flat: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || flat.len() % dim != 0 {
            return Err(GptdError::InvalidInput(format!("{} coordinates do not split into dimension {dim}", flat.len())));
        }
        Self::new(flat.chunks(dim).map(<[f64]>::to_vec).collect())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.locations.iter().flatten().copied().collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PseudoInputSet {
    type Error = GptdError;

    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PseudoInputSet> for Vec<Vec<f64>> {
    fn from(z: PseudoInputSet) -> Self {
        z.locations
    }
}

/// Fitted sparse value posterior. Serializes to the model-file schema
/// `{alpha, lambda, pseudo_inputs, params}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "SparseModelFile", try_from = "SparseModelFile")]
pub struct SparsePosterior {
    alpha: DVector<f64>,
    lambda: DMatrix<f64>,
    pseudo_inputs: PseudoInputSet,
    params: ModelParams,
    kernel: SeArd,
}

#[derive(Serialize, Deserialize)]
struct SparseModelFile {
    alpha: Vec<f64>,
    lambda: Vec<Vec<f64>>,
    pseudo_inputs: PseudoInputSet,
    params: ModelParams,
}

impl From<SparsePosterior> for SparseModelFile {
    fn from(p: SparsePosterior) -> Self {
        SparseModelFile {
            alpha: p.alpha.iter().copied().collect(),
            lambda: p.lambda.row_iter().map(|r| r.iter().copied().collect()).collect(),
            pseudo_inputs: p.pseudo_inputs,
            params: p.params,
        }
    }
}

impl TryFrom<SparseModelFile> for SparsePosterior {
    type Error = GptdError;

    fn try_from(f: SparseModelFile) -> Result<Self> {
        let m = f.pseudo_inputs.len();
        check_dim(m, f.alpha.len())?;
        check_dim(m, f.lambda.len())?;
        for row in &f.lambda {
            check_dim(m, row.len())?;
        }
        f.params.validate()?;
        check_dim(f.params.dim(), f.pseudo_inputs.dim())?;
        Ok(SparsePosterior {
            alpha: DVector::from_vec(f.alpha),
            lambda: DMatrix::from_fn(m, m, |i, j| f.lambda[i][j]),
            kernel: SeArd::new(&f.params.kernel),
            pseudo_inputs: f.pseudo_inputs,
            params: f.params,
        })
    }
}

impl SparsePosterior {
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn pseudo_inputs(&self) -> &PseudoInputSet {
        &self.pseudo_inputs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn k_u(&self, x: &[f64]) -> DVector<f64> {
        let z = self.pseudo_inputs.locations();
        DVector::from_iterator(z.len(), z.iter().map(|zi| self.kernel.k(zi, x)))
    }

    /// Posterior mean, `O(M)` per query.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.params.dim(), x.len())?;
        Ok(self.k_u(x).dot(&self.alpha))
    }

    /// Posterior `(mean, variance)` with the variance clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (mean, var) = self.predict_raw(x)?;
        Ok((mean, var.max(0.0)))
    }

    /// Mean and unclamped variance.
    pub fn predict_raw(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.params.dim(), x.len())?;
        let ku = self.k_u(x);
        let mean = ku.dot(&self.alpha);
        let var = self.kernel.diag() - (&self.lambda * &ku).dot(&ku);
        Ok((mean, var))
    }
}

pub fn fit_sparse(traj: &Trajectory, params: &ModelParams, z: &PseudoInputSet) -> Result<SparsePosterior> {
    let ws = FitWorkspace::new(traj, params, z)?;
    Ok(SparsePosterior {
        alpha: ws.alpha(),
        lambda: ws.lambda(),
        pseudo_inputs: z.clone(),
        params: params.clone(),
        kernel: SeArd::new(&params.kernel),
    })
}

pub fn predict_sparse(post: &SparsePosterior, x: &[f64]) -> Result<(f64, f64)> {
    post.predict(x)
}

/// Posterior over the pseudo values, `N(L K_uu^{-1} K_ur (Q + sigma^2 I)^{-1} r, L)`.
pub fn pseudo_posterior(traj: &Trajectory, params: &ModelParams, z: &PseudoInputSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    Ok(FitWorkspace::new(traj, params, z)?.pseudo_posterior())
}

/// Conditional of the latent value at `x` given the pseudo values: weights
/// `K_uu^{-1} k_u` on `u` and variance `k(x, x) - k_u^T K_uu^{-1} k_u`.
pub fn latent_likelihood_moments(x: &[f64], z: &PseudoInputSet, params: &ModelParams) -> Result<(DVector<f64>, f64)> {
    check_dim(params.dim(), x.len())?;
    check_dim(params.dim(), z.dim())?;
    let se = SeArd::new(&params.kernel);
    let factor = Factor::new(&se.gram(z.locations()), "K_uu")?;
    let ku = DVector::from_iterator(z.len(), z.locations().iter().map(|zi| se.k(zi, x)));
    let half = factor.solve_lower_vec(&ku);
    let weights = factor.solve_upper_vec(&half);
    Ok((weights, (se.diag() - half.norm_squared()).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;

    fn params(sf: f64, len: f64, dim: usize, noise: f64, gamma: f64) -> ModelParams {
        ModelParams::new(KernelParams::isotropic(sf, len, dim).unwrap(), noise, gamma).unwrap()
    }

    #[test]
    fn pseudo_set_validation() {
        assert!(PseudoInputSet::new(vec![]).is_err());
        assert!(PseudoInputSet::new(vec![vec![0.0], vec![0.0]]).is_err());
        assert!(PseudoInputSet::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        let z = PseudoInputSet::from_flat(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(z.to_flat(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn interpolates_at_support_and_decays_far_away() {
        let p = params(1.4, 0.6, 2, 0.1, 0.9);
        let z = PseudoInputSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 1.0]]).unwrap();
        let (w, var) = latent_likelihood_moments(&[1.0, 0.5], &z, &p).unwrap();
        assert!(var <= 1e-8);
        assert!((w[1] - 1.0).abs() < 1e-8 && w[0].abs() < 1e-8);
        let (_, var) = latent_likelihood_moments(&[50.0, 50.0], &z, &p).unwrap();
        assert!((var - 1.4).abs() < 1e-10);
    }

    #[test]
    fn hand_example_single_pseudo_input() {
        let t = Trajectory::single_episode(vec![vec![0.0], vec![1.0]], vec![1.0]).unwrap();
        let p = params(1.0, 1e6, 1, 1.0, 0.0);
        let post = fit_sparse(&t, &p, &PseudoInputSet::new(vec![vec![0.0]]).unwrap()).unwrap();
        assert!((post.predict_mean(&[0.0]).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn uninformative_data_limits() {
        let t = Trajectory::single_episode(vec![vec![0.0], vec![0.4], vec![0.9]], vec![1.0, 2.0]).unwrap();
        let p = params(1.0, 0.5, 1, 1e12, 0.9);
        let z = PseudoInputSet::new(vec![vec![0.1], vec![0.7]]).unwrap();
        let post = fit_sparse(&t, &p, &z).unwrap();
        assert!(post.predict_mean(&[0.3]).unwrap().abs() < 1e-9);
        let (mean, l) = pseudo_posterior(&t, &p, &z).unwrap();
        assert!(mean.amax() < 1e-9);
        let kuu = crate::kernel::cov_matrix(z.locations(), z.locations(), &p.kernel).unwrap();
        assert!((l - kuu).amax() < 1e-9);

        let zero = Trajectory::single_episode(t.inputs.clone(), vec![0.0, 0.0]).unwrap();
        let (mean, _) = pseudo_posterior(&zero, &params(1.0, 0.5, 1, 0.1, 0.9), &z).unwrap();
        assert_eq!(mean.amax(), 0.0);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let t = Trajectory::single_episode(vec![vec![0.0], vec![0.4], vec![0.9]], vec![1.0, 2.0]).unwrap();
        let p = params(2.0, 0.5, 1, 0.1, 0.9);
        let post = fit_sparse(&t, &p, &PseudoInputSet::new(vec![vec![0.1], vec![0.7]]).unwrap()).unwrap();
        let (m, v) = post.predict(&[100.0]).unwrap();
        assert!(m.abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
        assert!(post.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn lambda_is_symmetric_and_serializes() {
        let t = Trajectory::single_episode((0..8).map(|i| vec![0.3 * i as f64, (i as f64).sin()]).collect(), vec![
            1.0, 0.5, -0.2, 0.3, 0.9, -1.0, 0.1,
        ])
        .unwrap();
        let p = params(1.0, 0.8, 2, 0.05, 0.9);
        let z = PseudoInputSet::new(vec![vec![0.2, 0.1], vec![1.1, 0.8], vec![1.9, -0.5]]).unwrap();
        let post = fit_sparse(&t, &p, &z).unwrap();
        assert!((post.lambda() - post.lambda().transpose()).amax() < 1e-10);

        let json = serde_json::to_string(&post).unwrap();
        let back: SparsePosterior = serde_json::from_str(&json).unwrap();
        assert_eq!(back.predict(&[0.5, 0.5]).unwrap(), post.predict(&[0.5, 0.5]).unwrap());
    }
}
