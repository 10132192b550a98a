//! Cholesky factorization with jitter escalation and triangular-solve helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{GptdError, Result};
use crate::kernel::JITTER;

/// Relative diagonal inflation tried in order after a plain attempt fails.
pub const JITTER_ESCALATION: [f64; 3] = [JITTER, 1e-6, 1e-4];

// Smallest accepted squared pivot relative to the mean diagonal.
const MIN_PIVOT: f64 = 1e-13;

/// Lower-triangular factor `L` with `L L^T = A + jitter I`.
#[derive(Debug, Clone)]
pub struct Factor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl Factor {
    /// Factorizes a symmetric matrix, inflating the diagonal on failure.
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Ok(Factor { l: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        let mean_diag = a.diagonal().mean();
        if !mean_diag.is_finite() || mean_diag <= 0.0 {
            return Err(GptdError::IllConditioned(format!("{what}: non-positive mean diagonal {mean_diag}")));
        }
        for rel in std::iter::once(0.0).chain(JITTER_ESCALATION) {
            let jitter = rel * mean_diag;
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = m.cholesky() {
                let l = ch.unpack();
                let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v * v));
                if min_pivot.is_finite() && min_pivot > MIN_PIVOT * mean_diag {
                    return Ok(Factor { l, jitter });
                }
            }
        }
        Err(GptdError::IllConditioned(format!("{what}: factorization failed after jitter escalation")))
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L^{-1} B`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l.solve_lower_triangular(b).expect("factor has a nonzero diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.solve_lower_triangular(b).expect("factor has a nonzero diagonal")
    }

    /// `L^{-T} B`.
    pub fn solve_upper(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l.tr_solve_lower_triangular(b).expect("factor has a nonzero diagonal")
    }

    pub fn solve_upper_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l.tr_solve_lower_triangular(b).expect("factor has a nonzero diagonal")
    }

    /// `A^{-1} b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper_vec(&self.solve_lower_vec(b))
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = self.solve(&DMatrix::identity(n, n));
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Reconstructs `L L^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Frobenius-norm relative difference.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(f64::MIN_POSITIVE)
}
