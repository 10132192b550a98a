use nalgebra::{DMatrix, DVector};

use super::Trajectory;
use crate::error::{GptdError, Result};

/// Sparse temporal-difference operator mapping latent values at the inputs to
/// expected rewards.
///
/// Row `t` has `1` at the column of the transition's source input and `-gamma`
/// at its successor. Episodes occupy disjoint column blocks, so no row couples
/// values across an episode boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TdOperator {
    rows: Vec<(usize, Option<usize>)>,
    gamma: f64,
    n_cols: usize,
}

pub fn build_h(traj: &Trajectory, gamma: f64) -> Result<TdOperator> {
    TdOperator::new(traj, gamma, false)
}

impl TdOperator {
    pub fn new(traj: &Trajectory, gamma: f64, terminal_value_zero: bool) -> Result<Self> {
        traj.validate()?;
        if traj.is_empty() {
            return Err(GptdError::EmptyTrajectory);
        }
        let mut rows = Vec::with_capacity(traj.n_transitions());
        for (e, range) in traj.episodes().enumerate() {
            let last = range.end - 1;
            for a in range.start..last {
                let b = a + 1;
                let drop_next = terminal_value_zero && b == last && traj.is_terminal(e);
                rows.push((a, if drop_next { None } else { Some(b) }));
            }
        }
        Ok(TdOperator { rows, gamma, n_cols: traj.n_inputs() })
    }

    /// Operator for an empty dataset (no rows, no columns).
    pub(crate) fn empty(gamma: f64) -> Self {
        TdOperator { rows: Vec::new(), gamma, n_cols: 0 }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(source column, successor column)` of row `t`.
    pub fn row(&self, t: usize) -> (usize, Option<usize>) {
        self.rows[t]
    }

    pub fn rows(&self) -> &[(usize, Option<usize>)] {
        &self.rows
    }

    pub fn apply_vec(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|&(a, b)| q[a] - b.map_or(0.0, |b| self.gamma * q[b])),
        )
    }

    pub fn apply_slice(&self, q: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&(a, b)| q[a] - b.map_or(0.0, |b| self.gamma * q[b])).collect()
    }

    /// `H X` for an `n_cols x c` matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let c = x.ncols();
        let mut out = DMatrix::zeros(self.rows.len(), c);
        for j in 0..c {
            let col = x.column(j);
            for (t, &(a, b)) in self.rows.iter().enumerate() {
                out[(t, j)] = col[a] - b.map_or(0.0, |b| self.gamma * col[b]);
            }
        }
        out
    }

    /// `H^T Y` for an `n_rows x c` matrix.
    pub fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let c = y.ncols();
        let mut out = DMatrix::zeros(self.n_cols, c);
        for j in 0..c {
            for (t, &(a, b)) in self.rows.iter().enumerate() {
                let v = y[(t, j)];
                out[(a, j)] += v;
                if let Some(b) = b {
                    out[(b, j)] -= self.gamma * v;
                }
            }
        }
        out
    }

    pub fn apply_transpose_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_cols);
        for (t, &(a, b)) in self.rows.iter().enumerate() {
            out[a] += y[t];
            if let Some(b) = b {
                out[b] -= self.gamma * y[t];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.rows.len(), self.n_cols);
        for (t, &(a, b)) in self.rows.iter().enumerate() {
            h[(t, a)] = 1.0;
            if let Some(b) = b {
                h[(t, b)] = -self.gamma;
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(breaks: &[usize]) -> Trajectory {
        let n = *breaks.last().unwrap();
        let inputs = (0..n).map(|i| vec![i as f64]).collect();
        let rewards = vec![0.0; n - breaks.len()];
        Trajectory::new(inputs, rewards, breaks.to_vec()).unwrap()
    }

    #[test]
    fn single_episode_band() {
        let h = build_h(&traj(&[3]), 0.9).unwrap().to_dense();
        let want = DMatrix::from_row_slice(2, 3, &[1.0, -0.9, 0.0, 0.0, 1.0, -0.9]);
        assert_eq!(h, want);
    }

    #[test]
    fn zero_discount_is_identity_block() {
        let h = build_h(&traj(&[4]), 0.0).unwrap().to_dense();
        assert_eq!(h.columns(0, 3).clone_owned(), DMatrix::identity(3, 3));
        assert!(h.column(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn episodes_are_block_diagonal() {
        let h = build_h(&traj(&[2, 4]), 0.5).unwrap().to_dense();
        let mut want = DMatrix::zeros(2, 4);
        want[(0, 0)] = 1.0;
        want[(0, 1)] = -0.5;
        want[(1, 2)] = 1.0;
        want[(1, 3)] = -0.5;
        assert_eq!(h, want);
    }

    #[test]
    fn terminal_value_zero_drops_coupling() {
        let mut t = traj(&[3]);
        t.terminal = vec![true];
        let h = TdOperator::new(&t, 0.9, true).unwrap().to_dense();
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, -0.9, 0.0, 0.0, 1.0, 0.0]));
        let h = TdOperator::new(&t, 0.9, false).unwrap().to_dense();
        assert_eq!(h[(1, 2)], -0.9);
    }

    #[test]
    fn empty_trajectory_errors() {
        assert!(matches!(build_h(&Trajectory::default(), 0.9), Err(GptdError::EmptyTrajectory)));
    }

    #[test]
    fn sparse_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = build_h(&traj(&[4, 7, 12]), 0.93).unwrap();
        let h = op.to_dense();
        let x = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(9, 2, |_, _| rng.random_range(-1.0..1.0));
        assert!((op.apply(&x) - &h * &x).amax() < 1e-15);
        assert!((op.apply_transpose(&y) - h.transpose() * &y).amax() < 1e-15);
        let q = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        assert!((op.apply_vec(&q) - &h * &q).amax() < 1e-15);
    }
}
