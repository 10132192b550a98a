//! Squared-exponential ARD covariance.
//!
//! The covariance between two inputs is
//!
//! ```text
//! k(x, y) = sf * exp(-0.5 * sum_d (x_d - y_d)^2 * p_d)
//! ```
//!
//! where `sf` is the signal scale and `p_d = 1 / len_d^2` is the precision of
//! dimension `d`. Hyperparameters are stored as `log sf` and `log len_d`, so the
//! diagonal "length scale matrix" of the quadratic form holds inverse squared
//! length scales. Every derivative exposed here is taken with respect to those
//! log values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GptdError, Result};

/// Relative diagonal jitter applied on the first escalation step of every
/// kernel-matrix factorization (scaled by the mean diagonal, i.e. by `sf`).
pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// `log sf`.
    pub log_signal_variance: f64,
    /// `log len_d`, one per input dimension.
    pub log_length_scales: Vec<f64>,
}

impl KernelParams {
    pub fn new(signal_variance: f64, length_scales: &[f64]) -> Result<Self> {
        let p = KernelParams {
            log_signal_variance: signal_variance.ln(),
            log_length_scales: length_scales.iter().map(|l| l.ln()).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(signal_variance: f64, length_scale: f64, dim: usize) -> Result<Self> {
        Self::new(signal_variance, &vec![length_scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.log_length_scales.len()
    }

    /// Number of log-hyperparameters (`1 + D`).
    pub fn n_params(&self) -> usize {
        1 + self.dim()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.log_length_scales.iter().map(|l| l.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_length_scales.is_empty() {
            return Err(GptdError::InvalidInput("kernel needs at least one input dimension".into()));
        }
        let sf = self.signal_variance();
        if !(sf.is_finite() && sf > 0.0) {
            return Err(GptdError::InvalidInput(format!("signal variance {sf} is not positive and finite")));
        }
        for (d, l) in self.log_length_scales.iter().enumerate() {
            let prec = (-2.0 * l).exp();
            if !(l.is_finite() && prec.is_finite() && prec > 0.0) {
                return Err(GptdError::InvalidInput(format!("length scale {d} (log {l}) out of range")));
            }
        }
        Ok(())
    }

    /// Flattened log-hyperparameter vector `[log sf, log len_1, ..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.push(self.log_signal_variance);
        v.extend_from_slice(&self.log_length_scales);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        KernelParams { log_signal_variance: v[0], log_length_scales: v[1..].to_vec() }
    }
}

/// Evaluation form of [`KernelParams`] with the exponentials precomputed.
///
/// Methods on this type skip dimension checks; callers validate inputs once at
/// the model boundary.
#[derive(Debug, Clone)]
pub struct SeArd {
    signal: f64,
    precision: Vec<f64>,
}

impl SeArd {
    pub fn new(p: &KernelParams) -> Self {
        SeArd {
            signal: p.signal_variance(),
            precision: p.log_length_scales.iter().map(|l| (-2.0 * l).exp()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.precision.len()
    }

    pub fn signal(&self) -> f64 {
        self.signal
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    #[inline]
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((a, b), p) in x.iter().zip(y).zip(&self.precision) {
            let d = a - b;
            q += d * d * p;
        }
        self.signal * (-0.5 * q).exp()
    }

    /// Prior variance `k(x, x)`; constant for a stationary kernel.
    #[inline]
    pub fn diag(&self) -> f64 {
        self.signal
    }

    /// `dk / d log len_d` given a precomputed `k(x, y)`.
    #[inline]
    pub fn dk_dloglen(&self, x: &[f64], y: &[f64], kxy: f64, d: usize) -> f64 {
        let diff = x[d] - y[d];
        kxy * diff * diff * self.precision[d]
    }

    /// `dk / dy_d` given a precomputed `k(x, y)`.
    #[inline]
    pub fn dk_dsecond(&self, x: &[f64], y: &[f64], kxy: f64, d: usize) -> f64 {
        self.precision[d] * (x[d] - y[d]) * kxy
    }

    pub fn matrix<A: AsRef<[f64]>, B: AsRef<[f64]>>(&self, a: &[A], b: &[B]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.k(a[i].as_ref(), b[j].as_ref()))
    }

    /// Symmetric `k(a_i, a_j)`; evaluates each pair once.
    pub fn gram<A: AsRef<[f64]>>(&self, a: &[A]) -> DMatrix<f64> {
        let n = a.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.signal;
            for j in 0..i {
                let v = self.k(a[i].as_ref(), a[j].as_ref());
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// Which argument of `k(x, y)` a coordinate derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Argument {
    First,
    Second,
}

pub fn eval(x: &[f64], y: &[f64], p: &KernelParams) -> Result<f64> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), y.len())?;
    Ok(SeArd::new(p).k(x, y))
}

pub fn cov_matrix<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B], p: &KernelParams) -> Result<DMatrix<f64>> {
    for x in a.iter().map(AsRef::as_ref).chain(b.iter().map(AsRef::as_ref)) {
        check_dim(p.dim(), x.len())?;
    }
    Ok(SeArd::new(p).matrix(a, b))
}

/// Partials of `k(x, y)` with respect to `[log sf, log len_1, .., log len_D]`.
pub fn grad_params(x: &[f64], y: &[f64], p: &KernelParams) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), y.len())?;
    let se = SeArd::new(p);
    let kxy = se.k(x, y);
    let mut g = Vec::with_capacity(p.n_params());
    g.push(kxy);
    g.extend((0..p.dim()).map(|d| se.dk_dloglen(x, y, kxy, d)));
    Ok(g)
}

pub fn grad_input(x: &[f64], y: &[f64], p: &KernelParams, which: Argument, coord: usize) -> Result<f64> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), y.len())?;
    if coord >= p.dim() {
        return Err(GptdError::InvalidInput(format!("coordinate {coord} out of range for dimension {}", p.dim())));
    }
    let se = SeArd::new(p);
    let g = se.dk_dsecond(x, y, se.k(x, y), coord);
    Ok(match which {
        Argument::First => -g,
        Argument::Second => g,
    })
}
