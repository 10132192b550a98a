//! Dense reference implementations, written from the model definitions
//! without touching the library's numerics.
#![allow(dead_code)]

use gptd_core::gptd::{ModelParams, Trajectory};
use gptd_core::kernel::KernelParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn k(x: &[f64], y: &[f64], sf: f64, lens: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..x.len() {
        let u = (x[d] - y[d]) / lens[d];
        s += u * u;
    }
    sf * (-0.5 * s).exp()
}

pub struct Dense {
    pub sf: f64,
    pub lens: Vec<f64>,
    pub noise: f64,
    pub gamma: f64,
}

impl Dense {
    pub fn of(p: &ModelParams) -> Self {
        Dense {
            sf: p.kernel.signal_variance(),
            lens: p.kernel.length_scales(),
            noise: p.noise_variance,
            gamma: p.discount,
        }
    }

    pub fn kern(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| k(&a[i], &b[j], self.sf, &self.lens))
    }

    pub fn kvec(&self, a: &[Vec<f64>], x: &[f64]) -> DVector<f64> {
        DVector::from_fn(a.len(), |i, _| k(&a[i], x, self.sf, &self.lens))
    }
}

/// Dense temporal-difference matrix, one block per episode.
pub fn dense_h(traj: &Trajectory, gamma: f64, terminal_zero: bool) -> DMatrix<f64> {
    let n_in = traj.inputs.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut start = 0;
    for (e, &end) in traj.episode_breaks.iter().enumerate() {
        let terminal = traj.terminal.get(e).copied().unwrap_or(false);
        for a in start..end - 1 {
            let mut row = vec![0.0; n_in];
            row[a] = 1.0;
            if !(terminal_zero && terminal && a + 1 == end - 1) {
                row[a + 1] = -gamma;
            }
            rows.push(row);
        }
        start = end;
    }
    DMatrix::from_fn(rows.len(), n_in, |i, j| rows[i][j])
}

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

pub fn log_normal(r: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = r.len() as f64;
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let sol = lu.solve(r).expect("invertible");
    -0.5 * (r.dot(&sol) + det.ln() + n * LN_2PI)
}

/// Gaussian conditioning of the latent value at `x` on the rewards, from
/// the explicit joint normal of latent values and rewards.
pub fn exact_conditional(traj: &Trajectory, p: &ModelParams, x: &[f64]) -> (f64, f64) {
    let d = Dense::of(p);
    let h = dense_h(traj, d.gamma, p.terminal_value_zero);
    let kqq = d.kern(&traj.inputs, &traj.inputs);
    let mut c = &h * &kqq * h.transpose();
    for i in 0..c.nrows() {
        c[(i, i)] += d.noise;
    }
    let cross = &h * d.kvec(&traj.inputs, x);
    let r = DVector::from_column_slice(&traj.rewards);
    let ci = inv(&c);
    let mean = cross.dot(&(&ci * &r));
    let var = d.sf - cross.dot(&(&ci * &cross));
    (mean, var)
}

pub fn exact_log_marginal(traj: &Trajectory, p: &ModelParams) -> f64 {
    let d = Dense::of(p);
    let h = dense_h(traj, d.gamma, p.terminal_value_zero);
    let mut c = &h * d.kern(&traj.inputs, &traj.inputs) * h.transpose();
    for i in 0..c.nrows() {
        c[(i, i)] += d.noise;
    }
    log_normal(&DVector::from_column_slice(&traj.rewards), &c)
}

/// Pieces of the pseudo-input model: `K_uu`, `K_ur = K_uq H^T` and the
/// diagonal residual covariance `D = diag(K_rr - K_ru K_uu^-1 K_ur) + sigma^2`.
pub struct SparseBlocks {
    pub kuu: DMatrix<f64>,
    pub kur: DMatrix<f64>,
    pub d: DVector<f64>,
    pub r: DVector<f64>,
}

pub fn sparse_blocks(traj: &Trajectory, p: &ModelParams, z: &[Vec<f64>]) -> SparseBlocks {
    let dn = Dense::of(p);
    let h = dense_h(traj, dn.gamma, p.terminal_value_zero);
    let kuu = dn.kern(z, z);
    let kur = dn.kern(z, &traj.inputs) * h.transpose();
    let krr = &h * dn.kern(&traj.inputs, &traj.inputs) * h.transpose();
    let qrr = kur.transpose() * inv(&kuu) * &kur;
    let d = DVector::from_fn(krr.nrows(), |i, _| (krr[(i, i)] - qrr[(i, i)]).max(0.0) + dn.noise);
    SparseBlocks { kuu, kur, d, r: DVector::from_column_slice(&traj.rewards) }
}

/// Posterior of the pseudo values by conditioning the joint normal of
/// `(u, r)` where `r | u ~ N(K_ru K_uu^-1 u, D)`.
pub fn pseudo_conditional(b: &SparseBlocks) -> (DVector<f64>, DMatrix<f64>) {
    let kuu_inv = inv(&b.kuu);
    let mut crr = b.kur.transpose() * &kuu_inv * &b.kur;
    for i in 0..crr.nrows() {
        crr[(i, i)] += b.d[i];
    }
    let ci = inv(&crr);
    let mean = &b.kur * &ci * &b.r;
    let cov = &b.kuu - &b.kur * &ci * b.kur.transpose();
    (mean, cov)
}

/// `(alpha, Lambda)` of the sparse predictive from the pseudo-value
/// posterior: `mean = k_u^T K_uu^-1 mu`,
/// `var = k - k_u^T K_uu^-1 k_u + k_u^T K_uu^-1 S K_uu^-1 k_u`.
pub fn sparse_summary(b: &SparseBlocks) -> (DVector<f64>, DMatrix<f64>) {
    let (mu, s) = pseudo_conditional(b);
    let kuu_inv = inv(&b.kuu);
    let alpha = &kuu_inv * mu;
    let lambda = &kuu_inv - &kuu_inv * s * &kuu_inv;
    (alpha, lambda)
}

pub fn sparse_log_marginal(b: &SparseBlocks) -> f64 {
    let mut c = b.kur.transpose() * inv(&b.kuu) * &b.kur;
    for i in 0..c.nrows() {
        c[(i, i)] += b.d[i];
    }
    log_normal(&b.r, &c)
}

pub fn random_params(rng: &mut ChaCha8Rng, dim: usize) -> ModelParams {
    let lens: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let kp = KernelParams::new(rng.random_range(0.5..2.0), &lens).unwrap();
    ModelParams::new(kp, rng.random_range(0.05..0.5), rng.random_range(0.5..0.99)).unwrap()
}

/// Random trajectory of `n` transitions split into up to three episodes,
/// inputs uniform in `[-lim, lim]^dim`.
pub fn random_trajectory(rng: &mut ChaCha8Rng, n: usize, dim: usize, lim: f64) -> Trajectory {
    let episodes = if n >= 3 { rng.random_range(1..=3usize) } else { 1 };
    let mut lengths = vec![n / episodes; episodes];
    lengths[0] += n - lengths.iter().sum::<usize>();
    let mut t = Trajectory::default();
    for len in lengths {
        let inputs: Vec<Vec<f64>> = (0..=len).map(|_| (0..dim).map(|_| rng.random_range(-lim..lim)).collect()).collect();
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let terminal = rng.random_bool(0.5);
        t.push_episode(inputs, rewards, terminal).unwrap();
    }
    t
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Relative error with an absolute floor, for quantities that may be near zero.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
