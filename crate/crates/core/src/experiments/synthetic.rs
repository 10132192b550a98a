use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gptd::{ModelParams, TdOperator, Trajectory};
use crate::kernel::{KernelParams, SeArd};
use crate::linalg::Factor;

/// Generative settings for trajectories drawn from the GP prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_transitions: usize,
    pub dim: usize,
    /// Inputs are uniform on this interval in every dimension.
    pub input_range: [f64; 2],
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
    pub discount: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_transitions: 100,
            dim: 2,
            input_range: [0.0, 1.0],
            signal_variance: 1.0,
            length_scale: 0.3,
            noise_variance: 1e-3,
            discount: 0.9,
        }
    }
}

impl SyntheticConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            KernelParams::isotropic(self.signal_variance, self.length_scale, self.dim)?,
            self.noise_variance,
            self.discount,
        )
    }
}

/// One episode with i.i.d. uniform inputs, latent values `q ~ N(0, K_qq)`
/// and rewards `r = H q + eps`. Returns the trajectory and the generating
/// parameters.
pub fn sample_prior_trajectory(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<(Trajectory, ModelParams)> {
    let params = cfg.params()?;
    let n_in = cfg.n_transitions + 1;
    let [lo, hi] = cfg.input_range;
    let inputs: Vec<Vec<f64>> = (0..n_in).map(|_| (0..cfg.dim).map(|_| rng.random_range(lo..hi)).collect()).collect();
    let kqq = SeArd::new(&params.kernel).gram(&inputs);
    let factor = Factor::new(&kqq, "K_qq")?;
    let white = DVector::from_fn(n_in, |_, _| StandardNormal.sample(rng));
    let q = factor.l() * white;
    let traj = Trajectory::single_episode(inputs, vec![0.0; cfg.n_transitions])?;
    let op = TdOperator::new(&traj, params.discount, false)?;
    let sd = params.noise_variance.sqrt();
    let rewards: Vec<f64> = op
        .apply_vec(&q)
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + sd * e
        })
        .collect();
    Ok((Trajectory::single_episode(traj.inputs, rewards)?, params))
}
