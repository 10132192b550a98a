use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GptdError, Result};
use crate::gptd::Trajectory;
use crate::spgp::{PseudoInputSet, MIN_SEPARATION};

/// Relative size of the perturbation applied to subset-drawn pseudo inputs.
pub const INIT_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Distinct training inputs, slightly perturbed.
    #[default]
    RandomSubset,
    /// Uniform draws from the bounding box of the inputs.
    UniformRange,
}

pub fn init_pseudo(traj: &Trajectory, m: usize, strategy: InitStrategy, seed: u64) -> Result<PseudoInputSet> {
    init_pseudo_with_jitter(traj, m, strategy, seed, INIT_JITTER)
}

/// As [`init_pseudo`] with an explicit relative jitter; `0` keeps subset
/// draws exactly on training inputs.
pub fn init_pseudo_with_jitter(
    traj: &Trajectory,
    m: usize,
    strategy: InitStrategy,
    seed: u64,
    jitter: f64,
) -> Result<PseudoInputSet> {
    if m == 0 {
        return Err(GptdError::InvalidInput("need at least one pseudo input".into()));
    }
    let n = traj.n_inputs();
    if n == 0 {
        return Err(GptdError::EmptyTrajectory);
    }
    let bounds = traj.bounding_box();
    let scale: Vec<f64> = bounds.iter().map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut locations: Vec<Vec<f64>> = match strategy {
        InitStrategy::UniformRange => (0..m)
            .map(|_| bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect())
            .collect(),
        InitStrategy::RandomSubset => {
            let picks: Vec<usize> = if m <= n {
                sample(&mut rng, n, m).into_vec()
            } else {
                (0..m).map(|i| if i < n { i } else { rng.random_range(0..n) }).collect()
            };
            picks
                .into_iter()
                .map(|i| {
                    traj.inputs[i]
                        .iter()
                        .enumerate()
                        .map(|(d, &v)| perturb(v, jitter * scale[d], bounds[d], &mut rng))
                        .collect()
                })
                .collect()
        }
    };

    // Resolve collisions left by repeated inputs with progressively larger
    // perturbations; still inside the box.
    let mut spread = jitter.max(INIT_JITTER);
    for _ in 0..40 {
        let Some(i) = first_collision(&locations) else { break };
        for (d, v) in locations[i].iter_mut().enumerate() {
            *v = perturb(*v, spread * scale[d], bounds[d], &mut rng);
        }
        spread = (spread * 2.0).min(0.5);
    }
    PseudoInputSet::new(locations)
}

fn perturb(v: f64, amount: f64, (lo, hi): (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    if amount == 0.0 {
        return v;
    }
    let moved = v + amount * rng.random_range(-1.0..=1.0);
    if hi > lo {
        moved.clamp(lo, hi)
    } else {
        moved
    }
}

fn first_collision(locs: &[Vec<f64>]) -> Option<usize> {
    for i in 1..locs.len() {
        for j in 0..i {
            let d2: f64 = locs[i].iter().zip(&locs[j]).map(|(a, b)| (a - b).powi(2)).sum();
            if d2.sqrt() < MIN_SEPARATION * 10.0 {
                return Some(i);
            }
        }
    }
    None
}
