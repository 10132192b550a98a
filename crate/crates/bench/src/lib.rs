//! Shared fixtures for the criterion benches.

use gptd_core::experiments::{bench_params, bench_trajectory};
use gptd_core::hyperopt::{init_pseudo, InitStrategy};
use gptd_core::{ModelParams, PseudoInputSet, Trajectory};

pub struct Fixture {
    pub traj: Trajectory,
    pub params: ModelParams,
    pub z: PseudoInputSet,
}

/// `n` transitions of the timing trajectory with `m` pseudo inputs drawn from it.
pub fn fixture(n: usize, m: usize) -> Fixture {
    let traj = bench_trajectory(n, 0).expect("timing trajectory");
    let z = init_pseudo(&traj, m, InitStrategy::RandomSubset, 0).expect("pseudo inputs");
    Fixture { traj, params: bench_params(), z }
}
