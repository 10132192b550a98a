//! Desk-scale studies behind the CLI: approximation quality against the exact
//! evidence, dictionary retention of the low-rank baseline, learning curves
//! with value landscapes, and fit/predict timings.

mod bench;
mod compare;
mod config;
mod learn;
mod retention;
mod synthetic;

pub use bench::{bench, bench_params, bench_trajectory, BenchConfig, BenchRow};
pub use compare::{compare_approx, CompareConfig, CompareRow};
pub use config::{AgentTuning, ExperimentConfig, LandscapeConfig, OutputConfig, PolicyInit, Task};
pub use learn::{
    curve_rows, landscape_study, learn, pearson, value_landscape, CurveRow, LandscapeRow, LandscapeStudy, SeedRun,
};
pub use retention::{retention, RetentionConfig, RetentionRow, RetentionSource};
pub use synthetic::{sample_prior_trajectory, SyntheticConfig};
