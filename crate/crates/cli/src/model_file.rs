use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gptd_core::agent::FittedModel;
use gptd_core::{fit_exact, fit_lowrank, ModelParams, SparsePosterior, Trajectory};
use serde::{Deserialize, Serialize};

/// On-disk fitted model. The sparse model stores its `(alpha, lambda)`
/// summary; the exact and low-rank models store what they were fitted on
/// and are refitted when loaded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    Exact { params: ModelParams, trajectory: Trajectory },
    Sparse { model: SparsePosterior },
    Lowrank { params: ModelParams, nu: f64, trajectory: Trajectory },
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing model file {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn into_model(self) -> Result<FittedModel> {
        Ok(match self {
            ModelFile::Exact { params, trajectory } => FittedModel::Exact(fit_exact(&trajectory, &params)?),
            ModelFile::Sparse { model } => FittedModel::Sparse(model),
            ModelFile::Lowrank { params, nu, trajectory } => FittedModel::LowRank(fit_lowrank(&trajectory, &params, nu)?),
        })
    }
}

/// Reads a trajectory file. Parse errors carry the line and column.
pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let traj: Trajectory =
        serde_json::from_str(&text).with_context(|| format!("parsing trajectory file {}", path.display()))?;
    traj.validate().with_context(|| format!("invalid trajectory in {}", path.display()))?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gptd_core::KernelParams;

    #[test]
    fn exact_file_round_trips() {
        let traj = Trajectory::single_episode(vec![vec![0.0], vec![0.5], vec![1.0]], vec![1.0, -1.0]).unwrap();
        let params = ModelParams::new(KernelParams::isotropic(1.0, 0.7, 1).unwrap(), 0.1, 0.9).unwrap();
        let file = ModelFile::Exact { params, trajectory: traj };
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.starts_with("{\"estimator\":\"exact\""));
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        fs::write(&path, "{\n  \"inputs\": [[0.0]],\n  \"rewards\": [1.0,,]\n}").unwrap();
        let err = format!("{:#}", load_trajectory(&path).unwrap_err());
        assert!(err.contains("line 3"), "{err}");
    }
}
