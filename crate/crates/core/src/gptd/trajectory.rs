use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{GptdError, Result};

/// Time-ordered transitions grouped into episodes.
///
/// An episode with `T` transitions contributes `T + 1` consecutive entries to
/// `inputs` and `T` entries to `rewards`. `episode_breaks[e]` is the index one
/// past the last input of episode `e`, so the final break equals
/// `inputs.len()`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub inputs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub episode_breaks: Vec<usize>,
    /// Per-episode flag: ended in a terminal state rather than by truncation.
    /// Empty means no episode is terminal.
    #[serde(default)]
    pub terminal: Vec<bool>,
}

impl Trajectory {
    pub fn new(inputs: Vec<Vec<f64>>, rewards: Vec<f64>, episode_breaks: Vec<usize>) -> Result<Self> {
        let t = Trajectory { inputs, rewards, episode_breaks, terminal: Vec::new() };
        t.validate()?;
        Ok(t)
    }

    pub fn single_episode(inputs: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Self> {
        let n = inputs.len();
        Self::new(inputs, rewards, vec![n])
    }

    pub fn push_episode(&mut self, inputs: Vec<Vec<f64>>, rewards: Vec<f64>, terminal: bool) -> Result<()> {
        if inputs.len() != rewards.len() + 1 || rewards.is_empty() {
            return Err(GptdError::InvalidInput(format!(
                "episode needs T + 1 inputs for T >= 1 rewards, got {} inputs and {} rewards",
                inputs.len(),
                rewards.len()
            )));
        }
        if self.terminal.len() < self.episode_breaks.len() {
            self.terminal.resize(self.episode_breaks.len(), false);
        }
        self.inputs.extend(inputs);
        self.rewards.extend(rewards);
        self.episode_breaks.push(self.inputs.len());
        self.terminal.push(terminal);
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GptdError::InvalidInput(m));
        if self.inputs.is_empty() {
            if !self.rewards.is_empty() || !self.episode_breaks.is_empty() {
                return bad("rewards or episode breaks without inputs".into());
            }
            return Ok(());
        }
        let dim = self.inputs[0].len();
        if dim == 0 {
            return bad("inputs must have at least one dimension".into());
        }
        for (i, x) in self.inputs.iter().enumerate() {
            if x.len() != dim {
                return bad(format!("input {i} has dimension {}, expected {dim}", x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return bad(format!("input {i} is not finite"));
            }
        }
        if let Some(i) = self.rewards.iter().position(|r| !r.is_finite()) {
            return bad(format!("reward {i} is not finite"));
        }
        let mut start = 0;
        for (e, &end) in self.episode_breaks.iter().enumerate() {
            if end < start + 2 {
                return bad(format!("episode {e} has fewer than two inputs (break {end} after {start})"));
            }
            start = end;
        }
        if start != self.inputs.len() {
            return bad(format!("last episode break {start} does not match {} inputs", self.inputs.len()));
        }
        if self.rewards.len() + self.episode_breaks.len() != self.inputs.len() {
            return bad(format!(
                "{} rewards inconsistent with {} inputs in {} episodes",
                self.rewards.len(),
                self.inputs.len(),
                self.episode_breaks.len()
            ));
        }
        if !self.terminal.is_empty() && self.terminal.len() != self.episode_breaks.len() {
            return bad("terminal flags must match the episode count".into());
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_breaks.len()
    }

    pub fn is_terminal(&self, episode: usize) -> bool {
        self.terminal.get(episode).copied().unwrap_or(false)
    }

    /// Input index ranges of each episode.
    pub fn episodes(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let starts = std::iter::once(0).chain(self.episode_breaks.iter().copied());
        starts.zip(self.episode_breaks.iter().copied()).map(|(s, e)| s..e)
    }

    /// The most recent `k` episodes as a standalone trajectory.
    pub fn last_episodes(&self, k: usize) -> Trajectory {
        let n = self.n_episodes();
        if k >= n {
            return self.clone();
        }
        let first = n - k;
        let in_start = self.episode_breaks[first - 1];
        let rew_start = in_start - first;
        Trajectory {
            inputs: self.inputs[in_start..].to_vec(),
            rewards: self.rewards[rew_start..].to_vec(),
            episode_breaks: self.episode_breaks[first..].iter().map(|b| b - in_start).collect(),
            terminal: if self.terminal.is_empty() { Vec::new() } else { self.terminal[first..].to_vec() },
        }
    }

    /// Per-dimension `(min, max)` of the inputs.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let Some(dim) = self.dim() else { return Vec::new() };
        (0..dim)
            .map(|d| {
                self.inputs
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[d]), hi.max(x[d])))
            })
            .collect()
    }
}
