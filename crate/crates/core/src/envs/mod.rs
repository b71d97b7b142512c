//! Environments: a continuous 2D navigation task with hazards, its button
//! variant, and small enumerable tabular MDPs.

mod point;
mod tabular;

pub use point::{PointConfig, PointEnv};
pub use tabular::{enumerate, Path, TabularEnv, TabularMDP, ENUMERATION_LIMIT};

use crate::error::Result;
use serde::{Deserialize, Serialize};

/// Static description of an environment's interface.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Continuous action bounds; `None` for discrete actions.
    pub action_bound: Option<f64>,
    /// Number of discrete actions, `0` for continuous envs.
    pub n_actions: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Cost events incurred on this step.
    pub cost: f64,
    pub done: bool,
}

pub trait Env: Send {
    fn spec(&self) -> EnvSpec;
    /// Starts a new episode with all randomness drawn from `episode_seed`.
    fn reset(&mut self, episode_seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}

/// Serializable environment selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    PointHazard(PointConfig),
    PointButton(PointConfig),
    /// The fixed three-state test MDP.
    Tabular,
}

impl EnvConfig {
    pub fn point_hazard() -> Self {
        EnvConfig::PointHazard(PointConfig::hazard())
    }

    pub fn point_button() -> Self {
        EnvConfig::PointButton(PointConfig::button())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::PointHazard(c) | EnvConfig::PointButton(c) => c.validate(),
            EnvConfig::Tabular => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>> {
        Ok(match self {
            EnvConfig::PointHazard(c) => Box::new(PointEnv::new("point_hazard", c.clone())?),
            EnvConfig::PointButton(c) => Box::new(PointEnv::new("point_button", c.clone())?),
            EnvConfig::Tabular => Box::new(TabularEnv::new(TabularMDP::standard())),
        })
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build()?.spec())
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvConfig::PointHazard(c) | EnvConfig::PointButton(c) => c.horizon,
            EnvConfig::Tabular => TabularMDP::standard().horizon,
        }
    }
}
