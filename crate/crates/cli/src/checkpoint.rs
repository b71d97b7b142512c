//! JSON checkpoints of a training run.

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use riskgrad::algorithms::{Trainer, TrainerState};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    pub state: TrainerState,
}

impl Checkpoint {
    pub fn of(config: &ExperimentConfig, trainer: &Trainer) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            state: trainer.state().clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Config(format!("checkpoint encoding: {e}")))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: invalid checkpoint: {e}", path.display())))?;
        match v.get("version").and_then(|x| x.as_u64()) {
            Some(n) if n == CHECKPOINT_VERSION as u64 => {}
            other => {
                return Err(CliError::Config(format!(
                    "{}: unsupported checkpoint version {other:?}, expected {CHECKPOINT_VERSION}",
                    path.display()
                )))
            }
        }
        serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: invalid checkpoint: {e}", path.display())))
    }

    pub fn trainer(&self) -> Result<Trainer> {
        Ok(Trainer::from_state(self.config.train.clone(), self.state.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskgrad::envs::{EnvConfig, PointConfig};

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.train.env = EnvConfig::PointHazard(PointConfig {
            horizon: 5,
            ..PointConfig::hazard()
        });
        cfg.train.batch_episodes = 3;
        cfg.train.policy_hidden = vec![4];
        cfg.train.critic_hidden = vec![4];
        cfg.train.policy_steps = 2;
        cfg.train.critic_steps = 2;
        cfg.train.entropy_samples = 10;
        cfg
    }

    #[test]
    fn save_load_resume() {
        let cfg = tiny();
        let mut t = Trainer::new(cfg.train.clone(), 3).unwrap();
        t.step_epoch().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        Checkpoint::of(&cfg, &t).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.state, *t.state());
        let mut resumed = back.trainer().unwrap();
        let mut a = t.step_epoch().unwrap();
        let mut b = resumed.step_epoch().unwrap();
        a.wall_s = 0.0;
        b.wall_s = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn version_checked() {
        let cfg = tiny();
        let t = Trainer::new(cfg.train.clone(), 3).unwrap();
        let mut v = serde_json::to_value(Checkpoint::of(&cfg, &t)).unwrap();
        v["version"] = 99.into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, v.to_string()).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert_eq!(err.exit_code(), 2);
    }
}
