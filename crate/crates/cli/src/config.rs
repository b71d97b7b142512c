//! Experiment configuration: every training knob plus run bookkeeping.
//!
//! A config is a flat JSON object. Keys are either training fields (see
//! [`TrainConfig`]) or one of [`RUN_KEYS`]; anything else is rejected.

use crate::error::{CliError, Result};
use riskgrad::algorithms::TrainConfig;
use riskgrad::risk::WeightSpec;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const RUN_KEYS: [&str; 6] = [
    "epochs",
    "seeds",
    "output_dir",
    "checkpoint_every",
    "record_wall_time",
    "eval_weights",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunFields {
    epochs: usize,
    seeds: Vec<u64>,
    output_dir: PathBuf,
    checkpoint_every: usize,
    record_wall_time: bool,
    eval_weights: Vec<WeightSpec>,
}

impl Default for RunFields {
    fn default() -> Self {
        Self {
            epochs: 150,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 25,
            record_wall_time: false,
            eval_weights: vec![
                WeightSpec::Identity,
                WeightSpec::Wang { eta: 0.5 },
                WeightSpec::Wang { eta: -0.5 },
                WeightSpec::Cutoff { q: 0.25 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Checkpoint period in epochs; `0` keeps only the final checkpoint.
    pub checkpoint_every: usize,
    /// Write measured wall time into the CSV instead of `0`.
    pub record_wall_time: bool,
    /// Weight functions scored by `eval`.
    pub eval_weights: Vec<WeightSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::assemble(TrainConfig::default(), RunFields::default())
    }
}

impl<'de> Deserialize<'de> for ExperimentConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Self::from_value(v).map_err(serde::de::Error::custom)
    }
}

impl ExperimentConfig {
    fn assemble(train: TrainConfig, run: RunFields) -> Self {
        Self {
            train,
            epochs: run.epochs,
            seeds: run.seeds,
            output_dir: run.output_dir,
            checkpoint_every: run.checkpoint_every,
            record_wall_time: run.record_wall_time,
            eval_weights: run.eval_weights,
        }
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(mut map) = v else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        let mut run = Map::new();
        for key in RUN_KEYS {
            if let Some(x) = map.remove(key) {
                run.insert(key.to_string(), x);
            }
        }
        let train: TrainConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))?;
        let run: RunFields = serde_json::from_value(Value::Object(run)).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = Self::assemble(train, run);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(v)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be in [1, inf), got 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must list at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        if self.eval_weights.is_empty() {
            return Err(CliError::Config("eval_weights must list at least one weight".into()));
        }
        for w in &self.eval_weights {
            w.validate().map_err(|e| CliError::Config(format!("eval_weights: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 over everything that influences results; the output
    /// location and wall-time recording are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
            m.remove("record_wall_time");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Short label of a weight function, usable as a CSV column suffix.
pub fn weight_label(w: &WeightSpec) -> String {
    match w {
        WeightSpec::Identity => "identity".into(),
        WeightSpec::Wang { eta } => format!("wang_{eta}"),
        WeightSpec::Cpt { eta_minus, eta_plus, r0 } => format!("cpt_{eta_minus}_{eta_plus}_{r0}"),
        WeightSpec::Cutoff { q } => format!("cutoff_{q}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg = ExperimentConfig::parse("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn roundtrip() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.weight = WeightSpec::Wang { eta: 0.25 };
        cfg.epochs = 7;
        let text = cfg.to_json_pretty();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_named() {
        let err = ExperimentConfig::parse(r#"{"epochz": 3}"#).unwrap_err().to_string();
        assert!(err.contains("epochz"), "{err}");
        let err = ExperimentConfig::parse(r#"{"env": {"name": "point_hazard", "radius": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("radius"), "{err}");
    }

    #[test]
    fn range_errors_named() {
        let err = ExperimentConfig::parse(r#"{"lambda_gae": 1.5}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("lambda_gae") && msg.contains("[0, 1]"), "{msg}");
        assert!(ExperimentConfig::parse(r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"seeds": [1, 1]}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"epochs": 0}"#).is_err());
        assert!(ExperimentConfig::parse("[1]").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        b.record_wall_time = true;
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.train.gamma = 0.98;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn labels() {
        assert_eq!(weight_label(&WeightSpec::Wang { eta: -0.5 }), "wang_-0.5");
        assert_eq!(weight_label(&WeightSpec::Cutoff { q: 0.25 }), "cutoff_0.25");
    }

    #[test]
    fn schema_lists_every_key() {
        let schema: Value = serde_json::from_str(include_str!("../schema/experiment.schema.json")).unwrap();
        assert_eq!(schema["additionalProperties"], Value::Bool(false));
        let mut listed: Vec<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
        let mut actual: Vec<String> = serde_json::to_value(ExperimentConfig::default())
            .unwrap()
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        listed.sort();
        actual.sort();
        assert_eq!(listed, actual);
    }
}
