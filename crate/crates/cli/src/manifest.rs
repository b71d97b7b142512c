//! Run manifest: what produced a directory of results, and file digests.

use crate::checkpoint::CHECKPOINT_VERSION;
use crate::config::ExperimentConfig;
use crate::csvlog::CSV_SCHEMA_VERSION;
use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub code_version: String,
    pub config_hash: String,
    pub csv_schema_version: u32,
    pub checkpoint_version: u32,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub files: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    /// `files` are paths relative to `root`.
    pub fn build(config: &ExperimentConfig, root: &Path, files: &[String]) -> Result<Self> {
        let mut sorted = files.to_vec();
        sorted.sort();
        let files = sorted
            .into_iter()
            .map(|p| {
                Ok(FileDigest {
                    sha256: sha256_file(&root.join(&p))?,
                    path: p,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            tool: "riskgrad".into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            checkpoint_version: CHECKPOINT_VERSION,
            seeds: config.seeds.clone(),
            epochs: config.epochs,
            files,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_sorted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "bee").unwrap();
        std::fs::write(dir.path().join("a.txt"), "").unwrap();
        let cfg = ExperimentConfig::default();
        let m = Manifest::build(&cfg, dir.path(), &["b.txt".into(), "a.txt".into()]).unwrap();
        assert_eq!(m.files[0].path, "a.txt");
        assert_eq!(
            m.files[0].sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), m);
    }
}
