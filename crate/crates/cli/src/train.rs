//! `train`: one run per seed with CSV logs, checkpoints, and a manifest.

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::csvlog::CsvLog;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use rayon::prelude::*;
use riskgrad::algorithms::{EpochReport, Trainer};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<EpochReport>,
    /// Files written, relative to the run root.
    pub files: Vec<String>,
}

pub fn csv_name(seed: u64) -> String {
    format!("train_seed{seed}.csv")
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, root: &Path) -> Result<SeedRun> {
    let mut trainer = Trainer::new(cfg.train.clone(), seed)?;
    let csv = csv_name(seed);
    let mut log = CsvLog::create(&root.join(&csv), cfg.record_wall_time)?;
    let mut files = vec![csv];
    let mut reports = Vec::with_capacity(cfg.epochs);
    for e in 1..=cfg.epochs {
        let report = trainer.step_epoch()?;
        log.write(&report)?;
        reports.push(report);
        if cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0 && e != cfg.epochs {
            let name = format!("checkpoints/seed{seed}_epoch{e}.json");
            Checkpoint::of(cfg, &trainer).save(&root.join(&name))?;
            files.push(name);
        }
    }
    let name = format!("checkpoints/seed{seed}_final.json");
    Checkpoint::of(cfg, &trainer).save(&root.join(&name))?;
    files.push(name);
    Ok(SeedRun { seed, reports, files })
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("parallel-seeds: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every configured seed, `parallel_seeds` at a time, and writes the
/// resolved config and manifest into `root`.
pub fn train(cfg: &ExperimentConfig, root: &Path, parallel_seeds: usize) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    std::fs::create_dir_all(root.join("checkpoints")).map_err(|e| CliError::io(root, e))?;
    let runs: Vec<SeedRun> = if parallel_seeds > 1 {
        with_pool(parallel_seeds, || {
            cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, root)).collect::<Result<Vec<_>>>()
        })??
    } else {
        cfg.seeds.iter().map(|&s| run_seed(cfg, s, root)).collect::<Result<_>>()?
    };
    let config_path = root.join("config.json");
    std::fs::write(&config_path, cfg.to_json_pretty() + "\n").map_err(|e| CliError::io(&config_path, e))?;
    let mut files: Vec<String> = runs.iter().flat_map(|r| r.files.iter().cloned()).collect();
    files.push("config.json".into());
    Manifest::build(cfg, root, &files)?.save(&root.join("manifest.json"))?;
    Ok(runs)
}
