//! `sweep-eta`: trains every seed under a Wang weight for each listed eta
//! and aggregates end-of-training statistics per eta.

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::train::{train, SeedRun};
use riskgrad::algorithms::EpochReport;
use riskgrad::risk::WeightSpec;
use std::path::{Path, PathBuf};

/// Epochs averaged at the end of each run.
pub const TRAILING_EPOCHS: usize = 10;

pub const SWEEP_COLUMNS: [&str; 8] = [
    "eta",
    "runs",
    "entropy",
    "trunc_entropy",
    "ep_reward_mean",
    "ep_cost_mean",
    "objective_est",
    "epochs_to_cost_target",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub runs: usize,
    pub entropy: f64,
    pub trunc_entropy: f64,
    pub reward: f64,
    pub cost: f64,
    pub objective: f64,
    /// Median first epoch whose mean cost is at or below the target;
    /// runs that never reach it count as `epochs + 1`. NaN without a target.
    pub epochs_to_cost_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of eta against entropy, cost, and
    /// epochs-to-target; `None` with fewer than two etas.
    pub entropy_corr: Option<f64>,
    pub cost_corr: Option<f64>,
    pub target_corr: Option<f64>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean of `f` over the last `k` reports.
pub fn trailing_mean(reports: &[EpochReport], k: usize, f: impl Fn(&EpochReport) -> f64) -> f64 {
    let tail = &reports[reports.len().saturating_sub(k)..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// First 1-based epoch with mean cost at or below `target`, else `len + 1`.
pub fn epochs_to_target(reports: &[EpochReport], target: f64) -> usize {
    reports
        .iter()
        .position(|r| r.ep_cost_mean <= target)
        .map_or(reports.len() + 1, |i| i + 1)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` for fewer than two points, NaN
/// input, or a constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| v.is_nan()) {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn eta_dir(root: &Path, eta: f64) -> PathBuf {
    root.join(format!("eta_{eta}"))
}

pub fn aggregate(eta: f64, runs: &[SeedRun], cost_target: Option<f64>) -> SweepRow {
    let stat = |f: &dyn Fn(&EpochReport) -> f64| {
        median(&runs.iter().map(|r| trailing_mean(&r.reports, TRAILING_EPOCHS, f)).collect::<Vec<_>>())
    };
    let epochs_to_cost_target = match cost_target {
        Some(d) => median(&runs.iter().map(|r| epochs_to_target(&r.reports, d) as f64).collect::<Vec<_>>()),
        None => f64::NAN,
    };
    SweepRow {
        eta,
        runs: runs.len(),
        entropy: stat(&|r| r.entropy),
        trunc_entropy: stat(&|r| r.trunc_entropy),
        reward: stat(&|r| r.ep_reward_mean),
        cost: stat(&|r| r.ep_cost_mean),
        objective: stat(&|r| r.objective_est),
        epochs_to_cost_target,
    }
}

pub fn summarize(rows: Vec<SweepRow>) -> SweepResult {
    let etas: Vec<f64> = rows.iter().map(|r| r.eta).collect();
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    SweepResult {
        entropy_corr: spearman(&etas, &col(|r| r.entropy)),
        cost_corr: spearman(&etas, &col(|r| r.cost)),
        target_corr: spearman(&etas, &col(|r| r.epochs_to_cost_target)),
        rows,
    }
}

/// Trains each eta into `root/eta_<eta>/` and writes `root/sweep.csv`.
/// The cost target defaults to the configured cost limit.
pub fn sweep(
    base: &ExperimentConfig,
    etas: &[f64],
    cost_target: Option<f64>,
    root: &Path,
    parallel_seeds: usize,
) -> Result<SweepResult> {
    if etas.is_empty() {
        return Err(CliError::Config("eta list must not be empty".into()));
    }
    if let Some(e) = etas.iter().find(|e| !e.is_finite()) {
        return Err(CliError::Config(format!("eta must be finite, got {e}")));
    }
    let cost_target = cost_target.or(base.train.cost_limit);
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let mut cfg = base.clone();
        cfg.train.weight = WeightSpec::Wang { eta };
        let runs = train(&cfg, &eta_dir(root, eta), parallel_seeds)?;
        rows.push(aggregate(eta, &runs, cost_target));
    }
    let result = summarize(rows);
    write_csv(&root.join("sweep.csv"), &result.rows)?;
    Ok(result)
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.eta.to_string(),
            r.runs.to_string(),
            r.entropy.to_string(),
            r.trunc_entropy.to_string(),
            r.reward.to_string(),
            r.cost.to_string(),
            r.objective.to_string(),
            r.epochs_to_cost_target.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
