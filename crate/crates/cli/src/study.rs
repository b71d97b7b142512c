//! `study`: estimator studies on the enumerable tabular MDP, each ending in
//! pass/fail verdicts.

use crate::error::{CliError, Result};
use riskgrad::critics::{ConstValue, FnValue};
use riskgrad::envs::TabularMDP;
use riskgrad::estimator::{EstimatorVariant, StaticBaseline};
use riskgrad::oracle::{
    bias_variance_study, cross_term_study, gradient_check_suite, paired_difference_study, StudyEstimator,
};
use riskgrad::policy::CategoricalPolicy;
use riskgrad::risk::{UtilitySpec, WeightSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StudyKind {
    Bias,
    Variance,
    Crossterm,
    Gradcheck,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Bias => "bias",
            StudyKind::Variance => "variance",
            StudyKind::Crossterm => "crossterm",
            StudyKind::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub weight: WeightSpec,
    pub utility: UtilitySpec,
    pub seed: u64,
    /// Batch sizes of the consistency sweep.
    pub ns: Vec<usize>,
    /// Batches per batch size.
    pub batches: usize,
    /// Batch size of the variance and baseline comparisons.
    pub n: usize,
    pub pairs: usize,
    /// Constant subtracted in the static-baseline comparison.
    pub static_baseline: f64,
    pub gradcheck_seeds: u64,
    pub gradcheck_tol: f64,
    pub cosine_min: f64,
    pub z_max: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            weight: WeightSpec::Wang { eta: 0.5 },
            utility: UtilitySpec::Identity,
            seed: 0,
            ns: vec![8, 64, 512],
            batches: 2000,
            n: 32,
            pairs: 100_000,
            static_baseline: 3.0,
            gradcheck_seeds: 100,
            gradcheck_tol: 1e-4,
            cosine_min: 0.99,
            z_max: 3.0,
        }
    }
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.weight.validate().map_err(|e| CliError::Config(format!("weight: {e}")))?;
        self.utility.validate().map_err(|e| CliError::Config(format!("utility: {e}")))?;
        if self.ns.is_empty() || self.ns.contains(&0) || self.n == 0 {
            return Err(CliError::Config("ns and n must be positive batch sizes".into()));
        }
        if self.batches < 2 || self.pairs < 2 {
            return Err(CliError::Config("batches and pairs must be in [2, inf)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub verdicts: Vec<Verdict>,
}

/// State-dependent baseline on the one-hot observations of the standard MDP.
pub fn tabular_state_baseline(obs: &[f64]) -> f64 {
    1.5 * obs[0] + 0.5 * obs[1] - obs[2]
}

fn setup() -> Result<(TabularMDP, CategoricalPolicy)> {
    Ok((TabularMDP::standard(), CategoricalPolicy::tabular(&TabularMDP::standard_logits())?))
}

fn max_abs(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn bias(cfg: &StudyConfig) -> Result<StudyOutput> {
    let (mdp, pol) = setup()?;
    let (u, w) = (&cfg.utility, &cfg.weight);
    let rows = bias_variance_study(&mdp, &pol, u, w, StudyEstimator::Ranked { baseline: 0.0 }, &cfg.ns, cfg.batches, cfg.seed)?;
    let mut out = StudyOutput {
        header: ["n", "batches", "rel_l2", "cosine", "trace_variance"].map(String::from).to_vec(),
        rows: rows
            .iter()
            .map(|r| vec![r.n.to_string(), r.batches.to_string(), r.rel_l2.to_string(), r.cosine.to_string(), r.trace_variance.to_string()])
            .collect(),
        verdicts: Vec::new(),
    };
    let decreasing = rows.windows(2).all(|p| p[1].rel_l2 < p[0].rel_l2);
    let trail: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.rel_l2)).collect();
    out.verdicts.push(Verdict {
        name: "rel_l2 decreases with n".into(),
        passed: decreasing,
        detail: trail.join(" -> "),
    });
    let last = rows.last().expect("ns non-empty");
    out.verdicts.push(Verdict {
        name: format!("cosine at n={} > {}", last.n, cfg.cosine_min),
        passed: last.cosine > cfg.cosine_min,
        detail: format!("{:.5}", last.cosine),
    });
    let z_static = paired_difference_study(
        &mdp,
        &pol,
        u,
        w,
        StudyEstimator::Ranked { baseline: 0.0 },
        StudyEstimator::Ranked { baseline: cfg.static_baseline },
        cfg.n,
        cfg.batches,
        cfg.seed ^ 1,
    )?;
    out.verdicts.push(Verdict {
        name: format!("static baseline b={} leaves the mean unchanged", cfg.static_baseline),
        passed: max_abs(&z_static) < cfg.z_max,
        detail: format!("max |z| = {:.3}", max_abs(&z_static)),
    });
    let v = FnValue(tabular_state_baseline);
    let zero = ConstValue(0.0);
    let z_state = paired_difference_study(
        &mdp,
        &pol,
        u,
        w,
        StudyEstimator::Variant {
            variant: EstimatorVariant::Utg,
            static_baseline: StaticBaseline::None,
            gamma: 1.0,
            lambda_gae: 1.0,
            value: Some(&zero),
        },
        StudyEstimator::Variant {
            variant: EstimatorVariant::Utg,
            static_baseline: StaticBaseline::None,
            gamma: 1.0,
            lambda_gae: 1.0,
            value: Some(&v),
        },
        cfg.n,
        cfg.batches,
        cfg.seed ^ 2,
    )?;
    out.verdicts.push(Verdict {
        name: "state baseline leaves the mean unchanged".into(),
        passed: max_abs(&z_state) < cfg.z_max,
        detail: format!("max |z| = {:.3}", max_abs(&z_state)),
    });
    Ok(out)
}

fn variance(cfg: &StudyConfig) -> Result<StudyOutput> {
    let (mdp, pol) = setup()?;
    let (u, w) = (&cfg.utility, &cfg.weight);
    let v = FnValue(tabular_state_baseline);
    let variant = |variant| StudyEstimator::Variant {
        variant,
        static_baseline: StaticBaseline::BatchMean,
        gamma: 1.0,
        lambda_gae: 0.95,
        value: Some(&v),
    };
    let estimators = [
        ("rank_weighted", StudyEstimator::Ranked { baseline: 0.0 }),
        ("naive", StudyEstimator::Naive),
        ("base", variant(EstimatorVariant::Base)),
        ("utg", variant(EstimatorVariant::Utg)),
        ("gae", variant(EstimatorVariant::Gae)),
    ];
    let mut out = StudyOutput {
        header: ["estimator", "n", "batches", "trace_variance", "rel_l2", "cosine"].map(String::from).to_vec(),
        rows: Vec::new(),
        verdicts: Vec::new(),
    };
    let mut tv = Vec::new();
    for (name, est) in estimators {
        let row = bias_variance_study(&mdp, &pol, u, w, est, &[cfg.n], cfg.batches, cfg.seed)?.remove(0);
        tv.push(row.trace_variance);
        out.rows.push(vec![
            name.into(),
            row.n.to_string(),
            row.batches.to_string(),
            row.trace_variance.to_string(),
            row.rel_l2.to_string(),
            row.cosine.to_string(),
        ]);
    }
    out.verdicts.push(Verdict {
        name: "rank-weighted trace variance <= naive".into(),
        passed: tv[0] <= tv[1],
        detail: format!("{:.5} vs {:.5}", tv[0], tv[1]),
    });
    Ok(out)
}

fn crossterm(cfg: &StudyConfig) -> Result<StudyOutput> {
    let (mdp, pol) = setup()?;
    let z = cross_term_study(&mdp, &pol, &cfg.utility, cfg.pairs, cfg.seed)?;
    Ok(StudyOutput {
        header: vec!["component".into(), "z".into()],
        rows: z.iter().enumerate().map(|(i, v)| vec![i.to_string(), v.to_string()]).collect(),
        verdicts: vec![Verdict {
            name: format!("cross terms zero-mean over {} pairs", cfg.pairs),
            passed: max_abs(&z) < cfg.z_max,
            detail: format!("max |z| = {:.3}", max_abs(&z)),
        }],
    })
}

fn gradcheck(cfg: &StudyConfig) -> Result<StudyOutput> {
    let checks = gradient_check_suite(cfg.gradcheck_seeds)?;
    let mut verdicts = Vec::new();
    for op in ["mlp", "clipped_logprob", "surrogate"] {
        let worst = checks.iter().filter(|c| c.op == op).map(|c| c.max_rel_err).fold(0.0, f64::max);
        verdicts.push(Verdict {
            name: format!("{op} gradient matches finite differences"),
            passed: worst < cfg.gradcheck_tol,
            detail: format!("max rel err {worst:.3e} over {} seeds", cfg.gradcheck_seeds),
        });
    }
    Ok(StudyOutput {
        header: vec!["op".into(), "seed".into(), "max_rel_err".into()],
        rows: checks.iter().map(|c| vec![c.op.to_string(), c.seed.to_string(), c.max_rel_err.to_string()]).collect(),
        verdicts,
    })
}

pub fn run(kind: StudyKind, cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    match kind {
        StudyKind::Bias => bias(cfg),
        StudyKind::Variance => variance(cfg),
        StudyKind::Crossterm => crossterm(cfg),
        StudyKind::Gradcheck => gradcheck(cfg),
    }
}

/// Writes `study_<kind>.csv` and `study_<kind>_verdicts.txt` into `dir`.
pub fn write(kind: StudyKind, out: &StudyOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("study_{}.csv", kind.name()));
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(&out.header).map_err(csv_err)?;
    for r in &out.rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let vpath = dir.join(format!("study_{}_verdicts.txt", kind.name()));
    let text: String = out.verdicts.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(&vpath, text).map_err(|e| CliError::io(&vpath, e))
}
