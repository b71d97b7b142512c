//! `eval`: roll out checkpointed policies and score their return
//! distributions under several weight functions.

use crate::checkpoint::Checkpoint;
use crate::config::weight_label;
use crate::error::{CliError, Result};
use riskgrad::envs::EnvConfig;
use riskgrad::policy::{ActionDist, AnyDist, AnyPolicy, Policy};
use riskgrad::risk::{objective_estimate, UtilitySpec, WeightSpec};
use riskgrad::rng::{derive_seed, stream_rng, Stream};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub episodes: usize,
    pub sampling: bool,
    pub seed: u64,
    /// Overrides the checkpoint's `eval_weights`.
    pub weights: Option<Vec<WeightSpec>>,
    /// Overrides the checkpoint's environment.
    pub env: Option<EnvConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub label: String,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub objectives: Vec<(String, f64)>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn check_compatible(policy: &AnyPolicy, env: &EnvConfig) -> Result<()> {
    let spec = env.spec()?;
    let (obs, act) = match policy {
        AnyPolicy::Gaussian(p) => (p.obs_dim(), p.act_dim()),
        AnyPolicy::Categorical(p) => (p.obs_dim(), p.n_actions),
    };
    let env_act = if spec.action_bound.is_some() { spec.act_dim } else { spec.n_actions };
    if obs != spec.obs_dim || act != env_act {
        return Err(CliError::Config(format!(
            "checkpoint/env mismatch: policy has obs {obs}, actions {act}; env '{}' has obs {}, actions {env_act}",
            spec.name, spec.obs_dim
        )));
    }
    Ok(())
}

fn greedy(dist: &AnyDist, policy: &AnyPolicy) -> Vec<f64> {
    match (dist, policy) {
        (AnyDist::Gaussian(d), AnyPolicy::Gaussian(p)) => p.bounds.clip(&d.mode()),
        _ => dist.mode(),
    }
}

pub fn evaluate(ckpt: &Checkpoint, label: &str, opts: &EvalOptions) -> Result<EvalSummary> {
    if opts.episodes == 0 {
        return Err(CliError::Config("episodes must be in [1, inf), got 0".into()));
    }
    let env_cfg = opts.env.clone().unwrap_or_else(|| ckpt.config.train.env.clone());
    env_cfg.validate()?;
    let policy = &ckpt.state.policy;
    check_compatible(policy, &env_cfg)?;
    let weights = opts.weights.clone().unwrap_or_else(|| ckpt.config.eval_weights.clone());
    let mut returns = Vec::with_capacity(opts.episodes);
    let mut costs = Vec::with_capacity(opts.episodes);
    for i in 0..opts.episodes as u64 {
        let mut env = env_cfg.build()?;
        let mut rng = stream_rng(opts.seed, 0, i, Stream::Action);
        let mut obs = env.reset(derive_seed(opts.seed, 0, i, Stream::Env))?;
        let (mut ret, mut cost) = (0.0, 0.0);
        loop {
            let dist = policy.dist(&obs)?;
            let action = if opts.sampling { dist.sample(&mut rng).1 } else { greedy(&dist, policy) };
            let out = env.step(&action)?;
            ret += out.reward;
            cost += out.cost;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(ret);
        costs.push(cost);
    }
    let (mean_return, std_return) = mean_std(&returns);
    let (mean_cost, std_cost) = mean_std(&costs);
    let objectives = weights
        .iter()
        .map(|w| Ok((weight_label(w), objective_estimate(&returns, &UtilitySpec::Identity, w)?)))
        .collect::<Result<_>>()?;
    Ok(EvalSummary {
        label: label.to_string(),
        episodes: opts.episodes,
        mean_return,
        std_return,
        mean_cost,
        std_cost,
        objectives,
    })
}

/// One row per evaluated checkpoint, one column per metric.
pub fn write_matrix(path: &Path, rows: &[EvalSummary]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![
        "checkpoint".to_string(),
        "episodes".into(),
        "mean_return".into(),
        "std_return".into(),
        "mean_cost".into(),
        "std_cost".into(),
    ];
    if let Some(first) = rows.first() {
        header.extend(first.objectives.iter().map(|(k, _)| format!("obj_{k}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.episodes.to_string(),
            r.mean_return.to_string(),
            r.std_return.to_string(),
            r.mean_cost.to_string(),
            r.std_cost.to_string(),
        ];
        rec.extend(r.objectives.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
