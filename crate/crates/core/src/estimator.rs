//! Batch assembly, the rank-weighted clipped surrogate, KL-guarded policy
//! updates, and the cross-term-retaining estimator kept for studies.
//!
//! Every episode contributes its score-function terms scaled by its rank
//! coefficient. Within an episode, each step's term is scaled by an
//! advantage whose form depends on the [`EstimatorVariant`].

use crate::critics::ValueFn;
use crate::error::{check_len, Error, Result};
use crate::numeric::AdamConfig;
use crate::policy::{ActionDist, Policy};
use crate::risk::{raw_rank_multipliers, rank_coefficients_with, sort_permutation, CoefficientMode, RankCoefficients, WeightSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One collected trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub executed_actions: Vec<Vec<f64>>,
    /// Per-step rewards of the stream the objective is defined on.
    pub rewards: Vec<f64>,
    /// Per-step cost events.
    pub costs: Vec<f64>,
    /// Per-step utilities after temporal allocation.
    pub utilities: Vec<f64>,
    /// Undiscounted environment reward, before any cost penalty.
    pub env_return: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `r(tau)`.
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn cost_total(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn utility_total(&self) -> f64 {
        self.utilities.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::Empty("episode"));
        }
        check_len("episode observations", t, self.observations.len())?;
        check_len("episode raw actions", t, self.raw_actions.len())?;
        check_len("episode executed actions", t, self.executed_actions.len())?;
        check_len("episode costs", t, self.costs.len())?;
        check_len("episode utilities", t, self.utilities.len())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Whole-episode utility minus a static baseline.
    Base,
    /// Discounted utility-to-go minus a state-dependent baseline.
    Utg,
    /// Generalized advantage estimation on per-step utilities.
    Gae,
    /// GAE with clipped updates.
    #[default]
    Tr,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 4] = [Self::Base, Self::Utg, Self::Gae, Self::Tr];

    pub fn needs_critic(self) -> bool {
        !matches!(self, Self::Base)
    }

    pub fn clipped(self) -> bool {
        matches!(self, Self::Tr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Utg => "utg",
            Self::Gae => "gae",
            Self::Tr => "tr",
        }
    }
}

/// Constant subtracted from whole-episode utilities in the base variant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticBaseline {
    #[default]
    BatchMean,
    Fixed(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub variant: EstimatorVariant,
    pub weight: WeightSpec,
    pub coefficient_mode: CoefficientMode,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub static_baseline: StaticBaseline,
    pub normalize_advantages: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            variant: EstimatorVariant::Tr,
            weight: WeightSpec::Identity,
            coefficient_mode: CoefficientMode::Derivative,
            gamma: 0.99,
            lambda_gae: 0.95,
            static_baseline: StaticBaseline::BatchMean,
            normalize_advantages: false,
        }
    }
}

/// `u_hat_t = sum_{t' >= t} gamma^(t'-t) u_t'`.
pub fn utilities_to_go(utilities: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; utilities.len()];
    let mut acc = 0.0;
    for t in (0..utilities.len()).rev() {
        acc = utilities[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// GAE over per-step utilities; `values` carries one extra terminal entry.
pub fn gae_advantages(utilities: &[f64], values: &[f64], gamma: f64, lambda_gae: f64) -> Result<Vec<f64>> {
    check_len("gae values", utilities.len() + 1, values.len())?;
    let mut out = vec![0.0; utilities.len()];
    let mut acc = 0.0;
    for t in (0..utilities.len()).rev() {
        let delta = utilities[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda_gae * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Episodes with rank coefficients, advantages, and frozen log-probs.
#[derive(Debug, Clone)]
pub struct Batch {
    pub episodes: Vec<Episode>,
    pub rank: RankCoefficients,
    /// Normalized coefficient of each episode, in collection order.
    pub coefficients: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
    pub old_log_probs: Vec<Vec<f64>>,
    pub clip: bool,
}

impl Batch {
    pub fn n(&self) -> usize {
        self.episodes.len()
    }

    pub fn steps(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        self.episodes.iter().flat_map(|e| e.observations.iter().cloned()).collect()
    }
}

pub fn build_batch<P: Policy>(
    episodes: Vec<Episode>,
    opts: &BatchOptions,
    critic: Option<&dyn ValueFn>,
    policy: &P,
) -> Result<Batch> {
    if episodes.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: episodes.len(),
        });
    }
    for e in &episodes {
        e.validate()?;
    }
    if opts.variant.needs_critic() && critic.is_none() {
        return Err(Error::Config(format!(
            "estimator variant '{}' requires a value function",
            opts.variant.name()
        )));
    }
    let mut advantages: Vec<Vec<f64>> = match opts.variant {
        EstimatorVariant::Base => {
            let totals: Vec<f64> = episodes.iter().map(Episode::utility_total).collect();
            let b = match opts.static_baseline {
                StaticBaseline::BatchMean => totals.iter().sum::<f64>() / totals.len() as f64,
                StaticBaseline::Fixed(b) => b,
                StaticBaseline::None => 0.0,
            };
            episodes.iter().zip(&totals).map(|(e, u)| vec![u - b; e.len()]).collect()
        }
        EstimatorVariant::Utg | EstimatorVariant::Gae | EstimatorVariant::Tr => {
            let v = critic.expect("checked above");
            episodes
                .par_iter()
                .map(|e| {
                    let values: Vec<f64> = e.observations.iter().map(|o| v.value(o)).collect::<Result<_>>()?;
                    if opts.variant == EstimatorVariant::Utg {
                        let utg = utilities_to_go(&e.utilities, opts.gamma);
                        Ok(utg.iter().zip(&values).map(|(u, v)| u - v).collect())
                    } else {
                        let mut boot = values;
                        boot.push(0.0);
                        gae_advantages(&e.utilities, &boot, opts.gamma, opts.lambda_gae)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    if advantages.iter().flatten().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantages"));
    }
    if opts.normalize_advantages {
        let n = advantages.iter().map(Vec::len).sum::<usize>() as f64;
        let mean = advantages.iter().flatten().sum::<f64>() / n;
        let var = advantages.iter().flatten().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-8);
        for a in advantages.iter_mut().flatten() {
            *a = (*a - mean) / sd;
        }
    }
    let returns: Vec<f64> = episodes.iter().map(Episode::ret).collect();
    let rank = rank_coefficients_with(&returns, &opts.weight, opts.coefficient_mode)?;
    let coefficients = rank.by_episode();
    let old_log_probs = episodes
        .par_iter()
        .map(|e| {
            e.observations
                .iter()
                .zip(e.raw_actions.iter().zip(&e.executed_actions))
                .map(|(o, (raw, exec))| policy.dist(o)?.log_prob(policy.scored_action(raw, exec)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Batch {
        episodes,
        rank,
        coefficients,
        advantages,
        old_log_probs,
        clip: opts.variant.clipped(),
    })
}

/// Surrogate value, its gradient (ascent direction), and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    pub objective: f64,
    pub grad: Vec<f64>,
    /// Fraction of steps whose clipped branch was active.
    pub clip_frac: f64,
    /// Steps dropped because the probability ratio was not finite.
    pub excluded: usize,
    /// Mean `KL(old || current)` over steps, when old distributions were given.
    pub kl: f64,
}

fn surrogate_impl<P: Policy>(
    batch: &Batch,
    policy: &P,
    eps_clip: f64,
    old: Option<&[P::Dist]>,
) -> Result<SurrogateEval> {
    let n = batch.n() as f64;
    let mut grad = vec![0.0; policy.params().len()];
    let mut objective = 0.0;
    let mut clipped = 0usize;
    let mut excluded = 0usize;
    let mut kl = 0.0;
    let mut k = 0usize;
    for (i, e) in batch.episodes.iter().enumerate() {
        let c = batch.coefficients[i];
        for t in 0..e.len() {
            let a = batch.advantages[i][t];
            let lp_old = batch.old_log_probs[i][t];
            let action = policy.scored_action(&e.raw_actions[t], &e.executed_actions[t]);
            let mut term = 0.0;
            let (_, dist) = policy.log_prob_with_grad(&e.observations[t], action, &mut grad, |lp| {
                let ratio = (lp - lp_old).exp();
                if !ratio.is_finite() || !lp.is_finite() {
                    excluded += 1;
                    return 0.0;
                }
                let saturated = batch.clip && ((a > 0.0 && ratio > 1.0 + eps_clip) || (a < 0.0 && ratio < 1.0 - eps_clip));
                if saturated {
                    term = (ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip).ln() + lp_old) * a;
                    clipped += 1;
                    0.0
                } else {
                    term = lp * a;
                    c * a / n
                }
            })?;
            objective += c * term / n;
            if let Some(old) = old {
                kl += old[k].kl(&dist);
            }
            k += 1;
        }
    }
    let steps = k.max(1) as f64;
    Ok(SurrogateEval {
        objective,
        grad,
        clip_frac: clipped as f64 / steps,
        excluded,
        kl: if old.is_some() { kl / steps } else { 0.0 },
    })
}

/// `(1/N) sum_i c_i sum_t L_clip(log pi(a|s), A_t)` and its gradient.
pub fn surrogate_loss<P: Policy>(batch: &Batch, policy: &P, eps_clip: f64) -> Result<SurrogateEval> {
    surrogate_impl(batch, policy, eps_clip, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOptions {
    pub max_steps: usize,
    pub eps_clip: f64,
    pub kl_stop: f64,
    pub adam: AdamConfig,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self {
            max_steps: 80,
            eps_clip: 0.2,
            kl_stop: 0.015,
            adam: AdamConfig::with_lr(3e-4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateDiagnostics {
    pub steps_taken: usize,
    /// KL between the batch policy and the returned policy.
    pub kl_final: f64,
    pub clip_frac: f64,
    pub excluded: usize,
    /// Surrogate value before each accepted step, then after the last one.
    pub objectives: Vec<f64>,
}

/// Up to `max_steps` Adam ascent steps on the surrogate, stopping before a
/// step once the KL from the batch policy exceeds `kl_stop`.
pub fn policy_update<P: Policy>(batch: &Batch, policy: &mut P, opts: &UpdateOptions) -> Result<UpdateDiagnostics> {
    if opts.max_steps == 0 {
        return Err(Error::InvalidArgument("policy update needs at least one step".into()));
    }
    let old: Vec<P::Dist> = batch
        .episodes
        .iter()
        .flat_map(|e| e.observations.iter())
        .map(|o| policy.dist(o))
        .collect::<Result<_>>()?;
    let mut diag = UpdateDiagnostics::default();
    let mut last = None;
    for _ in 0..opts.max_steps {
        let eval = surrogate_impl(batch, policy, opts.eps_clip, Some(&old))?;
        diag.objectives.push(eval.objective);
        diag.clip_frac = eval.clip_frac;
        diag.excluded += eval.excluded;
        if eval.kl > opts.kl_stop {
            diag.kl_final = eval.kl;
            return Ok(diag);
        }
        let descent: Vec<f64> = eval.grad.iter().map(|g| -g).collect();
        policy.params_mut().adam_step(&descent, &opts.adam)?;
        diag.steps_taken += 1;
        last = Some(());
    }
    if last.is_some() {
        let eval = surrogate_impl(batch, policy, opts.eps_clip, Some(&old))?;
        diag.objectives.push(eval.objective);
        diag.kl_final = eval.kl;
    }
    Ok(diag)
}

/// Summed score vector `sum_t grad log pi(a_t | s_t)` of each episode.
pub fn episode_scores<P: Policy>(episodes: &[Episode], policy: &P) -> Result<Vec<Vec<f64>>> {
    episodes
        .par_iter()
        .map(|e| {
            let mut g = vec![0.0; policy.params().len()];
            for t in 0..e.len() {
                let action = policy.scored_action(&e.raw_actions[t], &e.executed_actions[t]);
                policy.log_prob_with_grad(&e.observations[t], action, &mut g, |_| 1.0)?;
            }
            Ok(g)
        })
        .collect()
}

fn check_score_inputs(returns: &[f64], utilities: &[f64], scores: &[Vec<f64>]) -> Result<usize> {
    if returns.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: returns.len(),
        });
    }
    check_len("episode utilities", returns.len(), utilities.len())?;
    check_len("episode scores", returns.len(), scores.len())?;
    Ok(scores[0].len())
}

/// Whole-episode rank-weighted estimate
/// `(1/N) sum_i c_i (U_i - b) S_i` with batch-normalized coefficients.
pub fn rank_weighted_estimate(
    returns: &[f64],
    utilities: &[f64],
    scores: &[Vec<f64>],
    weight: &WeightSpec,
    baseline: f64,
) -> Result<Vec<f64>> {
    let dim = check_score_inputs(returns, utilities, scores)?;
    let rank = rank_coefficients_with(returns, weight, CoefficientMode::Derivative)?;
    let n = returns.len() as f64;
    let mut out = vec![0.0; dim];
    for (k, &i) in rank.order.iter().enumerate() {
        let s = rank.coefficients[k] * (utilities[i] - baseline) / n;
        for (o, g) in out.iter_mut().zip(&scores[i]) {
            *o += s * g;
        }
    }
    Ok(out)
}

/// Estimate that keeps every cross-trajectory term: each sorted episode's
/// utility multiplies `w'(i/N)` times the mean score of episodes ranked at
/// or below it plus `w'((i-1)/N)` times the mean score of those ranked at or
/// above it. Uses the same clamped derivatives and normalization constant
/// as [`rank_weighted_estimate`], so the two differ by exactly the cross terms.
pub fn naive_estimate(returns: &[f64], utilities: &[f64], scores: &[Vec<f64>], weight: &WeightSpec) -> Result<Vec<f64>> {
    let dim = check_score_inputs(returns, utilities, scores)?;
    let n = returns.len();
    let nf = n as f64;
    let order = sort_permutation(returns);
    let sides: Vec<_> = order.iter().map(|&i| weight.side(returns[i])).collect();
    let eps = 1.0 / (2.0 * nf);
    let clamp = |p: f64| p.clamp(eps, 1.0 - eps);
    let raw = raw_rank_multipliers(weight, &sides, CoefficientMode::Derivative)?;
    let norm = raw.iter().sum::<f64>() / nf;
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument(format!("rank coefficients have non-positive mean {norm}")));
    }
    // prefix[k] = sum of sorted scores 0..k, suffix[k] = sum k..n
    let mut prefix = vec![vec![0.0; dim]; n + 1];
    for k in 0..n {
        for d in 0..dim {
            prefix[k + 1][d] = prefix[k][d] + scores[order[k]][d];
        }
    }
    let mut out = vec![0.0; dim];
    for k in 0..n {
        let i = (k + 1) as f64;
        let u = utilities[order[k]];
        let w_hi = weight.deriv_on(clamp(i / nf), sides[k])?;
        let w_lo = weight.deriv_on(clamp((i - 1.0) / nf), sides[k])?;
        for d in 0..dim {
            let below = prefix[k + 1][d];
            let above = prefix[n][d] - prefix[k][d];
            out[d] += u * (w_hi * below + w_lo * above) / (nf * norm);
        }
    }
    Ok(out)
}
