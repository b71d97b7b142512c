//! Exact objective values and gradients on enumerable tabular MDPs, a
//! central-difference checker, and Monte-Carlo studies of the sampled
//! gradient estimators against the exact gradient.
//!
//! For a discrete return distribution with sorted distinct atoms `r_k` and
//! CDF values `P_k`, the objective is `sum_k u(r_k) [w(P_k) - w(P_{k-1})]`.
//! Its gradient follows from `grad P_k = sum_{tau: r(tau) <= r_k} p(tau) grad log p(tau)`.

use crate::critics::ValueFn;
use crate::envs::{enumerate, Path, TabularMDP};
use crate::error::{Error, Result};
use crate::estimator::{
    build_batch, naive_estimate, rank_weighted_estimate, surrogate_loss, BatchOptions, Episode, EstimatorVariant,
    StaticBaseline,
};
use crate::numeric::{mlp_backward, mlp_forward, MlpSpec};
use crate::policy::{clipped_logprob, logprob_grad, ActionDist, Bounds, CategoricalPolicy, GaussianPolicy, Policy};
use crate::risk::{UtilitySpec, WeightSpec};
use crate::rng::{derive_seed, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Sorted distinct returns with their probabilities and CDF values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub returns: Vec<f64>,
    pub probs: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl ExactDistribution {
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("return distribution"));
        }
        let mut sorted = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut returns: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (r, p) in sorted {
            if p < 0.0 {
                return Err(Error::ProbabilityOutOfRange(p));
            }
            if returns.last() == Some(&r) {
                *probs.last_mut().expect("paired") += p;
            } else {
                returns.push(r);
                probs.push(p);
            }
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        if (acc - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("atom probabilities sum to {acc}")));
        }
        // Pin the last value so w(1) is evaluated exactly.
        *cdf.last_mut().expect("non-empty") = 1.0;
        Ok(Self { returns, probs, cdf })
    }

    pub fn from_paths(paths: &[Path]) -> Result<Self> {
        let atoms: Vec<(f64, f64)> = paths.iter().map(|p| (p.ret, p.probability)).collect();
        Self::from_atoms(&atoms)
    }

    pub fn objective(&self, u: &UtilitySpec, w: &WeightSpec) -> Result<f64> {
        let mut total = 0.0;
        let mut prev = 0.0;
        for (r, p) in self.returns.iter().zip(&self.cdf) {
            let side = w.side(*r);
            total += u.eval(*r) * (w.eval_on(*p, side)? - w.eval_on(prev, side)?);
            prev = *p;
        }
        Ok(total)
    }

    /// Draws `n` returns by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                let k = self.cdf.partition_point(|c| *c <= x).min(self.returns.len() - 1);
                self.returns[k]
            })
            .collect()
    }
}

pub fn exact_distribution(mdp: &TabularMDP, policy: &CategoricalPolicy) -> Result<ExactDistribution> {
    ExactDistribution::from_paths(&enumerate(mdp, policy)?)
}

pub fn exact_objective(mdp: &TabularMDP, policy: &CategoricalPolicy, u: &UtilitySpec, w: &WeightSpec) -> Result<f64> {
    exact_distribution(mdp, policy)?.objective(u, w)
}

/// Brute-force CDF values `P(r)` and `P(r-)` of each path's return.
fn path_cdfs(paths: &[Path]) -> Vec<(f64, f64)> {
    paths
        .iter()
        .map(|p| {
            let mut at = 0.0;
            let mut below = 0.0;
            for q in paths {
                if q.ret <= p.ret {
                    at += q.probability;
                }
                if q.ret < p.ret {
                    below += q.probability;
                }
            }
            (at, below)
        })
        .collect()
}

/// Objective summed path by path without grouping equal returns: each
/// path takes its probability share of its atom's weight increment.
pub fn exact_objective_ungrouped(
    mdp: &TabularMDP,
    policy: &CategoricalPolicy,
    u: &UtilitySpec,
    w: &WeightSpec,
) -> Result<f64> {
    let paths = enumerate(mdp, policy)?;
    let cdfs = path_cdfs(&paths);
    let mut total = 0.0;
    for (p, (at, below)) in paths.iter().zip(cdfs) {
        let side = w.side(p.ret);
        let at = if at > 1.0 - 1e-13 { 1.0 } else { at };
        let inc = w.eval_on(at, side)? - w.eval_on(below, side)?;
        total += p.probability * u.eval(p.ret) * inc / (at - below);
    }
    Ok(total)
}

/// `grad log p(tau)` of each path under a tabular policy.
pub fn path_scores(mdp: &TabularMDP, policy: &CategoricalPolicy, paths: &[Path]) -> Result<Vec<Vec<f64>>> {
    let table = score_table(mdp, policy)?;
    Ok(paths
        .iter()
        .map(|p| {
            let mut g = vec![0.0; policy.params().len()];
            for (s, a) in p.states.iter().zip(&p.actions) {
                for (x, y) in g.iter_mut().zip(&table[*s][*a]) {
                    *x += y;
                }
            }
            g
        })
        .collect())
}

fn score_table(mdp: &TabularMDP, policy: &CategoricalPolicy) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| logprob_grad(policy, &mdp.one_hot(s), &[a as f64]))
                .collect()
        })
        .collect()
}

fn check_kink(w: &WeightSpec, p: f64) -> Result<()> {
    if w.kinks().iter().any(|k| (p - k).abs() < 1e-12) {
        return Err(Error::Kink(p));
    }
    Ok(())
}

fn grad_term(w: &WeightSpec, side: crate::risk::Side, p: f64) -> Result<Option<f64>> {
    // grad P vanishes when P is pinned at 0 or 1.
    if p <= 0.0 || p >= 1.0 - 1e-13 {
        return Ok(None);
    }
    check_kink(w, p)?;
    Ok(Some(w.deriv_on(p, side)?))
}

/// Exact gradient of the objective over the policy logits.
pub fn exact_gradient(mdp: &TabularMDP, policy: &CategoricalPolicy, u: &UtilitySpec, w: &WeightSpec) -> Result<Vec<f64>> {
    let paths = enumerate(mdp, policy)?;
    let scores = path_scores(mdp, policy, &paths)?;
    let dim = policy.params().len();
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by(|a, b| paths[*a].ret.total_cmp(&paths[*b].ret));
    // Walk atoms in ascending order, carrying P and grad P.
    let mut out = vec![0.0; dim];
    let mut p_prev = 0.0;
    let mut g_prev = vec![0.0; dim];
    let mut k = 0;
    while k < order.len() {
        let r = paths[order[k]].ret;
        let mut p_cur = p_prev;
        let mut g_cur = g_prev.clone();
        while k < order.len() && paths[order[k]].ret == r {
            let idx = order[k];
            p_cur += paths[idx].probability;
            for (g, s) in g_cur.iter_mut().zip(&scores[idx]) {
                *g += paths[idx].probability * s;
            }
            k += 1;
        }
        let side = w.side(r);
        let ur = u.eval(r);
        if let Some(d) = grad_term(w, side, p_cur)? {
            for (o, g) in out.iter_mut().zip(&g_cur) {
                *o += ur * d * g;
            }
        }
        if let Some(d) = grad_term(w, side, p_prev)? {
            for (o, g) in out.iter_mut().zip(&g_prev) {
                *o -= ur * d * g;
            }
        }
        p_prev = p_cur;
        g_prev = g_cur;
    }
    Ok(out)
}

/// Same gradient assembled path by path with brute-force CDF sums.
pub fn exact_gradient_ungrouped(
    mdp: &TabularMDP,
    policy: &CategoricalPolicy,
    u: &UtilitySpec,
    w: &WeightSpec,
) -> Result<Vec<f64>> {
    let paths = enumerate(mdp, policy)?;
    let scores = path_scores(mdp, policy, &paths)?;
    let dim = policy.params().len();
    let mut out = vec![0.0; dim];
    for p in &paths {
        let mut at = 0.0;
        let mut below = 0.0;
        let mut g_at = vec![0.0; dim];
        let mut g_below = vec![0.0; dim];
        for (j, q) in paths.iter().enumerate() {
            if q.ret <= p.ret {
                at += q.probability;
                for (g, s) in g_at.iter_mut().zip(&scores[j]) {
                    *g += q.probability * s;
                }
            }
            if q.ret < p.ret {
                below += q.probability;
                for (g, s) in g_below.iter_mut().zip(&scores[j]) {
                    *g += q.probability * s;
                }
            }
        }
        let share = p.probability / (at - below);
        let side = w.side(p.ret);
        let ur = u.eval(p.ret);
        if let Some(d) = grad_term(w, side, at)? {
            for (o, g) in out.iter_mut().zip(&g_at) {
                *o += share * ur * d * g;
            }
        }
        if let Some(d) = grad_term(w, side, below)? {
            for (o, g) in out.iter_mut().zip(&g_below) {
                *o -= share * ur * d * g;
            }
        }
    }
    Ok(out)
}

/// Central differences of `f` at `x`.
pub fn finite_diff<F: Fn(&[f64]) -> Result<f64>>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite difference step must be > 0, got {step}")));
    }
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let up = f(&xp)?;
        xp[i] = x[i] - step;
        let dn = f(&xp)?;
        xp[i] = x[i];
        if !up.is_finite() || !dn.is_finite() {
            return Err(Error::NonFinite("finite difference objective"));
        }
        out.push((up - dn) / (2.0 * step));
    }
    Ok(out)
}

/// Objective as a function of the flat tabular logits.
pub fn objective_at(mdp: &TabularMDP, template: &CategoricalPolicy, u: &UtilitySpec, w: &WeightSpec, logits: &[f64]) -> Result<f64> {
    let mut p = template.clone();
    p.params_mut().values_mut().copy_from_slice(logits);
    exact_objective(mdp, &p, u, w)
}

/// A trajectory sampled from a tabular MDP with its summed score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub ret: f64,
    pub score: Vec<f64>,
}

/// Fast trajectory sampler for a fixed tabular policy.
#[derive(Debug, Clone)]
pub struct PathSampler {
    mdp: TabularMDP,
    probs: Vec<Vec<f64>>,
    scores: Vec<Vec<Vec<f64>>>,
    policy: CategoricalPolicy,
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

impl PathSampler {
    pub fn new(mdp: &TabularMDP, policy: &CategoricalPolicy) -> Result<Self> {
        mdp.validate()?;
        let probs = (0..mdp.n_states)
            .map(|s| policy.dist(&mdp.one_hot(s)).map(|d| d.probs))
            .collect::<Result<_>>()?;
        Ok(Self {
            mdp: mdp.clone(),
            probs,
            scores: score_table(mdp, policy)?,
            policy: policy.clone(),
        })
    }

    pub fn policy(&self) -> &CategoricalPolicy {
        &self.policy
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledPath {
        let dim = self.policy.params().len();
        let mut s = draw(&self.mdp.initial, rng);
        let mut out = SampledPath {
            states: Vec::with_capacity(self.mdp.horizon),
            actions: Vec::with_capacity(self.mdp.horizon),
            rewards: Vec::with_capacity(self.mdp.horizon),
            ret: 0.0,
            score: vec![0.0; dim],
        };
        for _ in 0..self.mdp.horizon {
            let a = draw(&self.probs[s], rng);
            out.states.push(s);
            out.actions.push(a);
            out.rewards.push(self.mdp.reward[s][a]);
            for (g, x) in out.score.iter_mut().zip(&self.scores[s][a]) {
                *g += x;
            }
            s = draw(&self.mdp.transition[s][a], rng);
        }
        out.ret = out.rewards.iter().sum();
        out
    }

    /// The path as an [`Episode`] with one-hot observations.
    pub fn to_episode(&self, path: &SampledPath, u: &UtilitySpec) -> Episode {
        let obs: Vec<Vec<f64>> = path.states.iter().map(|s| self.mdp.one_hot(*s)).collect();
        let acts: Vec<Vec<f64>> = path.actions.iter().map(|a| vec![*a as f64]).collect();
        Episode {
            observations: obs,
            raw_actions: acts.clone(),
            executed_actions: acts,
            rewards: path.rewards.clone(),
            costs: path
                .states
                .iter()
                .zip(&path.actions)
                .map(|(s, a)| self.mdp.cost[*s][*a])
                .collect(),
            utilities: u.allocate(&path.rewards),
            env_return: path.ret,
        }
    }
}

/// Which sampled gradient estimator a study evaluates.
#[derive(Clone, Copy)]
pub enum StudyEstimator<'a> {
    /// Rank-weighted whole-episode form with a fixed static baseline.
    Ranked { baseline: f64 },
    /// Cross-term-retaining form.
    Naive,
    /// Full batch pipeline of an estimator variant, with an optional value
    /// function for the variants that need one.
    Variant {
        variant: EstimatorVariant,
        static_baseline: StaticBaseline,
        gamma: f64,
        lambda_gae: f64,
        value: Option<&'a dyn ValueFn>,
    },
}

/// Per-`N` outcome of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub batches: usize,
    pub mean: Vec<f64>,
    /// Standard error of each mean component.
    pub se: Vec<f64>,
    /// Sum of per-component sample variances of the estimate.
    pub trace_variance: f64,
    pub cosine: f64,
    pub rel_l2: f64,
}

/// One sampled batch gradient.
pub fn sampled_gradient<R: Rng + ?Sized>(
    sampler: &PathSampler,
    u: &UtilitySpec,
    w: &WeightSpec,
    estimator: StudyEstimator<'_>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let paths: Vec<SampledPath> = (0..n).map(|_| sampler.sample(rng)).collect();
    let returns: Vec<f64> = paths.iter().map(|p| p.ret).collect();
    match estimator {
        StudyEstimator::Ranked { baseline } => {
            let utils: Vec<f64> = returns.iter().map(|r| u.eval(*r)).collect();
            let scores: Vec<Vec<f64>> = paths.into_iter().map(|p| p.score).collect();
            rank_weighted_estimate(&returns, &utils, &scores, w, baseline)
        }
        StudyEstimator::Naive => {
            let utils: Vec<f64> = returns.iter().map(|r| u.eval(*r)).collect();
            let scores: Vec<Vec<f64>> = paths.into_iter().map(|p| p.score).collect();
            naive_estimate(&returns, &utils, &scores, w)
        }
        StudyEstimator::Variant {
            variant,
            static_baseline,
            gamma,
            lambda_gae,
            value,
        } => {
            let episodes: Vec<Episode> = paths.iter().map(|p| sampler.to_episode(p, u)).collect();
            let opts = BatchOptions {
                variant,
                weight: *w,
                gamma,
                lambda_gae,
                static_baseline,
                ..BatchOptions::default()
            };
            let batch = build_batch(episodes, &opts, value, sampler.policy())?;
            Ok(surrogate_loss(&batch, sampler.policy(), f64::INFINITY)?.grad)
        }
    }
}

/// Mean, standard error, and trace variance of `samples`.
pub fn summarize(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64) {
    let m = samples.len() as f64;
    let dim = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (a, b) in mean.iter_mut().zip(s) {
            *a += b / m;
        }
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for d in 0..dim {
            var[d] += (s[d] - mean[d]).powi(2) / (m - 1.0).max(1.0);
        }
    }
    let se = var.iter().map(|v| (v / m).sqrt()).collect();
    (mean, se, var.iter().sum())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn rel_l2(a: &[f64], reference: &[f64]) -> f64 {
    let diff = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / reference.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs `batches` independent batches per `N` and compares the mean
/// estimate with the exact gradient.
#[allow(clippy::too_many_arguments)]
pub fn bias_variance_study(
    mdp: &TabularMDP,
    policy: &CategoricalPolicy,
    u: &UtilitySpec,
    w: &WeightSpec,
    estimator: StudyEstimator<'_>,
    ns: &[usize],
    batches: usize,
    seed: u64,
) -> Result<Vec<StudyRow>> {
    if batches < 2 {
        return Err(Error::InvalidArgument("a study needs at least two batches".into()));
    }
    let exact = exact_gradient(mdp, policy, u, w)?;
    let sampler = PathSampler::new(mdp, policy)?;
    ns.iter()
        .map(|&n| {
            let samples: Vec<Vec<f64>> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n as u64, b as u64, Stream::Study));
                    sampled_gradient(&sampler, u, w, estimator, n, &mut rng)
                })
                .collect::<Result<_>>()?;
            let (mean, se, trace_variance) = summarize(&samples);
            Ok(StudyRow {
                n,
                batches,
                cosine: cosine(&mean, &exact),
                rel_l2: rel_l2(&mean, &exact),
                mean,
                se,
                trace_variance,
            })
        })
        .collect()
}

/// Cross-trajectory terms `u(r(tau_i)) grad log p(tau_j)` over `pairs`
/// independent pairs `i != j`. Returns per-component z-scores of the mean.
pub fn cross_term_study(
    mdp: &TabularMDP,
    policy: &CategoricalPolicy,
    u: &UtilitySpec,
    pairs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = PathSampler::new(mdp, policy)?;
    let samples: Vec<Vec<f64>> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, k as u64, Stream::Study));
            let a = sampler.sample(&mut rng);
            let b = sampler.sample(&mut rng);
            let ua = u.eval(a.ret);
            b.score.iter().map(|s| ua * s).collect()
        })
        .collect();
    let (mean, se, _) = summarize(&samples);
    Ok(mean.iter().zip(&se).map(|(m, s)| if *s > 0.0 { m / s } else { 0.0 }).collect())
}

/// Paired comparison of two estimators on identical path samples: per
/// component z-scores of the mean difference, over `batches` batches of `n`.
#[allow(clippy::too_many_arguments)]
pub fn paired_difference_study(
    mdp: &TabularMDP,
    policy: &CategoricalPolicy,
    u: &UtilitySpec,
    w: &WeightSpec,
    a: StudyEstimator<'_>,
    b: StudyEstimator<'_>,
    n: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if batches < 2 {
        return Err(Error::InvalidArgument("a study needs at least two batches".into()));
    }
    let sampler = PathSampler::new(mdp, policy)?;
    let diffs: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|k| {
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n as u64, k as u64, Stream::Study));
            let ga = sampled_gradient(&sampler, u, w, a, n, &mut rng.clone())?;
            let gb = sampled_gradient(&sampler, u, w, b, n, &mut rng.clone())?;
            Ok(ga.iter().zip(&gb).map(|(x, y)| x - y).collect())
        })
        .collect::<Result<_>>()?;
    let (mean, se, _) = summarize(&diffs);
    Ok(mean.iter().zip(&se).map(|(m, s)| if *s > 0.0 { m / s } else { 0.0 }).collect())
}

/// Worst finite-difference disagreement of one analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub op: &'static str,
    pub seed: u64,
    pub max_rel_err: f64,
}

/// Magnitudes below this are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn max_rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(GRADCHECK_FLOOR))
        .fold(0.0, f64::max)
}

/// Richardson-extrapolated central differences, fourth order in `step`.
pub fn finite_diff_richardson<F: Fn(&[f64]) -> Result<f64>>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let coarse = finite_diff(&f, x, step)?;
    let fine = finite_diff(&f, x, step / 2.0)?;
    Ok(fine.iter().zip(&coarse).map(|(a, b)| (4.0 * a - b) / 3.0).collect())
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Parameter and input gradients of a random MLP.
pub fn gradcheck_mlp(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0, Stream::Study));
    let input = rng.random_range(1..=5);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=6)).collect();
    let output = rng.random_range(1..=3);
    let spec = MlpSpec::new(input, hidden, output);
    let params = uniform_vec(&mut rng, spec.param_count(), -1.0, 1.0);
    let x = uniform_vec(&mut rng, input, -1.5, 1.5);
    let up = uniform_vec(&mut rng, output, -1.0, 1.0);
    let dot = |p: &[f64], x: &[f64]| -> Result<f64> {
        Ok(mlp_forward(&spec, p, x)?.iter().zip(&up).map(|(a, b)| a * b).sum())
    };
    let (g, dx) = mlp_backward(&spec, &params, &x, &up)?;
    let fd_p = finite_diff_richardson(|p| dot(p, &x), &params, 1e-3)?;
    let fd_x = finite_diff_richardson(|x| dot(&params, x), &x, 1e-3)?;
    Ok(GradCheck {
        op: "mlp",
        seed,
        max_rel_err: max_rel_err(&g, &fd_p).max(max_rel_err(&dx, &fd_x)),
    })
}

fn random_gaussian_policy(rng: &mut ChaCha8Rng) -> Result<GaussianPolicy> {
    let spec = MlpSpec::new(3, vec![4], 2);
    let mut policy = GaussianPolicy::new(spec, Bounds::symmetric(2, 1.0), true, rng)?;
    for v in policy.mean_params_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    for v in policy.log_std_mut() {
        *v = rng.random_range(-1.0..0.5);
    }
    Ok(policy)
}

fn with_params(policy: &GaussianPolicy, p: &[f64]) -> GaussianPolicy {
    let mut q = policy.clone();
    q.params_mut().values_mut().copy_from_slice(p);
    q
}

/// Clipped-action log-probability for interior, boundary, and mixed actions.
pub fn gradcheck_clipped_logprob(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 0, Stream::Study));
    let policy = random_gaussian_policy(&mut rng)?;
    let obs = uniform_vec(&mut rng, 3, -1.0, 1.0);
    let actions = [
        uniform_vec(&mut rng, 2, -0.95, 0.95),
        vec![-1.0, 1.0],
        vec![1.0, rng.random_range(-0.95..0.95)],
    ];
    let x = policy.params().values().to_vec();
    let mut worst: f64 = 0.0;
    for a in &actions {
        let g = logprob_grad(&policy, &obs, a)?;
        let fd = finite_diff_richardson(|p| clipped_logprob(&with_params(&policy, p), &obs, a), &x, 1e-3)?;
        worst = worst.max(max_rel_err(&g, &fd));
    }
    Ok(GradCheck {
        op: "clipped_logprob",
        seed,
        max_rel_err: worst,
    })
}

/// Clipped surrogate around a perturbed policy, kept away from clip kinks.
pub fn gradcheck_surrogate(seed: u64) -> Result<GradCheck> {
    const EPS: f64 = 0.2;
    const MARGIN: f64 = 5e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3, 0, Stream::Study));
    let old = random_gaussian_policy(&mut rng)?;
    let episodes: Vec<Episode> = (0..4)
        .map(|_| {
            let t = rng.random_range(2..=5);
            let mut e = Episode::default();
            for _ in 0..t {
                let o = uniform_vec(&mut rng, 3, -1.0, 1.0);
                let (raw, exec) = old.sample_action(&o, &mut rng)?;
                e.observations.push(o);
                e.raw_actions.push(raw);
                e.executed_actions.push(exec);
                e.rewards.push(rng.random_range(-1.0..2.0));
                e.costs.push(0.0);
            }
            e.utilities = e.rewards.clone();
            e.env_return = e.ret();
            Ok(e)
        })
        .collect::<Result<_>>()?;
    let value = crate::critics::FnValue(|o: &[f64]| 0.3 * o[0] - 0.2 * o[2]);
    let opts = BatchOptions {
        variant: EstimatorVariant::Tr,
        weight: WeightSpec::Wang { eta: 0.5 },
        gamma: 0.95,
        lambda_gae: 0.9,
        ..BatchOptions::default()
    };
    let batch = build_batch(episodes, &opts, Some(&value), &old)?;
    let base = old.params().values().to_vec();
    for _ in 0..200 {
        let x: Vec<f64> = base.iter().map(|v| v + rng.random_range(-0.15..0.15)).collect();
        let new = with_params(&old, &x);
        let mut safe = true;
        for (i, e) in batch.episodes.iter().enumerate() {
            for t in 0..e.len() {
                let lp = new.dist(&e.observations[t])?.log_prob(new.scored_action(&e.raw_actions[t], &e.executed_actions[t]))?;
                let ratio = (lp - batch.old_log_probs[i][t]).exp();
                safe &= (ratio - 1.0 - EPS).abs() > MARGIN && (ratio - 1.0 + EPS).abs() > MARGIN;
            }
        }
        if !safe {
            continue;
        }
        let g = surrogate_loss(&batch, &new, EPS)?.grad;
        let fd = finite_diff_richardson(|p| Ok(surrogate_loss(&batch, &with_params(&old, p), EPS)?.objective), &x, 1e-4)?;
        return Ok(GradCheck {
            op: "surrogate",
            seed,
            max_rel_err: max_rel_err(&g, &fd),
        });
    }
    Err(Error::InvalidArgument(format!("no kink-free perturbation found for seed {seed}")))
}

/// All gradient checks over `seeds` random instances each.
pub fn gradient_check_suite(seeds: u64) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for s in 0..seeds {
        out.push(gradcheck_mlp(s)?);
        out.push(gradcheck_clipped_logprob(s)?);
        out.push(gradcheck_surrogate(s)?);
    }
    Ok(out)
}
