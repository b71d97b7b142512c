//! Stochastic policies: a diagonal Gaussian with state-independent log
//! standard deviation, and a categorical policy over tabular or MLP logits.
//!
//! Actions are plain `Vec<f64>` values. A categorical action is a single
//! element holding the action index.
//!
//! When the clipped-action correction is on, a Gaussian action that sits on
//! a control bound is scored with the probability mass the Gaussian places
//! beyond that bound, instead of the density at the bound.

use crate::error::{check_len, Error, Result};
use crate::normal;
use crate::numeric::{mlp_backward_into, mlp_forward_trace, Block, MlpSpec, ParamSet};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Per-state action distribution.
pub trait ActionDist: Clone + Send + Sync {
    /// Returns `(raw, executed)`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>);
    /// Deterministic action (mean or argmax), already executable.
    fn mode(&self) -> Vec<f64>;
    fn log_prob(&self, action: &[f64]) -> Result<f64>;
    /// `KL(self || other)`.
    fn kl(&self, other: &Self) -> f64;
    fn entropy(&self) -> f64;
}

pub trait Policy: Clone + Send + Sync {
    type Dist: ActionDist;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn obs_dim(&self) -> usize;

    fn dist(&self, obs: &[f64]) -> Result<Self::Dist>;

    /// Computes `log pi(action | obs)`, then asks `scale` for a multiplier
    /// given that log-probability and accumulates `multiplier * grad log pi`
    /// into `grad`. A zero multiplier skips the backward pass.
    fn log_prob_with_grad<F>(&self, obs: &[f64], action: &[f64], grad: &mut [f64], scale: F) -> Result<(f64, Self::Dist)>
    where
        F: FnOnce(f64) -> f64;

    /// The action whose log-probability enters the gradient: the executed
    /// action when bounds are accounted for, the raw sample otherwise.
    fn scored_action<'a>(&self, raw: &'a [f64], executed: &'a [f64]) -> &'a [f64];

    fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(self.dist(obs)?.sample(rng))
    }

    /// Mean of `KL(old || self)` over observations.
    fn kl_from(&self, old: &Self, obs_batch: &[Vec<f64>]) -> Result<f64> {
        if obs_batch.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for obs in obs_batch {
            total += old.dist(obs)?.kl(&self.dist(obs)?);
        }
        Ok(total / obs_batch.len() as f64)
    }
}

/// Per-dimension `[lo, hi]` control bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self {
            lo: vec![-limit; dim],
            hi: vec![limit; dim],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::symmetric(dim, f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        check_len("bounds", self.lo.len(), self.hi.len())?;
        for (d, (lo, hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("bounds dimension {d}: lo {lo} must be < hi {hi}")));
            }
        }
        Ok(())
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    }
}

/// Diagonal Gaussian over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub bounds: Bounds,
    /// Score executed actions with boundary masses.
    pub clip_correction: bool,
}

/// Which piece of the clipped density an action falls on.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Interior,
    Lower,
    Upper,
}

impl DiagGaussian {
    fn piece(&self, d: usize, a: f64) -> Result<Piece> {
        let (lo, hi) = (self.bounds.lo[d], self.bounds.hi[d]);
        if !self.clip_correction {
            return Ok(Piece::Interior);
        }
        if a < lo || a > hi || a.is_nan() {
            return Err(Error::ActionOutOfBounds { dim: d, value: a, lo, hi });
        }
        Ok(if a == lo {
            Piece::Lower
        } else if a == hi {
            Piece::Upper
        } else {
            Piece::Interior
        })
    }

    /// Log-probability plus its partials in `mean` and `log_std`.
    pub fn log_prob_parts(&self, action: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        check_len("gaussian action", self.mean.len(), action.len())?;
        let n = self.mean.len();
        let mut logp = 0.0;
        let mut d_mu = vec![0.0; n];
        let mut d_ls = vec![0.0; n];
        for d in 0..n {
            let sigma = self.log_std[d].exp();
            let mu = self.mean[d];
            let a = action[d];
            let z = (a - mu) / sigma;
            match self.piece(d, a)? {
                Piece::Interior => {
                    logp += normal::log_pdf(z) - self.log_std[d];
                    d_mu[d] = z / sigma;
                    d_ls[d] = z * z - 1.0;
                }
                Piece::Lower => {
                    logp += normal::log_cdf(z);
                    let m = normal::inv_mills(z);
                    d_mu[d] = -m / sigma;
                    d_ls[d] = -m * z;
                }
                Piece::Upper => {
                    logp += normal::log_sf(z);
                    let m = normal::inv_mills(-z);
                    d_mu[d] = m / sigma;
                    d_ls[d] = m * z;
                }
            }
        }
        Ok((logp, d_mu, d_ls))
    }

    /// Monte-Carlo entropy of the clipped action distribution, with
    /// boundary point masses scored by their probability.
    pub fn truncated_entropy_mc<R: Rng + ?Sized>(&self, mc_n: usize, rng: &mut R) -> f64 {
        let mut total = 0.0;
        for _ in 0..mc_n {
            total -= self.clipped_log_mass(&self.sample(rng).1);
        }
        total / mc_n.max(1) as f64
    }

    fn clipped_log_mass(&self, executed: &[f64]) -> f64 {
        let mut lp = 0.0;
        for d in 0..self.mean.len() {
            let sigma = self.log_std[d].exp();
            let z = (executed[d] - self.mean[d]) / sigma;
            lp += if executed[d] <= self.bounds.lo[d] {
                normal::log_cdf(z)
            } else if executed[d] >= self.bounds.hi[d] {
                normal::log_sf(z)
            } else {
                normal::log_pdf(z) - self.log_std[d]
            };
        }
        lp
    }
}

impl ActionDist for DiagGaussian {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let raw: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let xi: f64 = rng.sample(StandardNormal);
                m + ls.exp() * xi
            })
            .collect();
        let exec = self.bounds.clip(&raw);
        (raw, exec)
    }

    fn mode(&self) -> Vec<f64> {
        self.bounds.clip(&self.mean)
    }

    fn log_prob(&self, action: &[f64]) -> Result<f64> {
        Ok(self.log_prob_parts(action)?.0)
    }

    fn kl(&self, other: &Self) -> f64 {
        let mut kl = 0.0;
        for d in 0..self.mean.len() {
            let (s1, s2) = (self.log_std[d].exp(), other.log_std[d].exp());
            let dm = self.mean[d] - other.mean[d];
            kl += other.log_std[d] - self.log_std[d] + (s1 * s1 + dm * dm) / (2.0 * s2 * s2) - 0.5;
        }
        kl
    }

    fn entropy(&self) -> f64 {
        let c = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        self.log_std.iter().map(|ls| c + ls).sum()
    }
}

/// Gaussian policy: MLP mean, free log-std vector appended to the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub spec: MlpSpec,
    params: ParamSet,
    pub bounds: Bounds,
    pub clip_correction: bool,
}

impl GaussianPolicy {
    pub const INIT_LOG_STD: f64 = -0.510_825_623_765_990_7; // ln 0.6

    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, bounds: Bounds, clip_correction: bool, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        bounds.validate()?;
        check_len("gaussian bounds", spec.output_dim, bounds.lo.len())?;
        let mut blocks = spec.blocks();
        blocks.push(Block::Vector { len: spec.output_dim });
        let params = ParamSet::init_uniform(blocks, Self::INIT_LOG_STD, rng);
        Ok(Self {
            spec,
            params,
            bounds,
            clip_correction,
        })
    }

    pub fn from_params(spec: MlpSpec, params: ParamSet, bounds: Bounds, clip_correction: bool) -> Result<Self> {
        spec.validate()?;
        bounds.validate()?;
        check_len("gaussian parameters", spec.param_count() + spec.output_dim, params.len())?;
        Ok(Self {
            spec,
            params,
            bounds,
            clip_correction,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params.values()[self.spec.param_count()..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let n = self.spec.param_count();
        &mut self.params.values_mut()[n..]
    }

    pub fn mean_params_mut(&mut self) -> &mut [f64] {
        let n = self.spec.param_count();
        &mut self.params.values_mut()[..n]
    }

    fn make_dist(&self, mean: Vec<f64>) -> DiagGaussian {
        DiagGaussian {
            mean,
            log_std: self.log_std().to_vec(),
            bounds: self.bounds.clone(),
            clip_correction: self.clip_correction,
        }
    }

    /// Closed-form entropy of the unclipped Gaussian.
    pub fn entropy(&self) -> f64 {
        self.make_dist(vec![0.0; self.act_dim()]).entropy()
    }

    /// Monte-Carlo entropy of the clipped action distribution, averaged over
    /// `obs_sample` round-robin.
    pub fn truncated_entropy<R: Rng + ?Sized>(&self, obs_sample: &[Vec<f64>], mc_n: usize, rng: &mut R) -> Result<f64> {
        if mc_n == 0 {
            return Err(Error::InvalidArgument("truncated entropy needs mc_n >= 1".into()));
        }
        if obs_sample.is_empty() {
            return Err(Error::Empty("truncated_entropy observations"));
        }
        let used = obs_sample.len().min(mc_n);
        let dists: Vec<DiagGaussian> = obs_sample[..used].iter().map(|o| self.dist(o)).collect::<Result<_>>()?;
        let mut total = 0.0;
        for i in 0..mc_n {
            let dist = &dists[i % used];
            total -= dist.clipped_log_mass(&dist.sample(rng).1);
        }
        Ok(total / mc_n as f64)
    }
}

impl Policy for GaussianPolicy {
    type Dist = DiagGaussian;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn obs_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn dist(&self, obs: &[f64]) -> Result<DiagGaussian> {
        let trace = mlp_forward_trace(&self.spec, self.params.values(), obs)?;
        Ok(self.make_dist(trace.output().to_vec()))
    }

    fn log_prob_with_grad<F>(&self, obs: &[f64], action: &[f64], grad: &mut [f64], scale: F) -> Result<(f64, DiagGaussian)>
    where
        F: FnOnce(f64) -> f64,
    {
        check_len("policy gradient buffer", self.params.len(), grad.len())?;
        let trace = mlp_forward_trace(&self.spec, self.params.values(), obs)?;
        let dist = self.make_dist(trace.output().to_vec());
        let (logp, d_mu, d_ls) = dist.log_prob_parts(action)?;
        let s = scale(logp);
        if s != 0.0 {
            let n = self.spec.param_count();
            let (g_mean, g_ls) = grad.split_at_mut(n);
            mlp_backward_into(&self.spec, self.params.values(), &trace, &d_mu, s, g_mean)?;
            for (g, d) in g_ls.iter_mut().zip(&d_ls) {
                *g += s * d;
            }
        }
        Ok((logp, dist))
    }

    fn scored_action<'a>(&self, raw: &'a [f64], executed: &'a [f64]) -> &'a [f64] {
        if self.clip_correction {
            executed
        } else {
            raw
        }
    }
}

/// Where categorical logits come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogitSource {
    /// `logits = W obs` with `W` an `n_actions x n_states` matrix, row-major;
    /// intended for one-hot observations.
    Tabular { n_states: usize },
    Mlp(MlpSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("categorical logits"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Ok(Self { probs, log_probs })
    }

    fn index(&self, action: &[f64]) -> Result<usize> {
        check_len("categorical action", 1, action.len())?;
        let a = action[0];
        if a < 0.0 || a.fract() != 0.0 || a as usize >= self.probs.len() {
            return Err(Error::ActionOutOfBounds {
                dim: 0,
                value: a,
                lo: 0.0,
                hi: (self.probs.len() - 1) as f64,
            });
        }
        Ok(a as usize)
    }
}

impl ActionDist for Categorical {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.probs.len() - 1;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = i;
                break;
            }
        }
        (vec![idx as f64], vec![idx as f64])
    }

    fn mode(&self) -> Vec<f64> {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        vec![best as f64]
    }

    fn log_prob(&self, action: &[f64]) -> Result<f64> {
        Ok(self.log_probs[self.index(action)?])
    }

    fn kl(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(self.log_probs.iter().zip(&other.log_probs))
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, (a, b))| p * (a - b))
            .sum()
    }

    fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| p * l)
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    pub source: LogitSource,
    pub n_actions: usize,
    params: ParamSet,
}

impl CategoricalPolicy {
    /// Tabular policy with explicit `n_states x n_actions` logits.
    pub fn tabular(logits: &[Vec<f64>]) -> Result<Self> {
        let n_states = logits.len();
        if n_states == 0 || logits[0].is_empty() {
            return Err(Error::Empty("tabular logits"));
        }
        let n_actions = logits[0].len();
        let mut w = vec![0.0; n_actions * n_states];
        for (s, row) in logits.iter().enumerate() {
            check_len("tabular logits row", n_actions, row.len())?;
            for (a, l) in row.iter().enumerate() {
                w[a * n_states + s] = *l;
            }
        }
        let params = ParamSet::from_values(vec![Block::Vector { len: w.len() }], w)?;
        Ok(Self {
            source: LogitSource::Tabular { n_states },
            n_actions,
            params,
        })
    }

    pub fn mlp<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let n_actions = spec.output_dim;
        let params = ParamSet::init_uniform(spec.blocks(), 0.0, rng);
        Ok(Self {
            source: LogitSource::Mlp(spec),
            n_actions,
            params,
        })
    }

    /// Index of the logit for `(state, action)` in the flat parameters of a
    /// tabular policy.
    pub fn tabular_index(&self, state: usize, action: usize) -> Option<usize> {
        match self.source {
            LogitSource::Tabular { n_states } => Some(action * n_states + state),
            LogitSource::Mlp(_) => None,
        }
    }

    pub fn logits(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match &self.source {
            LogitSource::Tabular { n_states } => {
                check_len("tabular observation", *n_states, obs.len())?;
                Ok(self
                    .params
                    .values()
                    .chunks_exact(*n_states)
                    .map(|row| row.iter().zip(obs).map(|(w, x)| w * x).sum())
                    .collect())
            }
            LogitSource::Mlp(spec) => crate::numeric::mlp_forward(spec, self.params.values(), obs),
        }
    }
}

impl Policy for CategoricalPolicy {
    type Dist = Categorical;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn obs_dim(&self) -> usize {
        match &self.source {
            LogitSource::Tabular { n_states } => *n_states,
            LogitSource::Mlp(spec) => spec.input_dim,
        }
    }

    fn dist(&self, obs: &[f64]) -> Result<Categorical> {
        Categorical::from_logits(&self.logits(obs)?)
    }

    fn log_prob_with_grad<F>(&self, obs: &[f64], action: &[f64], grad: &mut [f64], scale: F) -> Result<(f64, Categorical)>
    where
        F: FnOnce(f64) -> f64,
    {
        check_len("policy gradient buffer", self.params.len(), grad.len())?;
        match &self.source {
            LogitSource::Tabular { n_states } => {
                let dist = self.dist(obs)?;
                let a = dist.index(action)?;
                let logp = dist.log_probs[a];
                let s = scale(logp);
                if s != 0.0 {
                    for b in 0..self.n_actions {
                        let dl = if a == b { 1.0 } else { 0.0 } - dist.probs[b];
                        let row = &mut grad[b * n_states..(b + 1) * n_states];
                        for (g, x) in row.iter_mut().zip(obs) {
                            *g += s * dl * x;
                        }
                    }
                }
                Ok((logp, dist))
            }
            LogitSource::Mlp(spec) => {
                let trace = mlp_forward_trace(spec, self.params.values(), obs)?;
                let dist = Categorical::from_logits(trace.output())?;
                let a = dist.index(action)?;
                let logp = dist.log_probs[a];
                let s = scale(logp);
                if s != 0.0 {
                    let upstream: Vec<f64> = (0..self.n_actions)
                        .map(|b| if a == b { 1.0 } else { 0.0 } - dist.probs[b])
                        .collect();
                    mlp_backward_into(spec, self.params.values(), &trace, &upstream, s, grad)?;
                }
                Ok((logp, dist))
            }
        }
    }

    fn scored_action<'a>(&self, raw: &'a [f64], _executed: &'a [f64]) -> &'a [f64] {
        raw
    }
}

/// Either policy family behind one type, so training code and checkpoints
/// need not be generic over the action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AnyPolicy {
    Gaussian(GaussianPolicy),
    Categorical(CategoricalPolicy),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyDist {
    Gaussian(DiagGaussian),
    Categorical(Categorical),
}

impl ActionDist for AnyDist {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match self {
            AnyDist::Gaussian(d) => d.sample(rng),
            AnyDist::Categorical(d) => d.sample(rng),
        }
    }

    fn mode(&self) -> Vec<f64> {
        match self {
            AnyDist::Gaussian(d) => d.mode(),
            AnyDist::Categorical(d) => d.mode(),
        }
    }

    fn log_prob(&self, action: &[f64]) -> Result<f64> {
        match self {
            AnyDist::Gaussian(d) => d.log_prob(action),
            AnyDist::Categorical(d) => d.log_prob(action),
        }
    }

    fn kl(&self, other: &Self) -> f64 {
        match (self, other) {
            (AnyDist::Gaussian(a), AnyDist::Gaussian(b)) => a.kl(b),
            (AnyDist::Categorical(a), AnyDist::Categorical(b)) => a.kl(b),
            _ => f64::INFINITY,
        }
    }

    fn entropy(&self) -> f64 {
        match self {
            AnyDist::Gaussian(d) => d.entropy(),
            AnyDist::Categorical(d) => d.entropy(),
        }
    }
}

impl AnyPolicy {
    /// Mean entropy over `obs_sample`, and the entropy after clipping to the
    /// action bounds. The two coincide for categorical policies.
    pub fn entropies<R: Rng + ?Sized>(&self, obs_sample: &[Vec<f64>], mc_n: usize, rng: &mut R) -> Result<(f64, f64)> {
        match self {
            AnyPolicy::Gaussian(p) => Ok((p.entropy(), p.truncated_entropy(obs_sample, mc_n, rng)?)),
            AnyPolicy::Categorical(p) => {
                if obs_sample.is_empty() {
                    return Err(Error::Empty("entropy observations"));
                }
                let mut h = 0.0;
                for o in obs_sample {
                    h += p.dist(o)?.entropy();
                }
                let h = h / obs_sample.len() as f64;
                Ok((h, h))
            }
        }
    }
}

impl Policy for AnyPolicy {
    type Dist = AnyDist;

    fn params(&self) -> &ParamSet {
        match self {
            AnyPolicy::Gaussian(p) => p.params(),
            AnyPolicy::Categorical(p) => p.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            AnyPolicy::Gaussian(p) => p.params_mut(),
            AnyPolicy::Categorical(p) => p.params_mut(),
        }
    }

    fn obs_dim(&self) -> usize {
        match self {
            AnyPolicy::Gaussian(p) => p.obs_dim(),
            AnyPolicy::Categorical(p) => p.obs_dim(),
        }
    }

    fn dist(&self, obs: &[f64]) -> Result<AnyDist> {
        Ok(match self {
            AnyPolicy::Gaussian(p) => AnyDist::Gaussian(p.dist(obs)?),
            AnyPolicy::Categorical(p) => AnyDist::Categorical(p.dist(obs)?),
        })
    }

    fn log_prob_with_grad<F>(&self, obs: &[f64], action: &[f64], grad: &mut [f64], scale: F) -> Result<(f64, AnyDist)>
    where
        F: FnOnce(f64) -> f64,
    {
        Ok(match self {
            AnyPolicy::Gaussian(p) => {
                let (lp, d) = p.log_prob_with_grad(obs, action, grad, scale)?;
                (lp, AnyDist::Gaussian(d))
            }
            AnyPolicy::Categorical(p) => {
                let (lp, d) = p.log_prob_with_grad(obs, action, grad, scale)?;
                (lp, AnyDist::Categorical(d))
            }
        })
    }

    fn scored_action<'a>(&self, raw: &'a [f64], executed: &'a [f64]) -> &'a [f64] {
        match self {
            AnyPolicy::Gaussian(p) => p.scored_action(raw, executed),
            AnyPolicy::Categorical(p) => p.scored_action(raw, executed),
        }
    }
}

/// `log pi(action | obs)` with the clipped-action correction.
pub fn clipped_logprob(policy: &GaussianPolicy, obs: &[f64], executed_action: &[f64]) -> Result<f64> {
    let mut dist = policy.dist(obs)?;
    dist.clip_correction = true;
    dist.log_prob(executed_action)
}

/// Gradient of `log pi(action | obs)` in the policy parameters.
pub fn logprob_grad<P: Policy>(policy: &P, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.params().len()];
    policy.log_prob_with_grad(obs, action, &mut grad, |_| 1.0)?;
    Ok(grad)
}

pub fn kl_divergence<P: Policy>(old: &P, new: &P, obs_batch: &[Vec<f64>]) -> Result<f64> {
    new.kl_from(old, obs_batch)
}
