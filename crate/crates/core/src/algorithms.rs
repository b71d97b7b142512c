//! Training loops. `C3po` optimizes the risk-sensitive objective of the
//! reward stream with a fixed per-event cost penalty; `Crisp` treats costs as
//! a constraint and adapts a Lagrange multiplier from each fresh batch.

use crate::critics::{CombinedBaseline, Critic, CriticRole, ValueFn};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::estimator::{
    build_batch, policy_update, utilities_to_go, Batch, BatchOptions, Episode, EstimatorVariant, StaticBaseline,
    UpdateDiagnostics, UpdateOptions,
};
use crate::numeric::{AdamConfig, MlpSpec};
use crate::policy::{AnyPolicy, Bounds, CategoricalPolicy, GaussianPolicy, Policy};
use crate::risk::{objective_estimate, CoefficientMode, UtilitySpec, WeightSpec};
use crate::rng::{derive_seed, stream_rng, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    C3po,
    Crisp,
}

/// Dual variable with its own Adam moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda: f64,
    pub m: f64,
    pub v: f64,
    pub step: u64,
    pub lr: f64,
    /// Allowed expected cost events per episode; `None` never binds.
    pub cost_limit: Option<f64>,
    pub lambda_max: f64,
}

impl LagrangeState {
    pub const LAMBDA_MAX: f64 = 100.0;
    const GRAD_CLAMP: f64 = 1e12;

    pub fn new(lambda: f64, lr: f64, cost_limit: Option<f64>) -> Result<Self> {
        if !(0.0..=Self::LAMBDA_MAX).contains(&lambda) {
            return Err(Error::Config(format!("lambda_init must be in [0, {}], got {lambda}", Self::LAMBDA_MAX)));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("lambda_lr must be positive, got {lr}")));
        }
        if let Some(d) = cost_limit {
            if d.is_nan() || d < 0.0 {
                return Err(Error::Config(format!("cost_limit must be >= 0, got {d}")));
            }
        }
        Ok(Self {
            lambda,
            m: 0.0,
            v: 0.0,
            step: 0,
            lr,
            cost_limit,
            lambda_max: Self::LAMBDA_MAX,
        })
    }
}

/// One Adam ascent step on `lambda` with gradient `J_C - d`, projected to
/// `[0, lambda_max]`.
pub fn lambda_update(state: &LagrangeState, mean_episode_cost: f64) -> LagrangeState {
    let mut g = mean_episode_cost - state.cost_limit.unwrap_or(f64::INFINITY);
    if g.is_nan() {
        g = 0.0;
    }
    let g = g.clamp(-LagrangeState::GRAD_CLAMP, LagrangeState::GRAD_CLAMP);
    let adam = AdamConfig::with_lr(state.lr);
    let mut next = *state;
    next.step += 1;
    next.m = adam.beta1 * state.m + (1.0 - adam.beta1) * g;
    next.v = adam.beta2 * state.v + (1.0 - adam.beta2) * g * g;
    let m_hat = next.m / (1.0 - adam.beta1.powi(next.step as i32));
    let v_hat = next.v / (1.0 - adam.beta2.powi(next.step as i32));
    next.lambda = (state.lambda + state.lr * m_hat / (v_hat.sqrt() + adam.eps)).clamp(0.0, state.lambda_max);
    next
}

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub env: EnvConfig,
    pub weight: WeightSpec,
    pub utility: UtilitySpec,
    pub variant: EstimatorVariant,
    pub coefficient_mode: CoefficientMode,
    pub static_baseline: StaticBaseline,
    pub normalize_advantages: bool,
    /// Episodes per batch.
    pub batch_episodes: usize,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub eps_clip: f64,
    pub kl_stop: f64,
    /// Maximum policy steps per epoch.
    pub policy_steps: usize,
    /// Critic regression steps per epoch.
    pub critic_steps: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
    /// Expected cost events per episode allowed by the constrained learner;
    /// `None` is an unbounded limit.
    pub cost_limit: Option<f64>,
    /// Per-event penalty of the unconstrained learner.
    pub cost_coef: f64,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub clip_correction: bool,
    /// Monte-Carlo samples for the clipped-action entropy.
    pub entropy_samples: usize,
    /// Update the multiplier from the previous batch's costs.
    pub lagged_cost: bool,
    /// Collection threads; `0` uses the global pool.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::C3po,
            env: EnvConfig::point_hazard(),
            weight: WeightSpec::Identity,
            utility: UtilitySpec::Identity,
            variant: EstimatorVariant::Tr,
            coefficient_mode: CoefficientMode::Derivative,
            static_baseline: StaticBaseline::BatchMean,
            normalize_advantages: false,
            batch_episodes: 30,
            gamma: 0.99,
            lambda_gae: 0.95,
            eps_clip: 0.2,
            kl_stop: 0.015,
            policy_steps: 80,
            critic_steps: 80,
            policy_lr: 3e-4,
            critic_lr: 1e-3,
            lambda_lr: 0.05,
            lambda_init: 0.0,
            cost_limit: None,
            cost_coef: 0.075,
            policy_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            clip_correction: true,
            entropy_samples: 2000,
            lagged_cost: false,
            workers: 0,
        }
    }
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64, range: &str) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in {range}, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in (0, inf), got {v}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.weight.validate().map_err(|e| Error::Config(format!("weight: {e}")))?;
        self.utility.validate().map_err(|e| Error::Config(format!("utility: {e}")))?;
        if self.batch_episodes < 2 {
            return Err(Error::Config(format!(
                "batch_episodes must be in [2, inf), got {}",
                self.batch_episodes
            )));
        }
        in_range("gamma", self.gamma, 0.0, 1.0, "[0, 1]")?;
        in_range("lambda_gae", self.lambda_gae, 0.0, 1.0, "[0, 1]")?;
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(Error::Config(format!("eps_clip must be in (0, 1), got {}", self.eps_clip)));
        }
        if self.kl_stop.is_nan() || self.kl_stop <= 0.0 {
            return Err(Error::Config(format!("kl_stop must be in (0, inf], got {}", self.kl_stop)));
        }
        if self.policy_steps == 0 {
            return Err(Error::Config("policy_steps must be in [1, inf), got 0".into()));
        }
        positive("policy_lr", self.policy_lr)?;
        positive("critic_lr", self.critic_lr)?;
        positive("lambda_lr", self.lambda_lr)?;
        in_range("lambda_init", self.lambda_init, 0.0, LagrangeState::LAMBDA_MAX, "[0, 100]")?;
        if let Some(d) = self.cost_limit {
            if d.is_nan() || d < 0.0 {
                return Err(Error::Config(format!("cost_limit must be in [0, inf], got {d}")));
            }
        }
        in_range("cost_coef", self.cost_coef, 0.0, f64::MAX, "[0, inf)")?;
        if self.policy_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        if self.entropy_samples == 0 {
            return Err(Error::Config("entropy_samples must be in [1, inf), got 0".into()));
        }
        Ok(())
    }

    pub fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            variant: self.variant,
            weight: self.weight,
            coefficient_mode: self.coefficient_mode,
            gamma: self.gamma,
            lambda_gae: self.lambda_gae,
            static_baseline: self.static_baseline,
            normalize_advantages: self.normalize_advantages,
        }
    }

    pub fn update_options(&self) -> UpdateOptions {
        UpdateOptions {
            max_steps: self.policy_steps,
            eps_clip: self.eps_clip,
            kl_stop: self.kl_stop,
            adam: AdamConfig::with_lr(self.policy_lr),
        }
    }
}

/// Metrics of one epoch; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    pub env_steps: u64,
    pub ep_reward_mean: f64,
    pub ep_reward_std: f64,
    pub ep_cost_mean: f64,
    pub ep_utility_mean: f64,
    pub objective_est: f64,
    pub entropy: f64,
    pub trunc_entropy: f64,
    pub lambda: f64,
    pub kl_stop: f64,
    pub steps_taken: usize,
    pub clip_frac: f64,
    pub vloss_u: f64,
    pub vloss_c: f64,
    pub wall_s: f64,
}

impl EpochReport {
    pub fn is_finite(&self) -> bool {
        [
            self.ep_reward_mean,
            self.ep_reward_std,
            self.ep_cost_mean,
            self.ep_utility_mean,
            self.objective_est,
            self.entropy,
            self.trunc_entropy,
            self.lambda,
            self.kl_stop,
            self.clip_frac,
            self.vloss_u,
            self.vloss_c,
            self.wall_s,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Collect,
    LambdaUpdate,
    UtilitiesToGo,
    FitUtilityCritic,
    CostsToGo,
    FitCostCritic,
    EffectiveUtility,
    Advantages,
    RankCoefficients,
    PolicyUpdate,
}

/// What the last epoch did, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochTrace {
    pub stages: Vec<Stage>,
    pub lambda_before: f64,
    /// Multiplier applied to the costs of the effective utilities.
    pub lambda_applied: f64,
    pub batch_cost: f64,
}

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub seed: u64,
    pub epoch: u64,
    pub env_steps: u64,
    pub policy: AnyPolicy,
    pub critic_u: Critic,
    pub critic_c: Option<Critic>,
    pub lagrange: LagrangeState,
    pub prev_cost: Option<f64>,
}

pub fn build_policy(config: &TrainConfig, seed: u64) -> Result<AnyPolicy> {
    let spec = config.env.spec()?;
    let mut rng = stream_rng(seed, 0, 0, Stream::Init);
    Ok(match spec.action_bound {
        Some(b) => AnyPolicy::Gaussian(GaussianPolicy::new(
            MlpSpec::new(spec.obs_dim, config.policy_hidden.clone(), spec.act_dim),
            Bounds::symmetric(spec.act_dim, b),
            config.clip_correction,
            &mut rng,
        )?),
        None => match config.env {
            EnvConfig::Tabular => AnyPolicy::Categorical(CategoricalPolicy::tabular(&vec![
                vec![0.0; spec.n_actions];
                spec.obs_dim
            ])?),
            _ => AnyPolicy::Categorical(CategoricalPolicy::mlp(
                MlpSpec::new(spec.obs_dim, config.policy_hidden.clone(), spec.n_actions),
                &mut rng,
            )?),
        },
    })
}

pub struct Trainer {
    config: TrainConfig,
    state: TrainerState,
    pool: Option<Arc<rayon::ThreadPool>>,
    trace: EpochTrace,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let policy = build_policy(&config, seed)?;
        let obs_dim = policy.obs_dim();
        let mut rng = stream_rng(seed, 0, 1, Stream::Init);
        let critic_u = Critic::new(obs_dim, config.critic_hidden.clone(), CriticRole::Utility, &mut rng)?;
        let critic_c = match config.algorithm {
            Algorithm::Crisp => Some(Critic::new(obs_dim, config.critic_hidden.clone(), CriticRole::Cost, &mut rng)?),
            Algorithm::C3po => None,
        };
        let lagrange = LagrangeState::new(config.lambda_init, config.lambda_lr, config.cost_limit)?;
        let state = TrainerState {
            seed,
            epoch: 0,
            env_steps: 0,
            policy,
            critic_u,
            critic_c,
            lagrange,
            prev_cost: None,
        };
        Self::from_state(config, state)
    }

    pub fn from_state(config: TrainConfig, state: TrainerState) -> Result<Self> {
        config.validate()?;
        if config.algorithm == Algorithm::Crisp && state.critic_c.is_none() {
            return Err(Error::Config("constrained learner state lacks a cost critic".into()));
        }
        let expected = build_policy(&config, state.seed)?;
        if expected.params().len() != state.policy.params().len() || expected.obs_dim() != state.policy.obs_dim() {
            return Err(Error::Config("policy does not match the configured environment".into()));
        }
        let pool = match config.workers {
            0 => None,
            k => Some(Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| Error::Config(format!("workers: {e}")))?,
            )),
        };
        Ok(Self {
            config,
            state,
            pool,
            trace: EpochTrace::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn policy(&self) -> &AnyPolicy {
        &self.state.policy
    }

    pub fn policy_mut(&mut self) -> &mut AnyPolicy {
        &mut self.state.policy
    }

    pub fn critic(&self) -> &Critic {
        &self.state.critic_u
    }

    pub fn lagrange(&self) -> &LagrangeState {
        &self.state.lagrange
    }

    pub fn last_trace(&self) -> &EpochTrace {
        &self.trace
    }

    fn run_episode(&self, index: u64) -> Result<Episode> {
        let cfg = &self.config;
        let s = &self.state;
        let mut env = cfg.env.build()?;
        let mut rng = stream_rng(s.seed, s.epoch, index, Stream::Action);
        let mut obs = env.reset(derive_seed(s.seed, s.epoch, index, Stream::Env))?;
        let mut ep = Episode::default();
        loop {
            let (raw, exec) = s.policy.sample_action(&obs, &mut rng)?;
            let out = env.step(&exec)?;
            let r = match cfg.algorithm {
                Algorithm::C3po => out.reward - cfg.cost_coef * out.cost,
                Algorithm::Crisp => out.reward,
            };
            ep.observations.push(obs);
            ep.raw_actions.push(raw);
            ep.executed_actions.push(exec);
            ep.rewards.push(r);
            ep.costs.push(out.cost);
            ep.env_return += out.reward;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        ep.utilities = cfg.utility.allocate(&ep.rewards);
        Ok(ep)
    }

    fn in_pool<T: Send, F: FnOnce() -> T + Send>(&self, f: F) -> T {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    /// The current epoch's episodes, each drawn from its own seed streams.
    pub fn collect(&self) -> Result<Vec<Episode>> {
        self.in_pool(|| {
            (0..self.config.batch_episodes as u64)
                .into_par_iter()
                .map(|i| self.run_episode(i))
                .collect()
        })
    }

    /// Unconstrained batch assembly: fit the utility critic when the variant
    /// needs one, then advantages and rank coefficients.
    pub fn prepare_c3po_batch(&mut self, episodes: Vec<Episode>) -> Result<(Batch, f64)> {
        let cfg = self.config.clone();
        let mut vloss = 0.0;
        if cfg.variant.needs_critic() {
            let (obs, targets) = regression_set(&episodes, |e| utilities_to_go(&e.utilities, cfg.gamma));
            self.trace.stages.push(Stage::UtilitiesToGo);
            vloss = self.state.critic_u.fit(&obs, &targets, cfg.critic_steps, cfg.critic_lr)?;
            self.trace.stages.push(Stage::FitUtilityCritic);
        }
        let critic: Option<&dyn ValueFn> = cfg.variant.needs_critic().then_some(&self.state.critic_u as &dyn ValueFn);
        let batch = build_batch(episodes, &cfg.batch_options(), critic, &self.state.policy)?;
        self.trace.stages.extend([Stage::Advantages, Stage::RankCoefficients]);
        Ok((batch, vloss))
    }

    pub fn c3po_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        self.trace = EpochTrace::default();
        let episodes = self.collect()?;
        self.trace.stages.push(Stage::Collect);
        let stats = BatchStats::of(&episodes, &self.config)?;
        self.trace.batch_cost = stats.cost_mean;
        let (batch, vloss_u) = self.prepare_c3po_batch(episodes)?;
        let diag = self.update(&batch)?;
        self.finish(batch, stats, diag, vloss_u, 0.0, self.config.cost_coef, start)
    }

    pub fn crisp_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let cfg = self.config.clone();
        self.trace = EpochTrace::default();
        let mut episodes = self.collect()?;
        self.trace.stages.push(Stage::Collect);
        let stats = BatchStats::of(&episodes, &cfg)?;
        self.trace.batch_cost = stats.cost_mean;

        self.trace.lambda_before = self.state.lagrange.lambda;
        let signal = if cfg.lagged_cost { self.state.prev_cost } else { Some(stats.cost_mean) };
        if let Some(jc) = signal {
            self.state.lagrange = lambda_update(&self.state.lagrange, jc);
        }
        self.state.prev_cost = Some(stats.cost_mean);
        self.trace.stages.push(Stage::LambdaUpdate);
        let lambda = self.state.lagrange.lambda;

        let (mut vloss_u, mut vloss_c) = (0.0, 0.0);
        if cfg.variant.needs_critic() {
            let (obs, targets) = regression_set(&episodes, |e| utilities_to_go(&e.utilities, cfg.gamma));
            self.trace.stages.push(Stage::UtilitiesToGo);
            vloss_u = self.state.critic_u.fit(&obs, &targets, cfg.critic_steps, cfg.critic_lr)?;
            self.trace.stages.push(Stage::FitUtilityCritic);
            let (_, cost_targets) = regression_set(&episodes, |e| utilities_to_go(&e.costs, cfg.gamma));
            self.trace.stages.push(Stage::CostsToGo);
            let critic_c = self.state.critic_c.as_mut().expect("checked at construction");
            vloss_c = critic_c.fit(&obs, &cost_targets, cfg.critic_steps, cfg.critic_lr)?;
            self.trace.stages.push(Stage::FitCostCritic);
        }

        for e in &mut episodes {
            for (u, c) in e.utilities.iter_mut().zip(&e.costs) {
                *u -= lambda * c;
            }
        }
        self.trace.lambda_applied = lambda;
        self.trace.stages.push(Stage::EffectiveUtility);

        let combined = CombinedBaseline {
            utility: &self.state.critic_u,
            cost: self.state.critic_c.as_ref().expect("checked at construction"),
            lambda,
        };
        let critic: Option<&dyn ValueFn> = cfg.variant.needs_critic().then_some(&combined as &dyn ValueFn);
        let batch = build_batch(episodes, &cfg.batch_options(), critic, &self.state.policy)?;
        self.trace.stages.extend([Stage::Advantages, Stage::RankCoefficients]);
        let diag = self.update(&batch)?;
        self.finish(batch, stats, diag, vloss_u, vloss_c, lambda, start)
    }

    pub fn step_epoch(&mut self) -> Result<EpochReport> {
        match self.config.algorithm {
            Algorithm::C3po => self.c3po_epoch(),
            Algorithm::Crisp => self.crisp_epoch(),
        }
    }

    pub fn train(&mut self, epochs: usize) -> Result<Vec<EpochReport>> {
        (0..epochs).map(|_| self.step_epoch()).collect()
    }

    fn update(&mut self, batch: &Batch) -> Result<UpdateDiagnostics> {
        let opts = self.config.update_options();
        let policy = &mut self.state.policy;
        let diag = match &self.pool {
            Some(p) => p.install(|| policy_update(batch, policy, &opts)),
            None => policy_update(batch, policy, &opts),
        }?;
        self.trace.stages.push(Stage::PolicyUpdate);
        Ok(diag)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        batch: Batch,
        stats: BatchStats,
        diag: UpdateDiagnostics,
        vloss_u: f64,
        vloss_c: f64,
        lambda: f64,
        start: Instant,
    ) -> Result<EpochReport> {
        let obs = batch.observations();
        let mut rng = stream_rng(self.state.seed, self.state.epoch, 0, Stream::Entropy);
        let (entropy, trunc_entropy) = self.state.policy.entropies(&obs, self.config.entropy_samples, &mut rng)?;
        self.state.env_steps += batch.steps() as u64;
        let report = EpochReport {
            epoch: self.state.epoch,
            env_steps: self.state.env_steps,
            ep_reward_mean: stats.reward_mean,
            ep_reward_std: stats.reward_std,
            ep_cost_mean: stats.cost_mean,
            ep_utility_mean: stats.utility_mean,
            objective_est: stats.objective,
            entropy,
            trunc_entropy,
            lambda,
            kl_stop: diag.kl_final,
            steps_taken: diag.steps_taken,
            clip_frac: diag.clip_frac,
            vloss_u,
            vloss_c,
            wall_s: start.elapsed().as_secs_f64(),
        };
        self.state.epoch += 1;
        if !report.is_finite() {
            return Err(Error::NonFinite("epoch report"));
        }
        Ok(report)
    }
}

struct BatchStats {
    reward_mean: f64,
    reward_std: f64,
    cost_mean: f64,
    utility_mean: f64,
    objective: f64,
}

impl BatchStats {
    fn of(episodes: &[Episode], cfg: &TrainConfig) -> Result<Self> {
        let n = episodes.len() as f64;
        let rewards: Vec<f64> = episodes.iter().map(|e| e.env_return).collect();
        let reward_mean = rewards.iter().sum::<f64>() / n;
        let reward_std = (rewards.iter().map(|r| (r - reward_mean).powi(2)).sum::<f64>() / n).sqrt();
        let returns: Vec<f64> = episodes.iter().map(Episode::ret).collect();
        Ok(Self {
            reward_mean,
            reward_std,
            cost_mean: episodes.iter().map(Episode::cost_total).sum::<f64>() / n,
            utility_mean: episodes.iter().map(Episode::utility_total).sum::<f64>() / n,
            objective: objective_estimate(&returns, &cfg.utility, &cfg.weight)?,
        })
    }
}

fn regression_set<F: Fn(&Episode) -> Vec<f64>>(episodes: &[Episode], targets: F) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut ys = Vec::new();
    for e in episodes {
        obs.extend(e.observations.iter().cloned());
        ys.extend(targets(e));
    }
    (obs, ys)
}
