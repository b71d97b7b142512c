//! Finite-horizon tabular MDPs small enough to enumerate every trajectory.

use super::{Env, EnvSpec, StepOutcome};
use crate::error::{Error, Result};
use crate::policy::{CategoricalPolicy, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest number of candidate paths `enumerate` will walk.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    pub reward: Vec<Vec<f64>>,
    /// `cost[s][a]`
    pub cost: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl TabularMDP {
    /// Three states, two actions, horizon three; transition probabilities
    /// drawn from `{0.2, 0.8}`.
    pub fn standard() -> Self {
        Self {
            n_states: 3,
            n_actions: 2,
            horizon: 3,
            transition: vec![
                vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.8, 0.2]],
                vec![vec![0.2, 0.0, 0.8], vec![0.8, 0.0, 0.2]],
                vec![vec![0.0, 0.8, 0.2], vec![0.2, 0.0, 0.8]],
            ],
            reward: vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 0.5]],
            cost: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            initial: vec![0.8, 0.2, 0.0],
        }
    }

    /// Fixed logits used as the reference policy on the standard MDP.
    pub fn standard_logits() -> Vec<Vec<f64>> {
        vec![vec![0.3, -0.2], vec![0.1, 0.4], vec![-0.5, 0.2]]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.initial.len() != self.n_states || self.transition.len() != self.n_states {
            return bad("state dimension mismatch".into());
        }
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("initial distribution does not sum to 1".into());
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions
                || self.reward[s].len() != self.n_actions
                || self.cost[s].len() != self.n_actions
            {
                return bad(format!("action dimension mismatch at state {s}"));
            }
            for a in 0..self.n_actions {
                let row = &self.transition[s][a];
                if row.len() != self.n_states || row.iter().any(|p| *p < 0.0) {
                    return bad(format!("bad transition row ({s}, {a})"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad(format!("transition row ({s}, {a}) does not sum to 1"));
                }
            }
        }
        Ok(())
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    /// `(S * A)^H`, the number of candidate paths.
    pub fn path_count(&self) -> u128 {
        ((self.n_states * self.n_actions) as u128).saturating_pow(self.horizon as u32)
    }
}

/// One trajectory with its exact probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub probability: f64,
    pub ret: f64,
    pub cost: f64,
}

/// Every positive-probability trajectory under `policy`.
pub fn enumerate(mdp: &TabularMDP, policy: &CategoricalPolicy) -> Result<Vec<Path>> {
    mdp.validate()?;
    if mdp.path_count() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationBound {
            count: mdp.path_count(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let probs: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|s| policy.dist(&mdp.one_hot(s)).map(|d| d.probs))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(mdp.horizon);
    let mut actions = Vec::with_capacity(mdp.horizon);
    for s0 in 0..mdp.n_states {
        if mdp.initial[s0] > 0.0 {
            walk(mdp, &probs, s0, mdp.initial[s0], 0.0, 0.0, &mut states, &mut actions, &mut out);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    mdp: &TabularMDP,
    probs: &[Vec<f64>],
    s: usize,
    p: f64,
    ret: f64,
    cost: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<Path>,
) {
    for a in 0..mdp.n_actions {
        let pa = p * probs[s][a];
        if pa == 0.0 {
            continue;
        }
        states.push(s);
        actions.push(a);
        let r = ret + mdp.reward[s][a];
        let c = cost + mdp.cost[s][a];
        if states.len() == mdp.horizon {
            out.push(Path {
                states: states.clone(),
                actions: actions.clone(),
                probability: pa,
                ret: r,
                cost: c,
            });
        } else {
            for (s2, pt) in mdp.transition[s][a].iter().enumerate() {
                if *pt > 0.0 {
                    walk(mdp, probs, s2, pa * pt, r, c, states, actions, out);
                }
            }
        }
        states.pop();
        actions.pop();
    }
}

/// A tabular MDP exposed through the [`Env`] interface with one-hot
/// observations.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMDP,
    rng: ChaCha8Rng,
    state: usize,
    t: usize,
    done: bool,
}

impl TabularEnv {
    pub fn new(mdp: TabularMDP) -> Self {
        Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: 0,
            t: 0,
            done: true,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    fn draw(&mut self, probs: &[f64]) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

impl Env for TabularEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "tabular".into(),
            obs_dim: self.mdp.n_states,
            act_dim: 1,
            action_bound: None,
            n_actions: self.mdp.n_actions,
            max_steps: self.mdp.horizon,
        }
    }

    fn reset(&mut self, episode_seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let init = self.mdp.initial.clone();
        self.state = self.draw(&init);
        self.t = 0;
        self.done = false;
        Ok(self.mdp.one_hot(self.state))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let a = action.first().copied().unwrap_or(-1.0);
        if a < 0.0 || a.fract() != 0.0 || a as usize >= self.mdp.n_actions {
            return Err(Error::ActionOutOfBounds {
                dim: 0,
                value: a,
                lo: 0.0,
                hi: (self.mdp.n_actions - 1) as f64,
            });
        }
        let a = a as usize;
        let s = self.state;
        let row = self.mdp.transition[s][a].clone();
        self.state = self.draw(&row);
        self.t += 1;
        self.done = self.t >= self.mdp.horizon;
        Ok(StepOutcome {
            obs: self.mdp.one_hot(self.state),
            reward: self.mdp.reward[s][a],
            cost: self.mdp.cost[s][a],
            done: self.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic_mdp() -> TabularMDP {
        TabularMDP {
            n_states: 2,
            n_actions: 2,
            horizon: 3,
            transition: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            reward: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            cost: vec![vec![0.0; 2]; 2],
            initial: vec![1.0, 0.0],
        }
    }

    #[test]
    fn deterministic_policy_single_path() {
        let mdp = deterministic_mdp();
        let policy = CategoricalPolicy::tabular(&[vec![0.0, -800.0], vec![0.0, -800.0]]).unwrap();
        let paths = enumerate(&mdp, &policy).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].probability, 1.0);
        assert_eq!(paths[0].ret, 3.0);
    }

    #[test]
    fn uniform_policy_counts() {
        let mdp = deterministic_mdp();
        let policy = CategoricalPolicy::tabular(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let paths = enumerate(&mdp, &policy).unwrap();
        assert_eq!(paths.len(), 8);
        assert!(paths.iter().all(|p| (p.probability - 0.125).abs() < 1e-15));
    }

    #[test]
    fn standard_mdp_audit() {
        let mdp = TabularMDP::standard();
        mdp.validate().unwrap();
        let policy = CategoricalPolicy::tabular(&TabularMDP::standard_logits()).unwrap();
        let paths = enumerate(&mdp, &policy).unwrap();
        let total: f64 = paths.iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
        for p in &paths {
            let r: f64 = p.states.iter().zip(&p.actions).map(|(s, a)| mdp.reward[*s][*a]).sum();
            assert_eq!(r, p.ret);
        }
        let mut distinct: Vec<f64> = paths.iter().map(|p| p.ret).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() >= 4);
    }

    #[test]
    fn enumeration_bound() {
        let mut mdp = TabularMDP::standard();
        mdp.horizon = 9;
        let policy = CategoricalPolicy::tabular(&TabularMDP::standard_logits()).unwrap();
        assert!(matches!(enumerate(&mdp, &policy), Err(Error::EnumerationBound { .. })));
    }

    #[test]
    fn env_sampling_matches_enumeration() {
        let mdp = TabularMDP::standard();
        let policy = CategoricalPolicy::tabular(&TabularMDP::standard_logits()).unwrap();
        let exact: f64 = enumerate(&mdp, &policy).unwrap().iter().map(|p| p.probability * p.ret).sum();
        let mut env = TabularEnv::new(mdp);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut total = 0.0;
        for i in 0..n {
            let mut obs = env.reset(i).unwrap();
            loop {
                let (a, _) = policy.sample_action(&obs, &mut rng).unwrap();
                let out = env.step(&a).unwrap();
                total += out.reward;
                obs = out.obs;
                if out.done {
                    break;
                }
            }
        }
        assert!((total / n as f64 - exact).abs() < 0.05);
    }
}
