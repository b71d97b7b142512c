//! Point-mass navigation in a square arena with circular hazards.
//!
//! The agent moves by its (bounded) action plus Gaussian noise. Reward is
//! the decrease in distance to the goal plus a bonus on arrival, after which
//! a new goal is drawn. Each step spent inside a hazard is one cost event.
//! In the button variant the hazards act as decoy buttons that move to new
//! places whenever the goal is reached.

use super::{Env, EnvSpec, StepOutcome};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointConfig {
    pub arena_half_width: f64,
    pub hazard_count: usize,
    pub hazard_radius: f64,
    pub goal_radius: f64,
    pub action_bound: f64,
    pub noise_std: f64,
    pub goal_bonus: f64,
    pub horizon: usize,
    /// Hazards are redrawn whenever the goal is reached.
    pub relocate_hazards: bool,
}

impl Default for PointConfig {
    fn default() -> Self {
        Self::hazard()
    }
}

impl PointConfig {
    pub fn hazard() -> Self {
        Self {
            arena_half_width: 1.0,
            hazard_count: 6,
            hazard_radius: 0.15,
            goal_radius: 0.15,
            action_bound: 0.2,
            noise_std: 0.01,
            goal_bonus: 1.0,
            horizon: 200,
            relocate_hazards: false,
        }
    }

    pub fn button() -> Self {
        Self {
            hazard_count: 4,
            hazard_radius: 0.1,
            relocate_hazards: true,
            ..Self::hazard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("arena_half_width", self.arena_half_width),
            ("hazard_radius", self.hazard_radius),
            ("goal_radius", self.goal_radius),
            ("action_bound", self.action_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("env.{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("env.noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("env.horizon must be >= 1".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        4 + 2 * self.hazard_count
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone)]
pub struct PointEnv {
    name: &'static str,
    cfg: PointConfig,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    goal: [f64; 2],
    hazards: Vec<[f64; 2]>,
    t: usize,
    done: bool,
    goals_reached: usize,
}

impl PointEnv {
    pub fn new(name: &'static str, cfg: PointConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            name,
            hazards: vec![[0.0; 2]; cfg.hazard_count],
            cfg,
            rng: ChaCha8Rng::seed_from_u64(0),
            pos: [0.0; 2],
            goal: [0.0; 2],
            t: 0,
            done: true,
            goals_reached: 0,
        })
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn hazards(&self) -> &[[f64; 2]] {
        &self.hazards
    }

    pub fn goals_reached(&self) -> usize {
        self.goals_reached
    }

    /// Overrides the layout; used to construct exact geometric scenarios.
    pub fn set_layout(&mut self, pos: [f64; 2], goal: [f64; 2], hazards: Vec<[f64; 2]>) -> Result<()> {
        if hazards.len() != self.cfg.hazard_count {
            return Err(Error::Shape {
                what: "hazard layout",
                expected: self.cfg.hazard_count,
                got: hazards.len(),
            });
        }
        self.pos = pos;
        self.goal = goal;
        self.hazards = hazards;
        Ok(())
    }

    fn draw_point(&mut self) -> [f64; 2] {
        let w = 0.9 * self.cfg.arena_half_width;
        [self.rng.random_range(-w..w), self.rng.random_range(-w..w)]
    }

    fn hazard_ok(&self, h: [f64; 2]) -> bool {
        dist(h, self.goal) > self.cfg.hazard_radius + self.cfg.goal_radius
            && dist(h, self.pos) > self.cfg.hazard_radius
    }

    fn goal_ok(&self, g: [f64; 2]) -> bool {
        dist(g, self.pos) > self.cfg.goal_radius
            && self.hazards.iter().all(|h| dist(*h, g) > self.cfg.hazard_radius + self.cfg.goal_radius)
    }

    fn sample_goal(&mut self, check_hazards: bool) -> Result<()> {
        for _ in 0..MAX_ATTEMPTS {
            let g = self.draw_point();
            let ok = if check_hazards {
                self.goal_ok(g)
            } else {
                dist(g, self.pos) > self.cfg.goal_radius
            };
            if ok {
                self.goal = g;
                return Ok(());
            }
        }
        Err(Error::Layout(MAX_ATTEMPTS))
    }

    fn sample_hazards(&mut self) -> Result<()> {
        let mut attempts = 0;
        for k in 0..self.cfg.hazard_count {
            loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(Error::Layout(MAX_ATTEMPTS));
                }
                let h = self.draw_point();
                if self.hazard_ok(h) {
                    self.hazards[k] = h;
                    break;
                }
            }
        }
        Ok(())
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.cfg.obs_dim());
        obs.extend_from_slice(&self.pos);
        obs.push(self.goal[0] - self.pos[0]);
        obs.push(self.goal[1] - self.pos[1]);
        for h in &self.hazards {
            obs.push(h[0] - self.pos[0]);
            obs.push(h[1] - self.pos[1]);
        }
        obs
    }

    fn in_hazard(&self) -> bool {
        self.hazards.iter().any(|h| dist(*h, self.pos) < self.cfg.hazard_radius)
    }
}

impl Env for PointEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: self.name.to_string(),
            obs_dim: self.cfg.obs_dim(),
            act_dim: 2,
            action_bound: Some(self.cfg.action_bound),
            n_actions: 0,
            max_steps: self.cfg.horizon,
        }
    }

    fn reset(&mut self, episode_seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed);
        self.pos = self.draw_point();
        self.sample_goal(false)?;
        self.sample_hazards()?;
        self.t = 0;
        self.done = false;
        self.goals_reached = 0;
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != 2 {
            return Err(Error::Shape {
                what: "point action",
                expected: 2,
                got: action.len(),
            });
        }
        let b = self.cfg.action_bound;
        for (d, a) in action.iter().enumerate() {
            if !(a.abs() <= b) {
                return Err(Error::ActionOutOfBounds { dim: d, value: *a, lo: -b, hi: b });
            }
        }
        let before = dist(self.pos, self.goal);
        let w = self.cfg.arena_half_width;
        for d in 0..2 {
            let noise: f64 = if self.cfg.noise_std > 0.0 {
                self.cfg.noise_std * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            self.pos[d] = (self.pos[d] + action[d] + noise).clamp(-w, w);
        }
        let after = dist(self.pos, self.goal);
        let mut reward = before - after;
        let cost = if self.in_hazard() { 1.0 } else { 0.0 };
        if after < self.cfg.goal_radius {
            reward += self.cfg.goal_bonus;
            self.goals_reached += 1;
            if self.cfg.relocate_hazards {
                self.sample_hazards()?;
            }
            self.sample_goal(true)?;
        }
        self.t += 1;
        self.done = self.t >= self.cfg.horizon;
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            cost,
            done: self.done,
        })
    }
}
