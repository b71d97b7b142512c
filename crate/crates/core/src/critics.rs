//! State-value critics fit by full-batch regression, and the combined
//! utility-minus-cost baseline used by the constrained learner.

use crate::error::{check_len, Error, Result};
use crate::numeric::{mlp_backward_into, mlp_forward_trace, AdamConfig, Mlp, MlpSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anything that maps an observation to a scalar value estimate.
pub trait ValueFn: Sync {
    fn value(&self, obs: &[f64]) -> Result<f64>;
}

/// A constant baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstValue(pub f64);

impl ValueFn for ConstValue {
    fn value(&self, _obs: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Wraps a plain function as a [`ValueFn`].
pub struct FnValue<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> ValueFn for FnValue<F> {
    fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok((self.0)(obs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticRole {
    Utility,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: Mlp,
    pub role: CriticRole,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: Vec<usize>, role: CriticRole, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(MlpSpec::new(input_dim, hidden, 1), rng)?,
            role,
        })
    }

    pub fn zeros(input_dim: usize, hidden: Vec<usize>, role: CriticRole) -> Result<Self> {
        Ok(Self {
            net: Mlp::zeros(MlpSpec::new(input_dim, hidden, 1))?,
            role,
        })
    }

    pub fn mse(&self, obs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        check_len("critic targets", obs.len(), targets.len())?;
        if obs.is_empty() {
            return Err(Error::Empty("critic regression"));
        }
        let mut total = 0.0;
        for (o, t) in obs.iter().zip(targets) {
            let e = self.value(o)? - t;
            total += e * e;
        }
        Ok(total / obs.len() as f64)
    }

    /// `steps` full-batch Adam steps on the mean squared error. Returns the
    /// loss after the final step.
    pub fn fit(&mut self, obs: &[Vec<f64>], targets: &[f64], steps: usize, lr: f64) -> Result<f64> {
        check_len("critic targets", obs.len(), targets.len())?;
        if obs.is_empty() {
            return Err(Error::Empty("critic regression"));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("critic targets"));
        }
        let cfg = AdamConfig::with_lr(lr);
        let n = obs.len() as f64;
        let spec = self.net.spec.clone();
        let mut grad = vec![0.0; self.net.params.len()];
        for _ in 0..steps {
            grad.fill(0.0);
            let params = self.net.params.values();
            for (o, t) in obs.iter().zip(targets) {
                let trace = mlp_forward_trace(&spec, params, o)?;
                let e = trace.output()[0] - t;
                if e != 0.0 {
                    mlp_backward_into(&spec, params, &trace, &[e], 2.0 / n, &mut grad)?;
                }
            }
            self.net.params.adam_step(&grad, &cfg)?;
        }
        self.mse(obs, targets)
    }
}

impl ValueFn for Critic {
    fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }
}

pub fn fit_critic(critic: &mut Critic, obs: &[Vec<f64>], targets: &[f64], steps: usize, lr: f64) -> Result<f64> {
    critic.fit(obs, targets, steps, lr)
}

/// `V_u(s) - lambda * V_c(s)`.
pub struct CombinedBaseline<'a, U: ValueFn + ?Sized, C: ValueFn + ?Sized> {
    pub utility: &'a U,
    pub cost: &'a C,
    pub lambda: f64,
}

impl<U: ValueFn + ?Sized, C: ValueFn + ?Sized> ValueFn for CombinedBaseline<'_, U, C> {
    fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.utility.value(obs)? - self.lambda * self.cost.value(obs)?)
    }
}

pub fn combined_baseline<U: ValueFn + ?Sized, C: ValueFn + ?Sized>(v_u: &U, v_c: &C, lambda: f64, obs: &[f64]) -> Result<f64> {
    CombinedBaseline {
        utility: v_u,
        cost: v_c,
        lambda,
    }
    .value(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_targets_zero_net() {
        let mut c = Critic::zeros(3, vec![4], CriticRole::Utility).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = inputs(10, 3, &mut rng);
        let before = c.clone();
        let loss = c.fit(&obs, &[0.0; 10], 5, 1e-3).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(c.net.params.values(), before.net.params.values());
    }

    #[test]
    fn constant_targets_bias_only() {
        let mut c = Critic::zeros(2, vec![], CriticRole::Cost).unwrap();
        let obs = vec![vec![0.0, 0.0]; 8];
        let l1 = c.fit(&obs, &[2.5; 8], 50, 0.05).unwrap();
        let l2 = c.fit(&obs, &[2.5; 8], 1000, 0.05).unwrap();
        assert!(l2 < l1);
        assert!(l2 < 1e-6, "{l2}");
    }

    #[test]
    fn linear_targets_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = inputs(200, 4, &mut rng);
        let coef = [0.7, -1.2, 0.3, 2.0];
        let targets: Vec<f64> = obs.iter().map(|o| o.iter().zip(&coef).map(|(a, b)| a * b).sum()).collect();
        let mean = targets.iter().sum::<f64>() / 200.0;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 200.0;
        let mut c = Critic::new(4, vec![16, 16], CriticRole::Utility, &mut rng).unwrap();
        let loss = c.fit(&obs, &targets, 500, 1e-2).unwrap();
        assert!(loss < 0.1 * var, "{loss} vs {var}");
    }

    #[test]
    fn fit_decreases_loss_mostly() {
        let mut decreasing = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = inputs(50, 3, &mut rng);
            let targets: Vec<f64> = obs.iter().map(|o| (o[0] * 2.0).sin() + o[1] * o[2]).collect();
            let mut c = Critic::new(3, vec![8, 8], CriticRole::Utility, &mut rng).unwrap();
            let start = c.mse(&obs, &targets).unwrap();
            let mut prev = start;
            let mut ok = true;
            for _ in 0..20 {
                let l = c.fit(&obs, &targets, 1, 1e-3).unwrap();
                ok &= l < prev;
                prev = l;
            }
            decreasing += ok as usize;
        }
        assert!(decreasing >= 18, "{decreasing}");
    }

    #[test]
    fn non_finite_targets_rejected() {
        let mut c = Critic::zeros(1, vec![], CriticRole::Utility).unwrap();
        assert_eq!(c.fit(&[vec![0.0]], &[f64::NAN], 1, 1e-3), Err(Error::NonFinite("critic targets")));
    }

    #[test]
    fn combined_values() {
        let obs = [0.0];
        assert_eq!(combined_baseline(&ConstValue(2.0), &ConstValue(0.5), 0.0, &obs).unwrap(), 2.0);
        assert_eq!(combined_baseline(&ConstValue(1.3), &ConstValue(1.3), 1.0, &obs).unwrap(), 0.0);
        assert_eq!(combined_baseline(&ConstValue(2.0), &ConstValue(0.5), 4.0, &obs).unwrap(), 0.0);
        let f = FnValue(|o: &[f64]| o[0] * 3.0);
        assert_eq!(f.value(&[2.0]).unwrap(), 6.0);
    }
}
