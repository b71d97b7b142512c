//! Weight (distortion) functions, utility functions, rank coefficients, and
//! the sorted-sample estimate of the distributional objective.
//!
//! The objective over a return distribution with CDF `P` is
//! `J = integral of u(r) d[w(P(r))]`. For `N` sorted samples this becomes
//! `sum_i u(r_(i)) * [w(i/N) - w((i-1)/N)]`, and the per-episode gradient
//! multiplier is `w'(i/N) + w'((i-1)/N)`, normalized over the batch.
//!
//! The CPT weighting is split at the reference return `r0`: outcomes below
//! it are weighted through `w-(P)` and outcomes at or above it through the
//! dual `1 - w+(1 - P)`. Each branch is a distortion with `w(0) = 0` and
//! `w(1) = 1`, so increments and derivatives are always taken within the
//! branch selected by the outcome itself.

use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// Declarative description of the weight function `w`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    Identity,
    /// `w(p) = Phi(Phi^-1(p) + eta)`; `eta > 0` is pessimistic.
    Wang { eta: f64 },
    /// Tversky-Kahneman weights with separate loss/gain curvature.
    Cpt { eta_minus: f64, eta_plus: f64, r0: f64 },
    /// `w(p) = min(p / q, 1)`: the lower-tail CVaR at level `q`.
    Cutoff { q: f64 },
}

/// Which branch of a piecewise weight function an outcome falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Loss,
    Gain,
}

/// How rank coefficients are formed from the weight function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// `w'(i/N) + w'((i-1)/N)` with arguments clamped to `[1/2N, 1-1/2N]`.
    #[default]
    Derivative,
    /// `N * (w(i/N) - w((i-1)/N))`.
    Increment,
}

/// Tversky-Kahneman probability weight `p^e / (p^e + (1-p)^e)^(1/e)`.
pub fn tk_weight(p: f64, eta: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let a = p.powf(eta);
    let b = (1.0 - p).powf(eta);
    a / (a + b).powf(1.0 / eta)
}

pub fn tk_deriv(p: f64, eta: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        // Diverges at both ends for eta < 1.
        return if eta < 1.0 { f64::INFINITY } else { 1.0 };
    }
    let a = p.powf(eta);
    let b = (1.0 - p).powf(eta);
    let w = a / (a + b).powf(1.0 / eta);
    w * (eta / p - (p.powf(eta - 1.0) - (1.0 - p).powf(eta - 1.0)) / (a + b))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            WeightSpec::Identity => Ok(()),
            WeightSpec::Wang { eta } if !eta.is_finite() => bad(format!("wang eta must be finite, got {eta}")),
            WeightSpec::Wang { .. } => Ok(()),
            WeightSpec::Cpt { eta_minus, eta_plus, r0 } => {
                for (name, e) in [("eta_minus", eta_minus), ("eta_plus", eta_plus)] {
                    if !(e > 0.0 && e <= 1.0) {
                        return bad(format!("cpt {name} must lie in (0, 1], got {e}"));
                    }
                }
                if !r0.is_finite() {
                    return bad(format!("cpt r0 must be finite, got {r0}"));
                }
                Ok(())
            }
            WeightSpec::Cutoff { q } if !(q > 0.0 && q <= 1.0) => bad(format!("cutoff q must lie in (0, 1], got {q}")),
            WeightSpec::Cutoff { .. } => Ok(()),
        }
    }

    /// Branch selected by an outcome with return `r`.
    pub fn side(&self, r: f64) -> Side {
        match *self {
            WeightSpec::Cpt { r0, .. } if r >= r0 => Side::Gain,
            _ => Side::Loss,
        }
    }

    pub fn eval_on(&self, p: f64, side: Side) -> Result<f64> {
        check_probability(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        Ok(match *self {
            WeightSpec::Identity => p,
            WeightSpec::Wang { eta } => normal::cdf(normal::ppf(p) + eta),
            WeightSpec::Cpt { eta_minus, eta_plus, .. } => match side {
                Side::Loss => tk_weight(p, eta_minus),
                Side::Gain => 1.0 - tk_weight(1.0 - p, eta_plus),
            },
            WeightSpec::Cutoff { q } => (p / q).min(1.0),
        })
    }

    pub fn deriv_on(&self, p: f64, side: Side) -> Result<f64> {
        check_probability(p)?;
        Ok(match *self {
            WeightSpec::Identity => 1.0,
            WeightSpec::Wang { eta } => {
                if eta == 0.0 {
                    1.0
                } else {
                    let z = normal::ppf(p);
                    (-eta * z - 0.5 * eta * eta).exp()
                }
            }
            WeightSpec::Cpt { eta_minus, eta_plus, .. } => match side {
                Side::Loss => tk_deriv(p, eta_minus),
                Side::Gain => tk_deriv(1.0 - p, eta_plus),
            },
            WeightSpec::Cutoff { q } => {
                if p < q {
                    1.0 / q
                } else {
                    0.0
                }
            }
        })
    }

    /// Probabilities where `w'` is discontinuous.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            WeightSpec::Cutoff { q } if q < 1.0 => vec![q],
            _ => Vec::new(),
        }
    }
}

/// `w(p)`; CPT specs evaluate their loss branch.
pub fn weight_eval(spec: &WeightSpec, p: f64) -> Result<f64> {
    spec.eval_on(p, Side::Loss)
}

/// `w'(p)`; CPT specs evaluate their loss branch.
pub fn weight_deriv(spec: &WeightSpec, p: f64) -> Result<f64> {
    spec.deriv_on(p, Side::Loss)
}

/// Description of the utility function `u` applied to returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    #[default]
    Identity,
    Cpt { sigma: f64, lambda: f64, r0: f64 },
}

/// Where per-episode utility is placed in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Every step's reward passes through unchanged.
    PerStep,
    /// `u(r(tau))` is assigned to the final step; all others get zero.
    Terminal,
}

impl UtilitySpec {
    pub fn cpt_default(r0: f64) -> Self {
        UtilitySpec::Cpt {
            sigma: 0.88,
            lambda: 2.25,
            r0,
        }
    }

    pub fn allocation(&self) -> Allocation {
        match self {
            UtilitySpec::Identity => Allocation::PerStep,
            UtilitySpec::Cpt { .. } => Allocation::Terminal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UtilitySpec::Identity => Ok(()),
            UtilitySpec::Cpt { sigma, lambda, r0 } => {
                if !(sigma > 0.0 && sigma <= 1.0) || !(lambda > 0.0) || !r0.is_finite() {
                    Err(Error::Config(format!(
                        "cpt utility needs sigma in (0, 1], lambda > 0, finite r0; got sigma={sigma}, lambda={lambda}, r0={r0}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            UtilitySpec::Identity => r,
            UtilitySpec::Cpt { sigma, lambda, r0 } => {
                if r >= r0 {
                    (r - r0).powf(sigma)
                } else {
                    -lambda * (r0 - r).powf(sigma)
                }
            }
        }
    }

    /// Per-step utilities for an episode's reward stream.
    pub fn allocate(&self, rewards: &[f64]) -> Vec<f64> {
        match self.allocation() {
            Allocation::PerStep => rewards.to_vec(),
            Allocation::Terminal => {
                let mut out = vec![0.0; rewards.len()];
                if let Some(last) = out.last_mut() {
                    *last = self.eval(rewards.iter().sum());
                }
                out
            }
        }
    }
}

pub fn utility_eval(spec: &UtilitySpec, r: f64) -> f64 {
    spec.eval(r)
}

/// Per-episode gradient multipliers for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCoefficients {
    /// Normalized coefficients in rank order (worst episode first); mean 1.
    pub coefficients: Vec<f64>,
    /// Coefficients before normalization, rank order.
    pub raw: Vec<f64>,
    /// Batch mean of `raw`.
    pub norm: f64,
    /// `order[rank] = original episode index`.
    pub order: Vec<usize>,
}

impl RankCoefficients {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Normalized coefficients indexed by original episode position.
    pub fn by_episode(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (rank, &idx) in self.order.iter().enumerate() {
            out[idx] = self.coefficients[rank];
        }
        out
    }
}

/// Stable ascending sort permutation; ties keep collection order.
pub fn sort_permutation(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Raw (unnormalized) derivative-mode multipliers `w'(i/N) + w'((i-1)/N)`
/// for episodes in rank order, given the branch of each.
pub(crate) fn raw_rank_multipliers(
    spec: &WeightSpec,
    sides: &[Side],
    mode: CoefficientMode,
) -> Result<Vec<f64>> {
    let n = sides.len();
    let nf = n as f64;
    let eps = 1.0 / (2.0 * nf);
    let clamp = |p: f64| p.clamp(eps, 1.0 - eps);
    sides
        .iter()
        .enumerate()
        .map(|(k, &side)| {
            let i = (k + 1) as f64;
            match mode {
                CoefficientMode::Derivative => {
                    Ok(spec.deriv_on(clamp(i / nf), side)? + spec.deriv_on(clamp((i - 1.0) / nf), side)?)
                }
                CoefficientMode::Increment => {
                    Ok(nf * (spec.eval_on(i / nf, side)? - spec.eval_on((i - 1.0) / nf, side)?))
                }
            }
        })
        .collect()
}

pub fn rank_coefficients(returns: &[f64], spec: &WeightSpec) -> Result<RankCoefficients> {
    rank_coefficients_with(returns, spec, CoefficientMode::Derivative)
}

pub fn rank_coefficients_with(
    returns: &[f64],
    spec: &WeightSpec,
    mode: CoefficientMode,
) -> Result<RankCoefficients> {
    if returns.len() < 2 {
        return Err(Error::BatchTooSmall {
            min: 2,
            got: returns.len(),
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("episode returns"));
    }
    let order = sort_permutation(returns);
    let sides: Vec<Side> = order.iter().map(|&i| spec.side(returns[i])).collect();
    let raw = raw_rank_multipliers(spec, &sides, mode)?;
    let norm = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rank coefficients have non-positive mean {norm}"
        )));
    }
    let coefficients = raw.iter().map(|c| c / norm).collect();
    Ok(RankCoefficients {
        coefficients,
        raw,
        norm,
        order,
    })
}

/// Sorted-sample estimate `sum_i u(r_(i)) [w(i/N) - w((i-1)/N)]`.
pub fn objective_estimate(returns: &[f64], u: &UtilitySpec, w: &WeightSpec) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Empty("objective_estimate"));
    }
    let n = returns.len() as f64;
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for (k, &r) in sorted.iter().enumerate() {
        let side = w.side(r);
        let i = (k + 1) as f64;
        let dw = w.eval_on(i / n, side)? - w.eval_on((i - 1.0) / n, side)?;
        total += u.eval(r) * dw;
    }
    Ok(total)
}
