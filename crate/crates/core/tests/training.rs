use proptest::prelude::*;
use riskgrad::algorithms::{lambda_update, LagrangeState, TrainConfig, Trainer};
use riskgrad::critics::ValueFn;
use riskgrad::envs::TabularMDP;
use riskgrad::numeric::AdamConfig;
use riskgrad::oracle::{exact_gradient, finite_diff, objective_at};
use riskgrad::policy::{CategoricalPolicy, Policy};
use riskgrad::risk::{UtilitySpec, WeightSpec};

fn small(extra: &str) -> TrainConfig {
    let text = format!(
        r#"{{"env": {{"name": "point_hazard", "horizon": 30}}, "batch_episodes": 6,
            "policy_hidden": [8], "critic_hidden": [8], "critic_steps": 10,
            "entropy_samples": 50{extra}}}"#
    );
    let cfg: TrainConfig = serde_json::from_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn identity_c3po_epoch_is_one_vanilla_advantage_step() {
    let cfg = small(r#", "variant": "gae", "kl_stop": 1e9, "policy_steps": 1, "clip_correction": false"#);
    let mut full = Trainer::new(cfg.clone(), 4).unwrap();
    full.step_epoch().unwrap();

    let mut manual = Trainer::new(cfg.clone(), 4).unwrap();
    let episodes = manual.collect().unwrap();
    let (batch, _) = manual.prepare_c3po_batch(episodes).unwrap();
    let critic = manual.critic().clone();
    let policy = manual.policy().clone();
    let n = batch.n() as f64;
    let mut grad = vec![0.0; policy.params().len()];
    for e in &batch.episodes {
        let mut v: Vec<f64> = e.observations.iter().map(|o| critic.value(o).unwrap()).collect();
        v.push(0.0);
        let mut acc = 0.0;
        let mut adv = vec![0.0; e.len()];
        for t in (0..e.len()).rev() {
            acc = e.rewards[t] + cfg.gamma * v[t + 1] - v[t] + cfg.gamma * cfg.lambda_gae * acc;
            adv[t] = acc;
        }
        for t in 0..e.len() {
            policy
                .log_prob_with_grad(&e.observations[t], &e.raw_actions[t], &mut grad, |_| adv[t] / n)
                .unwrap();
        }
    }
    let mut params = policy.params().clone();
    let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
    params.adam_step(&descent, &AdamConfig::with_lr(cfg.policy_lr)).unwrap();
    for (a, b) in full.policy().params().values().iter().zip(params.values()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(full.critic().net.params.values(), critic.net.params.values());
}

#[test]
fn vacuous_cost_limit_keeps_lambda_at_zero() {
    let mut t = Trainer::new(small(r#", "algorithm": "crisp""#), 2).unwrap();
    for r in t.train(4).unwrap() {
        assert_eq!(r.lambda, 0.0);
        assert!(r.is_finite());
    }
}

#[test]
fn infeasible_cost_limit_drives_lambda_up() {
    let mut t = Trainer::new(small(r#", "algorithm": "crisp", "cost_limit": 0.0, "lambda_lr": 0.5"#), 1).unwrap();
    let reports = t.train(6).unwrap();
    let lambdas: Vec<f64> = reports.iter().map(|r| r.lambda).collect();
    assert!(lambdas[0] > 0.0, "{lambdas:?}");
    for w in lambdas.windows(2) {
        assert!(w[1] >= w[0], "{lambdas:?}");
    }
    assert!(lambdas.iter().all(|l| (0.0..=100.0).contains(l)));
}

#[test]
fn lambda_climbs_on_a_constant_violation() {
    let mut s = LagrangeState::new(0.0, 0.05, Some(1.0)).unwrap();
    for _ in 0..200 {
        let next = lambda_update(&s, 3.0);
        assert!(next.lambda > s.lambda);
        s = next;
    }
    let mut s = LagrangeState::new(0.0, 0.05, Some(1.0)).unwrap();
    for _ in 0..50 {
        s = lambda_update(&s, 0.25);
        assert_eq!(s.lambda, 0.0);
    }
}

fn weight_strategy() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        Just(WeightSpec::Identity),
        (-1.0f64..1.0).prop_map(|eta| WeightSpec::Wang { eta }),
        (0.3f64..1.0, 0.3f64..1.0, 0.5f64..4.0).prop_map(|(a, b, r0)| WeightSpec::Cpt {
            eta_minus: a,
            eta_plus: b,
            r0
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_gradient_matches_finite_differences(
        logits in proptest::collection::vec(-1.5f64..1.5, 6),
        w in weight_strategy(),
    ) {
        let mdp = TabularMDP::standard();
        let rows: Vec<Vec<f64>> = logits.chunks(2).map(<[f64]>::to_vec).collect();
        let policy = CategoricalPolicy::tabular(&rows).unwrap();
        let u = UtilitySpec::Identity;
        let g = exact_gradient(&mdp, &policy, &u, &w).unwrap();
        let x = policy.params().values().to_vec();
        let fd = finite_diff(|th| objective_at(&mdp, &policy, &u, &w, th), &x, 1e-6).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
