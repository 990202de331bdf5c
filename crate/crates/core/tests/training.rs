//! End-to-end behaviour of the training loop on reduced configurations.

use demorec::config::RunConfig;
use demorec::pipeline::{prepare, train_policy, Prepared};
use demorec::policy::{entropy, PolicyBundle};

fn small(extra: &[&str]) -> RunConfig {
    let mut overrides: Vec<String> = [
        "policy.rounds=12",
        "expert.n_demo_users=12",
        "env.n_train_users=50",
        "env.offline_transitions=1500",
        "eval.n_episodes=10",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    overrides.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::parse("", &overrides).unwrap()
}

fn mean_entropy(prepared: &Prepared, bundle: &PolicyBundle) -> f64 {
    let states: Vec<&[f64]> = prepared.demos.transitions().map(|t| t.state.encoding.as_slice()).collect();
    states
        .iter()
        .map(|s| entropy(&bundle.actor.forward(s).unwrap()))
        .sum::<f64>()
        / states.len() as f64
}

#[test]
fn larger_entropy_bonus_never_lowers_policy_entropy() {
    let base = small(&[]);
    let prepared = prepare(&base, 0).unwrap();
    let mut last = f64::NEG_INFINITY;
    for alpha in [0.01, 0.1, 0.2] {
        let config = small(&[&format!("policy.alpha_ent={alpha}")]);
        let outcome = train_policy(&prepared, &config, &config.train_settings(), 0).unwrap();
        let h = mean_entropy(&prepared, &outcome.bundle);
        assert!(h >= last, "alpha_ent {alpha}: entropy {h} fell below {last}");
        last = h;
    }
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let config = small(&[]);
    let run = || {
        let prepared = prepare(&config, 4).unwrap();
        train_policy(&prepared, &config, &config.train_settings(), 4).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.bundle.actor.params(), b.bundle.actor.params());
    assert_eq!(a.weighted.weights(), b.weighted.weights());
}

#[test]
fn zero_rounds_return_the_initial_bundle() {
    let config = small(&["policy.rounds=0"]);
    let prepared = prepare(&config, 1).unwrap();
    let outcome = train_policy(&prepared, &config, &config.train_settings(), 1).unwrap();
    let fresh = PolicyBundle::new(
        outcome.bundle.actor.input_dim(),
        outcome.bundle.actor.output_dim(),
        outcome.bundle.discriminator.input_dim(),
        &config.policy,
        &config.irl,
        1,
    )
    .unwrap();
    assert_eq!(outcome.bundle.actor.params(), fresh.actor.params());
    assert_eq!(outcome.bundle.q.params(), fresh.q.params());
    assert!(outcome.metrics.is_empty());
}

#[test]
fn demonstration_weights_respect_the_clip_range() {
    let config = small(&[]);
    let prepared = prepare(&config, 2).unwrap();
    let outcome = train_policy(&prepared, &config, &config.train_settings(), 2).unwrap();
    let (lo, hi) = config.weighting.clip_range;
    let w = outcome.weighted.weights();
    assert_eq!(w.len(), prepared.demos.len());
    assert!(w.iter().all(|x| (lo..=hi).contains(x)));
}
