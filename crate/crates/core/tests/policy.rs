mod common;

use proptest::prelude::*;
use specpolicy::policy::{
    compute_lambda, compute_probabilities, compute_relative_loss, make_plan, map_parameters, map_strategy_parameters,
    select_strategies, AugmentVariant, LossReport, PolicyError, PolicyState,
};
use specpolicy::{derive_sample_seed, AugmentConfig, BetaParams, FeatureMatrix, SampleSeed, StrategyId, StrategySet};
use std::collections::HashSet;

fn state_with(variant: AugmentVariant, p: [f64; 3]) -> PolicyState {
    let mut s = PolicyState::new(variant, BetaParams::POLICY_DEFAULT, 77);
    s.epoch = 1;
    s.prev_losses = [1.0; 3];
    s.curr_losses = p;
    s.probabilities = p;
    s.relative = [0.5; 3];
    s.lambda = [0.5; 3];
    s
}

fn report(epoch: u64, losses: [f64; 3]) -> LossReport {
    LossReport { epoch, losses }
}

#[test]
fn relative_loss_examples() {
    assert_eq!(compute_relative_loss(2.0, 1.5).unwrap(), 0.25);
    assert_eq!(compute_relative_loss(2.0, 2.5).unwrap(), 0.2);
    assert_eq!(compute_relative_loss(0.0, 0.731).unwrap(), 1.0);
    assert_eq!(compute_relative_loss(3.0, 3.0).unwrap(), 0.0);
    assert!(matches!(compute_relative_loss(1.0, 0.0), Err(PolicyError::NonPositiveCurrent(_))));
}

#[test]
fn lambda_examples_use_the_oracle() {
    let beta = BetaParams::POLICY_DEFAULT;
    assert_eq!(compute_lambda(0.0, beta).unwrap(), 1.0);
    assert_eq!(compute_lambda(1.0, beta).unwrap(), 0.0);
    let want = 1.0 - common::reg_inc_beta_oracle(0.25, 0.6, 4.4);
    assert!((compute_lambda(0.25, beta).unwrap() - want).abs() < 1e-10);
    assert!(compute_lambda(1.5, beta).is_err());
}

#[test]
fn mapping_examples() {
    let cfg = AugmentConfig::default();
    for (lambda, rho0, n) in [(0.0, 0.2, 2), (1.0, 0.6, 6), (0.5, 0.4, 4)] {
        let p = map_parameters(lambda, &cfg).unwrap();
        assert!((p.rho0 - rho0).abs() < 1e-15);
        assert_eq!((p.n_time_masks, p.n_freq_masks), (n, n));
        assert_eq!((p.t_width, p.f_width), (cfg.time_mask_width, cfg.freq_mask_width));
    }
    let p = map_strategy_parameters(&[1.0, 0.0, 0.5], &cfg).unwrap();
    assert!((p.rho0 - 0.6).abs() < 1e-15);
    assert_eq!((p.n_freq_masks, p.n_time_masks), (2, 4));
}

#[test]
fn advance_examples() {
    let fresh = PolicyState::new(AugmentVariant::Policy, BetaParams::POLICY_DEFAULT, 3);
    let s1 = fresh.advance_epoch(&report(1, [4.0, 0.01, 900.0])).unwrap();
    assert_eq!((s1.relative, s1.lambda), ([1.0; 3], [0.0; 3]));

    let mut s = state_with(AugmentVariant::Policy, [1.0 / 3.0; 3]);
    s.curr_losses = [2.0; 3];
    let s2 = s.advance_epoch(&report(2, [1.5, 2.5, 2.0])).unwrap();
    assert_eq!(s2.relative, [0.25, 0.2, 0.0]);
    assert_eq!(s2.prev_losses, [2.0; 3]);
    assert_eq!(s2.epoch, 2);

    let s3 = s2.advance_epoch(&report(3, [1.5, 2.5, 2.0])).unwrap();
    assert_eq!((s3.relative, s3.lambda), ([0.0; 3], [1.0; 3]));
    let p = map_strategy_parameters(&s3.lambda, &AugmentConfig::default()).unwrap();
    assert_eq!((p.rho0, p.n_freq_masks, p.n_time_masks), (0.6, 6, 6));

    assert!(matches!(s3.advance_epoch(&report(5, [1.0; 3])), Err(PolicyError::EpochMismatch { .. })));
    assert!(s3.advance_epoch(&report(4, [1.0, 0.0, 1.0])).is_err());
}

#[test]
fn selection_examples() {
    let seed = SampleSeed::new(1, 1, 0);
    let s = state_with(AugmentVariant::Prob, [1.0, 0.0, 0.0]);
    for i in 0..200 {
        let sel = select_strategies(AugmentVariant::Prob, &s, &SampleSeed::new(i, 1, i)).unwrap();
        assert_eq!(sel.active(), StrategySet::single(StrategyId::TimeWarp));
    }
    for i in 0..50 {
        let sel = select_strategies(AugmentVariant::SpecAugment, &s, &SampleSeed::new(i, 0, 0)).unwrap();
        assert_eq!(sel.active(), StrategySet::ALL);
    }
    assert!(select_strategies(AugmentVariant::None, &s, &seed).unwrap().active().is_empty());
    let fresh = PolicyState::new(AugmentVariant::Policy, BetaParams::POLICY_DEFAULT, 0);
    assert!(matches!(select_strategies(AugmentVariant::Policy, &fresh, &seed), Err(PolicyError::StaleState(_))));
}

#[test]
fn plans_by_variant() {
    let m = FeatureMatrix::from_fn(60, 24, |t, f| (t + f) as f64).unwrap();
    let cfg = AugmentConfig::default();
    let s = state_with(AugmentVariant::Policy, [0.2, 0.5, 0.3]);
    let none = make_plan(AugmentVariant::None, &s, SampleSeed::new(1, 1, 0), &m, &cfg).unwrap();
    assert_eq!(none.operation_count(), 0);
    for i in 0..300 {
        let seed = SampleSeed::new(1, 1, i);
        let spec = make_plan(AugmentVariant::SpecAugment, &s, seed, &m, &cfg).unwrap();
        assert_eq!(spec.active, StrategySet::ALL);
        for v in [AugmentVariant::Random, AugmentVariant::Prob, AugmentVariant::ProbIbf] {
            assert_eq!(make_plan(v, &s, seed, &m, &cfg).unwrap().active.len(), 1);
        }
        let sys5 = make_plan(AugmentVariant::ProbIbfPlusSpec, &s, seed, &m, &cfg).unwrap();
        assert_eq!(sys5.stages.len(), 2);
        assert_eq!(sys5.stages[1].active, StrategySet::ALL);
        assert_eq!(sys5.stages[1].params, cfg.default_params());
    }
}

#[test]
fn bootstrap_policy_behaves_as_random() {
    let m = FeatureMatrix::from_fn(60, 24, |t, f| (t * f) as f64).unwrap();
    let cfg = AugmentConfig::default();
    let fresh = PolicyState::new(AugmentVariant::Policy, BetaParams::POLICY_DEFAULT, 5);
    for i in 0..100 {
        let seed = SampleSeed::new(5, 0, i);
        let a = make_plan(AugmentVariant::Policy, &fresh, seed, &m, &cfg).unwrap();
        let b = make_plan(AugmentVariant::Random, &fresh, seed, &m, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn seed_derivation_is_injective_on_grid() {
    for master in [0u64, 1, 42, u64::MAX] {
        let mut seen = HashSet::with_capacity(100_000);
        for e in 0..100 {
            for i in 0..1000 {
                assert!(seen.insert(derive_sample_seed(master, e, i)), "collision at ({master}, {e}, {i})");
            }
        }
    }
    assert_ne!(derive_sample_seed(1, 0, 0), derive_sample_seed(0, 1, 0));
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-9f64..1e-3, 1e-3f64..10.0, 10.0f64..1e9]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn probabilities_normalize_and_keep_argmax(l in [positive(), positive(), positive()]) {
        let p = compute_probabilities(&l).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let argmax = |v: &[f64; 3]| (0..3).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        let top = argmax(&l);
        prop_assert!(p[argmax(&p)] == p[top]);
    }

    #[test]
    fn relative_loss_in_unit_interval(prev in prop_oneof![Just(0.0), positive()], curr in positive()) {
        let r = compute_relative_loss(prev, curr).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn mapping_within_table_ranges(lambda in 0.0f64..=1.0) {
        let p = map_parameters(lambda, &AugmentConfig::default()).unwrap();
        prop_assert!((0.2..=0.6).contains(&p.rho0));
        prop_assert!((2..=6).contains(&p.n_time_masks) && p.n_time_masks == p.n_freq_masks);
    }

    #[test]
    fn first_advance_always_zero_lambda(l in [positive(), positive(), positive()], seed in any::<u64>()) {
        let s = PolicyState::new(AugmentVariant::Policy, BetaParams::POLICY_DEFAULT, seed)
            .advance_epoch(&report(1, l)).unwrap();
        prop_assert_eq!(s.lambda, [0.0; 3]);
        prop_assert!(s.validate().is_ok());
    }

    #[test]
    fn policy_cardinality(p0 in 0.0f64..1.0, p1 in 0.0f64..1.0, p2 in 0.01f64..1.0, seed in any::<u64>()) {
        let sum = p0 + p1 + p2;
        let s = state_with(AugmentVariant::Policy, [p0 / sum, p1 / sum, p2 / sum]);
        let sel = select_strategies(AugmentVariant::Policy, &s, &SampleSeed::new(seed, 1, 0)).unwrap();
        prop_assert!((1..=3).contains(&sel.active().len()));
        prop_assert!(!sel.fallback || sel.sampled.len() == 1);
    }
}

#[test]
fn lambda_monotone_on_grid() {
    let beta = BetaParams::POLICY_DEFAULT;
    let mut last = 1.0;
    for k in 0..=2000 {
        let l = compute_lambda(k as f64 / 2000.0, beta).unwrap();
        assert!(l <= last && (0.0..=1.0).contains(&l));
        last = l;
    }
}
