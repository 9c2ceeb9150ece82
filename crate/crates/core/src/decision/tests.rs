use super::*;
use crate::baseline::{estimate_baseline, expected_rate_curves};
use crate::instance::LabeledInstance;
use proptest::prelude::*;

fn instances(group: &str, ps: &[f64]) -> Vec<LabeledInstance<f64>> {
    ps.iter()
        .enumerate()
        .map(|(i, &p)| LabeledInstance::new(format!("{group}{i}"), p, group).with_calibrated(p))
        .collect()
}

fn baseline(group: &str, ps: &[f64]) -> BaselineDistribution<f64> {
    estimate_baseline(&instances(group, ps), &CellKey::group(group), 100).unwrap()
}

fn u(a: f64, b: f64, g: f64) -> UtilityParams<f64> {
    UtilityParams::new(a, b, g).unwrap()
}

fn uniform_rule(baselines: &[BaselineDistribution<f64>], tau: f64) -> DecisionRule<f64> {
    DecisionRule {
        cells: baselines.iter().map(|b| CellRule::deterministic(&b.cell(), Direction::AcceptAbove, tau)).collect(),
    }
}

fn spread_ps(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn utility_of_trivial_rules() {
    let bs = vec![baseline("a", &[0.1, 0.4, 0.9]), baseline("b", &[0.3, 0.6])];
    let w = population_shares(&bs);
    let reject_all = uniform_rule(&bs, 1.0 + 1e-9);
    let mut reject_all = reject_all;
    for c in &mut reject_all.cells {
        c.tau_lo = 1.0;
        c.tau_hi = 1.0;
    }
    // no probability in the data reaches 1, so tau = 1 rejects everyone
    assert!((evaluate_utility(&reject_all, &bs, &w, &u(1.0, 1.0, 0.3)).unwrap() - 0.3).abs() < 1e-12);
    let accept_all = uniform_rule(&bs, 0.0);
    let mean = (0.1 + 0.4 + 0.9 + 0.3 + 0.6) / 5.0;
    assert!((evaluate_utility(&accept_all, &bs, &w, &u(1.0, 0.0, 0.0)).unwrap() - mean).abs() < 1e-12);
}

#[test]
fn point_mass_utility() {
    let bs = vec![baseline("a", &[0.8; 5])];
    let w = population_shares(&bs);
    let got = evaluate_utility(&uniform_rule(&bs, 0.0), &bs, &w, &u(1.0, 1.0, 0.0)).unwrap();
    assert!((got - 0.6).abs() < 1e-12);
}

#[test]
fn utility_rejects_mismatched_inputs() {
    let bs = vec![baseline("a", &[0.5])];
    let w = population_shares(&bs);
    let other = vec![baseline("b", &[0.5])];
    let rule = uniform_rule(&other, 0.5);
    assert!(matches!(evaluate_utility(&rule, &bs, &w, &u(1.0, 1.0, 0.0)), Err(DecisionError::GroupMismatch(_))));
    let mut bad = w.clone();
    bad.insert(CellKey::group("a"), 0.5);
    assert_eq!(
        evaluate_utility(&uniform_rule(&bs, 0.5), &bs, &bad, &u(1.0, 1.0, 0.0)),
        Err(DecisionError::InvalidWeights)
    );
}

#[test]
fn closed_form_thresholds() {
    assert_eq!(optimal_unconstrained_threshold(&u(1.0, 1.0, 0.0)).unwrap(), 0.5);
    assert_eq!(optimal_unconstrained_threshold(&u(3.0, 1.0, 0.0)).unwrap(), 0.25);
    assert_eq!(optimal_unconstrained_threshold(&u(1.0, 1.0, 1.0)).unwrap(), 1.0);
    assert_eq!(UtilityParams::new(1.0, -1.0, 0.0), Err(DecisionError::DegenerateUtility));
    let neg = UtilityParams { alpha: -2.0, beta: 1.0, gamma: 0.0 };
    assert_eq!(optimal_unconstrained_threshold(&neg), Err(DecisionError::NegativeRegime));
    assert_eq!(UtilityParams::new(f64::NAN, 1.0, 0.0), Err(DecisionError::InvalidUtility));
}

#[test]
fn closed_form_beats_grid() {
    let bs = vec![baseline("a", &spread_ps(0.0, 1.0, 301)), baseline("b", &spread_ps(0.2, 0.7, 150))];
    let w = population_shares(&bs);
    for params in [u(1.0, 1.0, 0.0), u(3.0, 1.0, 0.0), u(1.0, 2.0, 0.25), u(0.5, 4.0, -0.1)] {
        let best = optimize_unconstrained(&bs, &w, &params).unwrap().expected_utility_per_capita;
        for k in 0..=1000 {
            let got = evaluate_utility(&uniform_rule(&bs, k as f64 / 1000.0), &bs, &w, &params).unwrap();
            assert!(got <= best + 1e-12, "tau {k} beats the closed form");
        }
    }
}

#[test]
fn unconstrained_symmetry_and_dominance() {
    let ps = spread_ps(0.05, 0.95, 40);
    let bs = vec![baseline("a", &ps), baseline("b", &ps)];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.1);
    let r = optimize_unconstrained(&bs, &w, &params).unwrap();
    assert_eq!(r.rule.cells[0].tau_lo, r.rule.cells[1].tau_lo);
    for tau in [0.0, 1.0] {
        let trivial = evaluate_utility(&uniform_rule(&bs, tau), &bs, &w, &params).unwrap();
        assert!(r.expected_utility_per_capita >= trivial);
    }
}

#[test]
fn identical_groups_never_bind() {
    let ps = spread_ps(0.05, 0.95, 40);
    let bs = vec![baseline("a", &ps), baseline("b", &ps)];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.0);
    let free = optimize_unconstrained(&bs, &w, &params).unwrap();
    for criterion in Criterion::ALL {
        if criterion == Criterion::ConditionalStatisticalParity {
            continue;
        }
        let c = FairnessConstraint::new(criterion, 0.01, None).unwrap();
        let r = optimize_constrained(&bs, &w, &params, &c, 0.005).unwrap();
        assert!((r.expected_utility_per_capita - free.expected_utility_per_capita).abs() < 1e-12, "{criterion}");
        assert_eq!(r.rule.cells[0], CellRule { group: "a".into(), ..r.rule.cells[1].clone() }, "{criterion}");
        assert_eq!(r.rule.cells[0].tau_lo, 0.5, "{criterion}");
        for g in r.achieved_gaps.values() {
            assert!(g.unwrap().abs() < 1e-12, "{criterion}");
        }
    }
}

#[test]
fn vacuous_constraint_returns_unconstrained_rule() {
    let bs = vec![baseline("a", &spread_ps(0.5, 0.95, 30)), baseline("b", &spread_ps(0.05, 0.5, 30))];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.0);
    let free = optimize_unconstrained(&bs, &w, &params).unwrap();
    for criterion in [Criterion::Independence, Criterion::EqualizedOdds, Criterion::Sufficiency] {
        let c = FairnessConstraint::new(criterion, 1.0, None).unwrap();
        let r = optimize_constrained(&bs, &w, &params, &c, 0.005).unwrap();
        assert_eq!(r.rule, free.rule);
    }
}

/// Exhaustive pairs of grid thresholds, evaluated through the public rate curves.
fn independence_by_pairs(bs: &[BaselineDistribution<f64>], w: &BTreeMap<CellKey, f64>, p: &UtilityParams<f64>, eps: f64, n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let (t0, t1) = (i as f64 / n as f64, j as f64 / n as f64);
            let a0 = expected_rate_curves(&bs[0], t0, Direction::AcceptAbove).acceptance;
            let a1 = expected_rate_curves(&bs[1], t1, Direction::AcceptAbove).acceptance;
            if (a0 - a1).abs() <= eps + 1e-12 {
                let rule = DecisionRule {
                    cells: vec![
                        CellRule::deterministic(&bs[0].cell(), Direction::AcceptAbove, t0),
                        CellRule::deterministic(&bs[1].cell(), Direction::AcceptAbove, t1),
                    ],
                };
                best = best.max(evaluate_utility(&rule, bs, w, p).unwrap());
            }
        }
    }
    best
}

#[test]
fn independence_matches_pairwise_enumeration() {
    let bs = vec![baseline("a", &spread_ps(0.55, 0.95, 25)), baseline("b", &spread_ps(0.05, 0.6, 35))];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.0);
    let free = optimize_unconstrained(&bs, &w, &params).unwrap().expected_utility_per_capita;
    for eps in [0.0, 0.01, 0.1, 0.3] {
        let c = FairnessConstraint::new(Criterion::Independence, eps, None).unwrap();
        let r = optimize_constrained(&bs, &w, &params, &c, 0.01).unwrap();
        let want = independence_by_pairs(&bs, &w, &params, eps, 100);
        assert!((r.expected_utility_per_capita - want).abs() < 1e-9, "eps {eps}");
        assert!(r.expected_utility_per_capita <= free + 1e-12);
        assert!(r.achieved_gaps[&GapKind::Acceptance].unwrap() <= eps + 1e-9);
        assert!(r.binding[&GapKind::Acceptance]);
    }
}

#[test]
fn equalized_odds_randomizes_when_needed() {
    let bs = vec![baseline("a", &spread_ps(0.3, 0.95, 20)), baseline("b", &spread_ps(0.05, 0.7, 20))];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.0);
    let c = FairnessConstraint::new(Criterion::EqualizedOdds, 0.01, None).unwrap();
    let r = optimize_constrained(&bs, &w, &params, &c, 0.01).unwrap();
    assert!(r.achieved_gaps[&GapKind::Tpr].unwrap() <= 0.01 + 1e-9);
    assert!(r.achieved_gaps[&GapKind::Fpr].unwrap() <= 0.01 + 1e-9);
    let det = FairnessConstraint::new(Criterion::EqualOpportunity, 0.01, None).unwrap();
    let looser = optimize_constrained(&bs, &w, &params, &det, 0.01).unwrap();
    assert!(r.expected_utility_per_capita <= looser.expected_utility_per_capita + 1e-12);
}

#[test]
fn predictive_parity_direction_law() {
    let bs = vec![baseline("a", &spread_ps(0.3, 0.95, 20)), baseline("b", &spread_ps(0.05, 0.7, 20))];
    let w = population_shares(&bs);
    let params = u(1.0, 1.0, 0.0);
    for eps in [0.01, 0.05, 0.1] {
        let c = FairnessConstraint::new(Criterion::PredictiveParity, eps, None).unwrap();
        let r = optimize_constrained(&bs, &w, &params, &c, 0.005).unwrap();
        let v = r.targets[0];
        for (rule, b) in r.rule.cells.iter().zip(&bs) {
            let want = if v >= b.base_rate { Direction::AcceptAbove } else { Direction::AcceptBelow };
            assert_eq!(rule.direction, want);
        }
        assert!(r.achieved_gaps[&GapKind::Ppv].unwrap() <= eps + 1e-9);
    }
}

#[test]
fn separated_point_masses_have_no_common_ppv() {
    let bs = vec![baseline("a", &[0.2; 10]), baseline("b", &[0.9; 10])];
    let w = population_shares(&bs);
    let c = FairnessConstraint::new(Criterion::PredictiveParity, 0.01, None).unwrap();
    let err = optimize_constrained(&bs, &w, &u(1.0, 1.0, 0.0), &c, 0.005).unwrap_err();
    assert!(matches!(err, DecisionError::Infeasible { criterion: Criterion::PredictiveParity, .. }));
}

#[test]
fn conditional_parity_works_per_stratum() {
    let mut inst = Vec::new();
    for (g, s, lo, hi) in [("a", "x", 0.4, 0.9), ("b", "x", 0.1, 0.6), ("a", "y", 0.2, 0.5), ("b", "y", 0.25, 0.55)] {
        for (i, p) in spread_ps(lo, hi, 15).into_iter().enumerate() {
            inst.push(LabeledInstance::new(format!("{g}{s}{i}"), p, g).with_stratum(s).with_calibrated(p));
        }
    }
    let cells = [("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")];
    let bs: Vec<_> = cells
        .iter()
        .map(|(g, s)| estimate_baseline(&inst, &CellKey::with_stratum(*g, *s), 100).unwrap())
        .collect();
    let w = population_shares(&bs);
    let strata = ["x".to_string(), "y".to_string()].into_iter().collect();
    let c = FairnessConstraint::new(Criterion::ConditionalStatisticalParity, 0.02, Some(strata)).unwrap();
    let r = optimize_constrained(&bs, &w, &u(1.0, 1.0, 0.0), &c, 0.01).unwrap();
    assert_eq!(r.rule.cells.len(), 4);
    assert!(r.achieved_gaps[&GapKind::ConditionalAcceptance].unwrap() <= 0.02 + 1e-9);
    // without strata the constraint is refused
    let plain = vec![baseline("a", &[0.5]), baseline("b", &[0.5])];
    let err = optimize_constrained(&plain, &population_shares(&plain), &u(1.0, 1.0, 0.0), &c, 0.01);
    assert!(matches!(err, Err(DecisionError::GroupMismatch(_))));
}

#[test]
fn resolution_is_validated() {
    let bs = vec![baseline("a", &[0.5])];
    let w = population_shares(&bs);
    let c = FairnessConstraint::new(Criterion::Independence, 0.01, None).unwrap();
    assert!(matches!(
        optimize_constrained(&bs, &w, &u(1.0, 1.0, 0.0), &c, 0.3),
        Err(DecisionError::InvalidResolution(_))
    ));
}

#[test]
fn apply_deterministic_and_band() {
    let cell = CellKey::group("g");
    let det = DecisionRule { cells: vec![CellRule::deterministic(&cell, Direction::AcceptAbove, 0.5)] };
    let out = apply_rule(&det, &instances("g", &[0.7, 0.5, 0.3]), 1).unwrap();
    let d: Vec<_> = out.iter().map(|i| i.decision.unwrap()).collect();
    assert_eq!(d, vec![true, true, false]);

    let band = |mix| DecisionRule {
        cells: vec![CellRule { direction: Direction::AcceptAbove, tau_lo: 0.2, tau_hi: 0.8, mix, ..CellRule::deterministic(&cell, Direction::AcceptAbove, 0.0) }],
    };
    let inside = instances("g", &vec![0.5; 10_000]);
    assert!(apply_rule(&band(0.0), &inside, 9).unwrap().iter().all(|i| i.decision == Some(false)));
    let half = apply_rule(&band(0.5), &inside, 9).unwrap();
    let share = half.iter().filter(|i| i.decision == Some(true)).count() as f64 / 10_000.0;
    assert!((share - 0.5).abs() < 0.02, "{share}");
    assert_eq!(half, apply_rule(&band(0.5), &inside, 9).unwrap());
}

#[test]
fn apply_accept_below_mirrors() {
    let cell = CellKey::group("g");
    let rule = DecisionRule {
        cells: vec![CellRule { direction: Direction::AcceptBelow, tau_lo: 0.3, tau_hi: 0.6, mix: 1.0, ..CellRule::deterministic(&cell, Direction::AcceptBelow, 0.0) }],
    };
    let out = apply_rule(&rule, &instances("g", &[0.3, 0.45, 0.6, 0.61]), 0).unwrap();
    let d: Vec<_> = out.iter().map(|i| i.decision.unwrap()).collect();
    assert_eq!(d, vec![true, true, true, false]);
}

#[test]
fn apply_errors() {
    let rule = DecisionRule { cells: vec![CellRule::deterministic(&CellKey::group("g"), Direction::AcceptAbove, 0.5)] };
    let unknown = instances("h", &[0.5]);
    assert!(matches!(apply_rule(&rule, &unknown, 0), Err(DecisionError::UnknownGroup { .. })));
    let raw = vec![LabeledInstance::new("x", 0.5, "g")];
    assert!(matches!(apply_rule(&rule, &raw, 0), Err(DecisionError::UncalibratedInstance { .. })));
}

#[test]
fn result_round_trips_through_json() {
    let bs = vec![baseline("a", &spread_ps(0.3, 0.95, 20)), baseline("b", &spread_ps(0.05, 0.7, 20))];
    let w = population_shares(&bs);
    let c = FairnessConstraint::new(Criterion::EqualizedOdds, 0.02, None).unwrap();
    let r = optimize_constrained(&bs, &w, &u(1.0, 1.0, 0.0), &c, 0.01).unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: OptimizationResult<f64> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn single_precision_pipeline() {
    let inst: Vec<LabeledInstance<f32>> = (0..20)
        .map(|i| {
            let p = i as f32 / 20.0;
            LabeledInstance::new(format!("i{i}"), p, if i % 2 == 0 { "a" } else { "b" }).with_calibrated(p)
        })
        .collect();
    let bs: Vec<_> = ["a", "b"].iter().map(|g| estimate_baseline(&inst, &CellKey::group(*g), 20).unwrap()).collect();
    let w = population_shares(&bs);
    let p = UtilityParams::new(1.0f32, 1.0, 0.0).unwrap();
    let c = FairnessConstraint::new(Criterion::Independence, 0.1f32, None).unwrap();
    let r = optimize_constrained(&bs, &w, &p, &c, 0.05f32).unwrap();
    assert!(r.achieved_gaps[&GapKind::Acceptance].unwrap() <= 0.1 + 1e-6);
}

proptest! {
    #[test]
    fn closed_form_identity(a in 0.01f64..10.0, b in 0.01f64..10.0, g in -5.0f64..5.0) {
        let p = u(a, b, g);
        prop_assert_eq!(optimal_unconstrained_threshold(&p).unwrap(), (b + g) / (a + b));
    }

    #[test]
    fn positive_scaling_keeps_the_rule(a in 0.1f64..5.0, b in 0.1f64..5.0, g in 0.0f64..1.0, c in 0.1f64..20.0) {
        let bs = vec![baseline("a", &spread_ps(0.3, 0.95, 20)), baseline("b", &spread_ps(0.05, 0.7, 20))];
        let w = population_shares(&bs);
        let con = FairnessConstraint::new(Criterion::Independence, 0.05, None).unwrap();
        let p = u(a, b, g);
        let r1 = optimize_constrained(&bs, &w, &p, &con, 0.01).unwrap();
        let r2 = optimize_constrained(&bs, &w, &p.scaled(c), &con, 0.01).unwrap();
        for (x, y) in r1.rule.cells.iter().zip(&r2.rule.cells) {
            prop_assert_eq!(x.direction, y.direction);
            prop_assert!((x.tau_lo - y.tau_lo).abs() < 1e-12 && (x.tau_hi - y.tau_hi).abs() < 1e-12);
            prop_assert_eq!(x.mix, y.mix);
        }
        prop_assert!((r2.expected_utility_per_capita - c * r1.expected_utility_per_capita).abs() < 1e-9 * c.max(1.0));
    }

    #[test]
    fn tightening_never_helps(seed in 0u64..50) {
        let shift = (seed as f64) / 100.0;
        let bs = vec![baseline("a", &spread_ps(0.3 + shift, 0.95, 20)), baseline("b", &spread_ps(0.05, 0.6, 25))];
        let w = population_shares(&bs);
        let p = u(1.0, 1.0, 0.05);
        let mut last = f64::INFINITY;
        for eps in [1.0, 0.1, 0.05, 0.01, 0.0] {
            let c = FairnessConstraint::new(Criterion::EqualOpportunity, eps, None).unwrap();
            let r = optimize_constrained(&bs, &w, &p, &c, 0.01).unwrap();
            prop_assert!(r.expected_utility_per_capita <= last + 1e-12);
            last = r.expected_utility_per_capita;
        }
    }
}
