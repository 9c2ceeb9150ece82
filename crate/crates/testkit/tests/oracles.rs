use std::collections::BTreeSet;

use fairdecide::decision::population_shares;
use fairdecide::{
    audit, estimate_baseline, fit_calibration, optimize_constrained, BaselineDistribution, CellKey, Criterion,
    DecisionError, FairnessConstraint, GapKind, GroupScope, LabeledInstance, Population, UtilityParams,
};
use fairdecide_testkit::{
    brute_force_metrics, brute_force_optimum, generate_population, Distortion, Exact, GroupSpec, OracleError,
    Shape, StratumSpec, SyntheticSpec,
};
use proptest::prelude::*;

fn group(name: &str, size: usize, a: f64, b: f64) -> GroupSpec {
    GroupSpec { name: name.into(), size, shape: Shape::new(a, b), distortion: Distortion::Identity, strata: Vec::new() }
}

#[test]
fn generation_is_deterministic() {
    let spec = SyntheticSpec { groups: vec![group("a", 500, 2.0, 5.0), group("b", 300, 1.0, 1.0)], seed: 42 };
    assert_eq!(generate_population(&spec).unwrap(), generate_population(&spec).unwrap());
}

#[test]
fn beta_draws_match_their_mean() {
    let spec = SyntheticSpec { groups: vec![group("a", 50_000, 2.0, 2.0)], seed: 7 };
    let pop = generate_population(&spec).unwrap();
    let mean = pop.true_p.iter().sum::<f64>() / pop.true_p.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
    let ys = pop.instances.iter().filter(|i| i.outcome == Some(true)).count() as f64 / 50_000.0;
    assert!((ys - 0.5).abs() < 0.01, "{ys}");
    assert!(pop.instances.iter().zip(&pop.true_p).all(|(i, p)| i.raw_score == *p));
}

#[test]
fn strata_follow_their_shares() {
    let mut g = group("a", 20_000, 1.0, 1.0);
    g.strata = vec![
        StratumSpec { name: "x".into(), share: 3.0, shape: Shape::new(5.0, 1.0) },
        StratumSpec { name: "y".into(), share: 1.0, shape: Shape::new(1.0, 5.0) },
    ];
    let pop = generate_population(&SyntheticSpec { groups: vec![g], seed: 3 }).unwrap();
    let x = pop.instances.iter().filter(|i| i.stratum.as_deref() == Some("x")).count() as f64 / 20_000.0;
    assert!((x - 0.75).abs() < 0.02, "{x}");
}

#[test]
fn calibration_recovers_distorted_probabilities() {
    let mut g = group("a", 40_000, 2.0, 3.0);
    g.distortion = Distortion::Power { exponent: 3.0 };
    let pop = generate_population(&SyntheticSpec { groups: vec![g], seed: 11 }).unwrap();
    let f = fit_calibration(&pop.instances, GroupScope::Global, 20).unwrap();
    let err = pop.instances.iter().zip(&pop.true_p).map(|(i, p)| (f.apply(i.raw_score) - p).abs()).sum::<f64>()
        / pop.true_p.len() as f64;
    assert!(err < 0.03, "{err}");
}

fn decided(seed: u64, sizes: &[usize], strata: bool) -> Vec<LabeledInstance> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let mut inst = LabeledInstance::new(format!("{g}-{i}"), 0.5, g.to_string())
                .with_outcome(rng.random_bool(0.4))
                .with_decision(rng.random_bool(0.5));
            if strata {
                inst = inst.with_stratum(if rng.random_bool(0.5) { "s" } else { "t" });
            }
            out.push(inst);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_direct_counting(seed in any::<u64>(), sizes in prop::collection::vec(1usize..12, 2..4)) {
        let inst = decided(seed, &sizes, true);
        let pop = Population::from_instances(inst.clone()).unwrap();
        let strata: BTreeSet<String> = ["s".to_string(), "t".to_string()].into_iter().collect();
        for c in Criterion::ALL {
            let s = (c == Criterion::ConditionalStatisticalParity).then(|| strata.clone());
            let constraint = FairnessConstraint::new(c, 0.1, s.clone()).unwrap();
            let report = audit::<Exact, f64>(&pop, &constraint).unwrap();
            let brute = brute_force_metrics(&inst, c, s.as_ref()).unwrap();
            for (kind, gap) in &brute.gaps {
                prop_assert_eq!(&report.gaps[kind], gap, "{:?} {:?}", c, kind);
            }
            let undefined: BTreeSet<_> =
                report.warnings.iter().filter(|w| c.components().contains(&w.component)).cloned().collect();
            prop_assert_eq!(undefined, brute.undefined);
        }
    }
}

/// Small baselines: a handful of distinct probabilities per group.
fn baselines(seed: u64, groups: usize) -> Vec<BaselineDistribution> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Vec::new();
    for g in 0..groups {
        let levels: Vec<f64> = (0..rng.random_range(2..6)).map(|_| rng.random_range(1..20) as f64 / 20.0 - 0.013).collect();
        for i in 0..rng.random_range(5..30) {
            let p = levels[rng.random_range(0..levels.len())];
            inst.push(LabeledInstance::new(format!("{g}-{i}"), p, g.to_string()).with_calibrated(p));
        }
    }
    (0..groups).map(|g| estimate_baseline(&inst, &CellKey::group(g.to_string()), 20).unwrap()).collect()
}

fn compare(criterion: Criterion, seed: u64, groups: usize, eps: f64, u: (f64, f64, f64)) -> Result<(), TestCaseError> {
    let bs = baselines(seed, groups);
    let w = population_shares(&bs);
    let u = UtilityParams::new(u.0, u.1, u.2).unwrap();
    let c = FairnessConstraint::new(criterion, eps, None).unwrap();
    let core = optimize_constrained(&bs, &w, &u, &c, 0.05);
    let oracle = brute_force_optimum(&bs, &w, &u, &c, 0.05);
    match (core, oracle) {
        (Ok(r), Ok(o)) => {
            prop_assert!((r.expected_utility_per_capita - o.utility).abs() < 1e-9, "{} vs {}", r.expected_utility_per_capita, o.utility);
            let gap_based = !matches!(criterion, Criterion::PredictiveParity | Criterion::ForParity | Criterion::Sufficiency);
            if gap_based {
                prop_assert_eq!(r.rule, o.rule);
            }
            for k in criterion.components() {
                if let Some(Some(g)) = r.achieved_gaps.get(k) {
                    let bound = if gap_based { eps } else { eps + 1e-9 };
                    prop_assert!(*g <= bound + 1e-9, "{:?} gap {}", k, g);
                }
            }
        }
        (Err(DecisionError::Infeasible { .. }), Err(OracleError::Infeasible)) => {}
        (a, b) => prop_assert!(false, "core {:?} oracle {:?}", a.map(|r| r.expected_utility_per_capita), b),
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_matches_exhaustive_search(
        seed in any::<u64>(),
        groups in 2usize..4,
        eps in prop::sample::select(vec![0.0, 0.02, 0.05, 0.1, 0.3]),
        u in prop::sample::select(vec![(1.0, 1.0, 0.0), (3.0, 1.0, 0.0), (1.0, 2.0, 0.5), (2.0, 1.0, -0.2)]),
    ) {
        for c in [
            Criterion::Independence,
            Criterion::EqualOpportunity,
            Criterion::PredictiveEquality,
            Criterion::EqualizedOdds,
            Criterion::PredictiveParity,
            Criterion::ForParity,
            Criterion::Sufficiency,
        ] {
            compare(c, seed, groups, eps, u)?;
        }
    }
}

#[test]
fn stratified_optimum_matches_exhaustive_search() {
    let mut inst = Vec::new();
    let ps = [(0.0, "s", 0.2), (0.0, "s", 0.7), (0.0, "t", 0.4), (1.0, "s", 0.5), (1.0, "t", 0.9), (1.0, "t", 0.3)];
    for (i, &(g, s, p)) in ps.iter().enumerate() {
        for k in 0..(i + 2) {
            inst.push(LabeledInstance::new(format!("{i}-{k}"), p, g.to_string()).with_stratum(s).with_calibrated(p));
        }
    }
    let cells = [CellKey::with_stratum("0", "s"), CellKey::with_stratum("0", "t"), CellKey::with_stratum("1", "s"), CellKey::with_stratum("1", "t")];
    let bs: Vec<_> = cells.iter().map(|c| estimate_baseline(&inst, c, 20).unwrap()).collect();
    let w = population_shares(&bs);
    let u = UtilityParams::new(1.0, 1.0, 0.0).unwrap();
    let strata = ["s".to_string(), "t".to_string()].into_iter().collect();
    let c = FairnessConstraint::new(Criterion::ConditionalStatisticalParity, 0.05, Some(strata)).unwrap();
    let r = optimize_constrained(&bs, &w, &u, &c, 0.05).unwrap();
    let o = brute_force_optimum(&bs, &w, &u, &c, 0.05).unwrap();
    assert!((r.expected_utility_per_capita - o.utility).abs() < 1e-12);
    assert_eq!(r.rule, o.rule);
    assert!(r.achieved_gaps[&GapKind::ConditionalAcceptance].unwrap() <= 0.05 + 1e-12);
}

#[test]
fn identity_populations_are_calibrated_per_decile() {
    let pop = generate_population(&SyntheticSpec { groups: vec![group("a", 60_000, 2.0, 3.0)], seed: 5 }).unwrap();
    let mut sums = [(0.0f64, 0.0f64, 0usize); 10];
    for (i, p) in pop.instances.iter().zip(&pop.true_p) {
        let b = ((p * 10.0) as usize).min(9);
        sums[b].0 += p;
        sums[b].1 += i.outcome.unwrap() as u8 as f64;
        sums[b].2 += 1;
    }
    for (b, (p, y, n)) in sums.iter().enumerate() {
        // the top decile of Beta(2, 3) holds too few draws for a 0.02 check
        if *n >= 1_000 {
            let n = *n as f64;
            assert!((p / n - y / n).abs() <= 0.02, "decile {b}: {} vs {}", p / n, y / n);
        }
    }
}
