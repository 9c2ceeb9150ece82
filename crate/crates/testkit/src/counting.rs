//! Gaps by direct conditional counting, in exact rational arithmetic.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

use fairdecide::{Criterion, Degeneracy, GapKind, GroupId, LabeledInstance};

pub type Exact = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteGaps {
    pub gaps: BTreeMap<GapKind, Option<Exact>>,
    /// Conditional frequencies with an empty conditioning set.
    pub undefined: BTreeSet<Degeneracy>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountingError {
    /// The criterion needs a field some instance lacks.
    MissingField { id: String, field: &'static str },
}

/// Whether an instance falls in the conditioning set of `kind`, and whether it
/// counts toward the numerator.
fn classify(kind: GapKind, inst: &LabeledInstance) -> (bool, bool) {
    let d = inst.decision == Some(true);
    let y = inst.outcome == Some(true);
    match kind {
        GapKind::Acceptance | GapKind::ConditionalAcceptance => (true, d),
        GapKind::Tpr => (y, d),
        GapKind::Fpr => (!y, d),
        GapKind::Ppv => (d, y),
        GapKind::For => (!d, y),
    }
}

fn frequency<'a>(kind: GapKind, members: impl Iterator<Item = &'a LabeledInstance>) -> Option<Exact> {
    let (mut den, mut num) = (0i64, 0i64);
    for inst in members {
        let (inside, hit) = classify(kind, inst);
        if inside {
            den += 1;
            num += hit as i64;
        }
    }
    (den > 0).then(|| Ratio::new(num, den))
}

fn max_pairwise(values: &[Exact]) -> Option<Exact> {
    if values.is_empty() {
        return None;
    }
    let mut best = Ratio::from_integer(0);
    for a in values {
        for b in values {
            let d = if a > b { a - b } else { b - a };
            if d > best {
                best = d;
            }
        }
    }
    Some(best)
}

/// Gaps of `criterion` over the groups present in `instances`.
///
/// `strata` is only read for conditional statistical parity.
pub fn brute_force_metrics(
    instances: &[LabeledInstance],
    criterion: Criterion,
    strata: Option<&BTreeSet<String>>,
) -> Result<BruteGaps, CountingError> {
    for inst in instances {
        if inst.decision.is_none() {
            return Err(CountingError::MissingField { id: inst.id.clone(), field: "decision" });
        }
        if criterion.needs_outcomes() && inst.outcome.is_none() {
            return Err(CountingError::MissingField { id: inst.id.clone(), field: "y" });
        }
    }
    let groups: BTreeSet<&GroupId> = instances.iter().map(|i| &i.group).collect();
    let mut gaps = BTreeMap::new();
    let mut undefined = BTreeSet::new();
    for &kind in criterion.components() {
        let gap = if kind == GapKind::ConditionalAcceptance {
            let mut worst: Option<Exact> = None;
            for s in strata.into_iter().flatten() {
                let mut rates = Vec::new();
                for &g in &groups {
                    let cell = instances.iter().filter(|i| &i.group == g && i.stratum.as_ref() == Some(s));
                    match frequency(kind, cell) {
                        Some(r) => rates.push(r),
                        None => {
                            undefined.insert(Degeneracy { component: kind, group: g.clone(), stratum: Some(s.clone()) });
                        }
                    }
                }
                if let Some(g) = max_pairwise(&rates) {
                    worst = Some(worst.map_or(g, |w| w.max(g)));
                }
            }
            worst
        } else {
            let mut rates = Vec::new();
            for &g in &groups {
                match frequency(kind, instances.iter().filter(|i| &i.group == g)) {
                    Some(r) => rates.push(r),
                    None => {
                        undefined.insert(Degeneracy { component: kind, group: g.clone(), stratum: None });
                    }
                }
            }
            max_pairwise(&rates)
        };
        gaps.insert(kind, gap);
    }
    Ok(BruteGaps { gaps, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, g: &str, y: bool, d: bool) -> LabeledInstance {
        LabeledInstance::new(id, 0.5, g).with_outcome(y).with_decision(d)
    }

    #[test]
    fn hand_counted_eight() {
        // group a: (y,d) = 11 10 01 00 ; group b: 11 11 10 01
        let pop = vec![
            inst("1", "a", true, true),
            inst("2", "a", true, false),
            inst("3", "a", false, true),
            inst("4", "a", false, false),
            inst("5", "b", true, true),
            inst("6", "b", true, true),
            inst("7", "b", true, false),
            inst("8", "b", false, true),
        ];
        let sep = brute_force_metrics(&pop, Criterion::EqualizedOdds, None).unwrap();
        // tpr a 1/2, b 2/3 ; fpr a 1/2, b 1
        assert_eq!(sep.gaps[&GapKind::Tpr], Some(Ratio::new(1, 6)));
        assert_eq!(sep.gaps[&GapKind::Fpr], Some(Ratio::new(1, 2)));
        let suf = brute_force_metrics(&pop, Criterion::Sufficiency, None).unwrap();
        // ppv a 1/2, b 2/3 ; for a 1/2, b 1
        assert_eq!(suf.gaps[&GapKind::Ppv], Some(Ratio::new(1, 6)));
        assert_eq!(suf.gaps[&GapKind::For], Some(Ratio::new(1, 2)));
        assert!(suf.undefined.is_empty());
    }

    #[test]
    fn all_reject_has_no_acceptance_gap() {
        let pop = vec![inst("1", "a", true, false), inst("2", "b", false, false)];
        let r = brute_force_metrics(&pop, Criterion::Independence, None).unwrap();
        assert_eq!(r.gaps[&GapKind::Acceptance], Some(Ratio::from_integer(0)));
        let p = brute_force_metrics(&pop, Criterion::PredictiveParity, None).unwrap();
        assert_eq!(p.gaps[&GapKind::Ppv], None);
        assert_eq!(p.undefined.len(), 2);
    }

    #[test]
    fn missing_outcome_is_reported() {
        let pop = vec![LabeledInstance::new("1", 0.5, "a").with_decision(true)];
        assert!(brute_force_metrics(&pop, Criterion::Independence, None).is_ok());
        assert_eq!(
            brute_force_metrics(&pop, Criterion::EqualOpportunity, None),
            Err(CountingError::MissingField { id: "1".into(), field: "y" })
        );
    }
}
