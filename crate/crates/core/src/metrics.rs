//! Group-fairness gaps over decision records.
//!
//! Every gap is the largest pairwise absolute difference of a conditional
//! decision (or outcome) frequency across groups. A conditional frequency whose
//! conditioning set is empty is undefined: it is left out of the maximum and
//! recorded as a [`Degeneracy`]. Frequencies are raw counts ratios, so the
//! functions are generic over [`Scalar`] and run unchanged on exact rationals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{GroupId, Population};
use crate::num::{max_of, min_of, Real, Scalar};

/// Group-fairness criteria, each a parity condition on decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Independence,
    ConditionalStatisticalParity,
    EqualOpportunity,
    PredictiveEquality,
    EqualizedOdds,
    PredictiveParity,
    ForParity,
    Sufficiency,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::Independence,
        Criterion::ConditionalStatisticalParity,
        Criterion::EqualOpportunity,
        Criterion::PredictiveEquality,
        Criterion::EqualizedOdds,
        Criterion::PredictiveParity,
        Criterion::ForParity,
        Criterion::Sufficiency,
    ];

    /// Gap components a constraint on this criterion bounds.
    pub fn components(self) -> &'static [GapKind] {
        use GapKind::*;
        match self {
            Criterion::Independence => &[Acceptance],
            Criterion::ConditionalStatisticalParity => &[ConditionalAcceptance],
            Criterion::EqualOpportunity => &[Tpr],
            Criterion::PredictiveEquality => &[Fpr],
            Criterion::EqualizedOdds => &[Tpr, Fpr],
            Criterion::PredictiveParity => &[Ppv],
            Criterion::ForParity => &[For],
            Criterion::Sufficiency => &[Ppv, For],
        }
    }

    pub fn needs_outcomes(self) -> bool {
        !matches!(self, Criterion::Independence | Criterion::ConditionalStatisticalParity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Independence => "independence",
            Criterion::ConditionalStatisticalParity => "conditional_statistical_parity",
            Criterion::EqualOpportunity => "equal_opportunity",
            Criterion::PredictiveEquality => "predictive_equality",
            Criterion::EqualizedOdds => "equalized_odds",
            Criterion::PredictiveParity => "predictive_parity",
            Criterion::ForParity => "for_parity",
            Criterion::Sufficiency => "sufficiency",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| format!("unknown fairness criterion {s:?}"))
    }
}

/// One conditional frequency whose cross-group spread forms a gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// P(D=1 | A=a)
    Acceptance,
    /// P(D=1 | L=l, A=a), maximized over strata l
    ConditionalAcceptance,
    /// P(D=1 | Y=1, A=a)
    Tpr,
    /// P(D=1 | Y=0, A=a)
    Fpr,
    /// P(Y=1 | D=1, A=a)
    Ppv,
    /// P(Y=1 | D=0, A=a)
    For,
}

impl GapKind {
    pub const ALL: [GapKind; 6] = [
        GapKind::Acceptance,
        GapKind::ConditionalAcceptance,
        GapKind::Tpr,
        GapKind::Fpr,
        GapKind::Ppv,
        GapKind::For,
    ];

    /// Human-readable description of the conditioning set.
    pub fn conditioning(self) -> &'static str {
        match self {
            GapKind::Acceptance | GapKind::ConditionalAcceptance => "no instances",
            GapKind::Tpr => "no instances with y=1",
            GapKind::Fpr => "no instances with y=0",
            GapKind::Ppv => "no instances with decision=1",
            GapKind::For => "no instances with decision=0",
        }
    }
}

impl fmt::Display for GapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GapKind::Acceptance => "acceptance",
            GapKind::ConditionalAcceptance => "conditional_acceptance",
            GapKind::Tpr => "tpr",
            GapKind::Fpr => "fpr",
            GapKind::Ppv => "ppv",
            GapKind::For => "for",
        };
        f.write_str(s)
    }
}

/// Criterion plus absolute relaxation tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FairnessConstraint<T = f64> {
    pub criterion: Criterion,
    pub epsilon: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("epsilon {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("conditional statistical parity requires a nonempty stratum set")]
    MissingStrata,
    #[error("strata are only meaningful for conditional statistical parity")]
    UnexpectedStrata,
}

impl<T: Real> FairnessConstraint<T> {
    pub fn new(
        criterion: Criterion,
        epsilon: T,
        strata: Option<BTreeSet<String>>,
    ) -> Result<Self, ConstraintError> {
        let c = FairnessConstraint { criterion, epsilon, strata };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(self.epsilon >= T::zero() && self.epsilon <= T::one()) {
            return Err(ConstraintError::EpsilonOutOfRange(self.epsilon.to_f64().unwrap_or(f64::NAN)));
        }
        let is_csp = self.criterion == Criterion::ConditionalStatisticalParity;
        match &self.strata {
            Some(s) if s.is_empty() && is_csp => Err(ConstraintError::MissingStrata),
            None if is_csp => Err(ConstraintError::MissingStrata),
            Some(_) if !is_csp => Err(ConstraintError::UnexpectedStrata),
            _ => Ok(()),
        }
    }
}

/// An undefined conditional frequency left out of a gap.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Degeneracy {
    pub component: GapKind,
    pub group: GroupId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} undefined for group {}", self.component, self.group)?;
        if let Some(s) = &self.stratum {
            write!(f, " in stratum {s}")?;
        }
        write!(f, ": {}", self.component.conditioning())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("instance {id} has no decision")]
    MissingDecision { id: String },
    #[error("instance {id} has no outcome")]
    MissingOutcome { id: String },
    #[error("instance {id} has no stratum in the audited stratum set")]
    MissingStratum { id: String },
    #[error("declared group {group} has no instances")]
    EmptyGroup { group: GroupId },
}

/// A gap that may be undefined, with the degeneracies encountered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEstimate<S> {
    pub gap: Option<S>,
    pub warnings: Vec<Degeneracy>,
}

/// Per-group conditional frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRates<S> {
    pub count: usize,
    pub acceptance: Option<S>,
    pub tpr: Option<S>,
    pub fpr: Option<S>,
    pub ppv: Option<S>,
    pub for_rate: Option<S>,
    pub base_rate: Option<S>,
}

/// Verdict for the audited constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditVerdict<S> {
    pub criterion: Criterion,
    pub epsilon: S,
    pub pass: bool,
    /// Components whose defined gap exceeds epsilon.
    pub violated: Vec<GapKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport<S> {
    /// Every gap computable from the fields present.
    pub gaps: BTreeMap<GapKind, Option<S>>,
    pub group_rates: BTreeMap<GroupId, GroupRates<S>>,
    pub verdict: AuditVerdict<S>,
    pub warnings: Vec<Degeneracy>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    n: usize,
    d1: usize,
    y1: usize,
    y0: usize,
    y1d1: usize,
    y0d1: usize,
    y1d0: usize,
}

impl Counts {
    fn d0(&self) -> usize {
        self.n - self.d1
    }
}

fn ratio<S: Scalar>(num: usize, den: usize) -> Option<S> {
    (den > 0).then(|| S::from_count(num) / S::from_count(den))
}

fn spread<S: Scalar>(values: impl Iterator<Item = S> + Clone) -> Option<S> {
    let hi = max_of(values.clone())?;
    let lo = min_of(values)?;
    Some(hi - lo)
}

fn require_decisions<T: Real>(pop: &Population<T>) -> Result<(), MetricsError> {
    match pop.instances().iter().find(|i| i.decision.is_none()) {
        Some(i) => Err(MetricsError::MissingDecision { id: i.id.clone() }),
        None => Ok(()),
    }
}

fn require_outcomes<T: Real>(pop: &Population<T>) -> Result<(), MetricsError> {
    match pop.instances().iter().find(|i| i.outcome.is_none()) {
        Some(i) => Err(MetricsError::MissingOutcome { id: i.id.clone() }),
        None => Ok(()),
    }
}

/// Counts per declared group (missing outcomes count toward `n` and `d1` only).
fn group_counts<T: Real>(pop: &Population<T>) -> BTreeMap<GroupId, Counts> {
    let mut out: BTreeMap<GroupId, Counts> =
        pop.groups().iter().map(|g| (g.clone(), Counts::default())).collect();
    for inst in pop.instances() {
        let c = out.get_mut(&inst.group).expect("population validates groups");
        let d = inst.decision.unwrap_or(false);
        c.n += 1;
        c.d1 += d as usize;
        match inst.outcome {
            Some(true) => {
                c.y1 += 1;
                if d {
                    c.y1d1 += 1;
                } else {
                    c.y1d0 += 1;
                }
            }
            Some(false) => {
                c.y0 += 1;
                c.y0d1 += d as usize;
            }
            None => {}
        }
    }
    out
}

/// Empirical P(D=1 | A=a) for every declared group.
pub fn acceptance_rates<S: Scalar, T: Real>(
    pop: &Population<T>,
) -> Result<BTreeMap<GroupId, S>, MetricsError> {
    require_decisions(pop)?;
    group_counts(pop)
        .into_iter()
        .map(|(g, c)| match ratio(c.d1, c.n) {
            Some(r) => Ok((g, r)),
            None => Err(MetricsError::EmptyGroup { group: g }),
        })
        .collect()
}

pub fn independence_gap<S: Scalar, T: Real>(pop: &Population<T>) -> Result<S, MetricsError> {
    let rates = acceptance_rates::<S, T>(pop)?;
    Ok(spread(rates.values().cloned()).unwrap_or_else(S::zero))
}

/// Largest within-stratum independence gap over `strata`.
///
/// A (stratum, group) cell without instances is skipped with a warning.
pub fn conditional_parity_gap<S: Scalar, T: Real>(
    pop: &Population<T>,
    strata: &BTreeSet<String>,
) -> Result<GapEstimate<S>, MetricsError> {
    require_decisions(pop)?;
    for inst in pop.instances() {
        match &inst.stratum {
            Some(s) if strata.contains(s) => {}
            _ => return Err(MetricsError::MissingStratum { id: inst.id.clone() }),
        }
    }
    let mut warnings = Vec::new();
    let mut per_stratum = Vec::new();
    for stratum in strata {
        let mut rates = Vec::new();
        for g in pop.groups() {
            let (mut n, mut d1) = (0usize, 0usize);
            for inst in pop.in_group(g).filter(|i| i.stratum.as_ref() == Some(stratum)) {
                n += 1;
                d1 += inst.decision.unwrap_or(false) as usize;
            }
            match ratio::<S>(d1, n) {
                Some(r) => rates.push(r),
                None => warnings.push(Degeneracy {
                    component: GapKind::ConditionalAcceptance,
                    group: g.clone(),
                    stratum: Some(stratum.clone()),
                }),
            }
        }
        if let Some(gap) = spread(rates.into_iter()) {
            per_stratum.push(gap);
        }
    }
    Ok(GapEstimate { gap: max_of(per_stratum.into_iter()), warnings })
}

fn component_gap<S: Scalar>(
    counts: &BTreeMap<GroupId, Counts>,
    kind: GapKind,
    warnings: &mut Vec<Degeneracy>,
) -> Option<S> {
    let mut rates = Vec::new();
    for (g, c) in counts {
        let r = match kind {
            GapKind::Acceptance | GapKind::ConditionalAcceptance => ratio(c.d1, c.n),
            GapKind::Tpr => ratio(c.y1d1, c.y1),
            GapKind::Fpr => ratio(c.y0d1, c.y0),
            GapKind::Ppv => ratio(c.y1d1, c.d1),
            GapKind::For => ratio(c.y1d0, c.d0()),
        };
        match r {
            Some(r) => rates.push(r),
            None => warnings.push(Degeneracy { component: kind, group: g.clone(), stratum: None }),
        }
    }
    spread(rates.into_iter())
}

/// TPR and FPR gaps.
pub fn separation_gaps<S: Scalar, T: Real>(
    pop: &Population<T>,
) -> Result<(GapEstimate<S>, GapEstimate<S>), MetricsError> {
    require_decisions(pop)?;
    require_outcomes(pop)?;
    let counts = group_counts(pop);
    let mut tw = Vec::new();
    let mut fw = Vec::new();
    let tpr = component_gap(&counts, GapKind::Tpr, &mut tw);
    let fpr = component_gap(&counts, GapKind::Fpr, &mut fw);
    Ok((GapEstimate { gap: tpr, warnings: tw }, GapEstimate { gap: fpr, warnings: fw }))
}

/// PPV and false-omission-rate gaps.
pub fn sufficiency_gaps<S: Scalar, T: Real>(
    pop: &Population<T>,
) -> Result<(GapEstimate<S>, GapEstimate<S>), MetricsError> {
    require_decisions(pop)?;
    require_outcomes(pop)?;
    let counts = group_counts(pop);
    let mut pw = Vec::new();
    let mut fw = Vec::new();
    let ppv = component_gap(&counts, GapKind::Ppv, &mut pw);
    let for_gap = component_gap(&counts, GapKind::For, &mut fw);
    Ok((GapEstimate { gap: ppv, warnings: pw }, GapEstimate { gap: for_gap, warnings: fw }))
}

/// Audits decisions against `constraint`.
///
/// Besides the audited criterion, the report carries every other gap the
/// available fields allow. The constraint passes when each of its defined
/// component gaps is at most epsilon.
pub fn audit<S: Scalar, T: Real>(
    pop: &Population<T>,
    constraint: &FairnessConstraint<T>,
) -> Result<GapReport<S>, MetricsError> {
    let criterion = constraint.criterion;
    require_decisions(pop)?;
    if criterion.needs_outcomes() {
        require_outcomes(pop)?;
    }
    let has_outcomes = pop.instances().iter().all(|i| i.outcome.is_some());

    let mut gaps = BTreeMap::new();
    let mut warnings = Vec::new();
    gaps.insert(GapKind::Acceptance, Some(independence_gap::<S, T>(pop)?));
    if let Some(strata) = &constraint.strata {
        let est = conditional_parity_gap::<S, T>(pop, strata)?;
        gaps.insert(GapKind::ConditionalAcceptance, est.gap);
        warnings.extend(est.warnings);
    }
    if has_outcomes {
        let (t, f) = separation_gaps::<S, T>(pop)?;
        let (p, o) = sufficiency_gaps::<S, T>(pop)?;
        for (kind, est) in [(GapKind::Tpr, t), (GapKind::Fpr, f), (GapKind::Ppv, p), (GapKind::For, o)] {
            gaps.insert(kind, est.gap);
            warnings.extend(est.warnings);
        }
    }

    let counts = group_counts(pop);
    let group_rates = counts
        .iter()
        .map(|(g, c)| {
            let labeled = has_outcomes;
            let rates = GroupRates {
                count: c.n,
                acceptance: ratio(c.d1, c.n),
                tpr: if labeled { ratio(c.y1d1, c.y1) } else { None },
                fpr: if labeled { ratio(c.y0d1, c.y0) } else { None },
                ppv: if labeled { ratio(c.y1d1, c.d1) } else { None },
                for_rate: if labeled { ratio(c.y1d0, c.d0()) } else { None },
                base_rate: if labeled { ratio(c.y1, c.n) } else { None },
            };
            (g.clone(), rates)
        })
        .collect();

    let eps = S::from_f64(constraint.epsilon.to_f64().expect("finite epsilon"))
        .expect("epsilon representable");
    let violated: Vec<GapKind> = criterion
        .components()
        .iter()
        .copied()
        .filter(|k| matches!(gaps.get(k), Some(Some(g)) if *g > eps))
        .collect();
    let verdict = AuditVerdict { criterion, epsilon: eps, pass: violated.is_empty(), violated };
    Ok(GapReport { gaps, group_rates, verdict, warnings })
}
