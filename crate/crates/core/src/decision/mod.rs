//! Utility-maximizing decision rules, with and without a fairness constraint.
//!
//! A rule assigns each group (or group and stratum) a possibly randomized
//! threshold rule on the calibrated probability. Utilities follow the usual
//! three-parameter form: `alpha` for accepting a positive, `-beta` for
//! accepting a negative and `gamma` for rejecting anyone.

mod candidates;
pub mod grid;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{BaselineDistribution, BaselineError, Direction, MassSummary};
use crate::instance::{CellKey, GroupId, LabeledInstance};
use crate::metrics::{ConstraintError, Criterion, FairnessConstraint, GapKind};
use crate::num::Real;
use crate::seed::unit_draw;
use candidates::{above_candidates, band_candidates, below_candidates, Candidate, Profile};
use search::{gap_search, joint_target_search, target_search, CellProblem, Solution};

pub use grid::{ThresholdGrid, DEFAULT_RESOLUTION, FEASIBILITY_SLACK};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error("grid resolution {0} must lie in (0, 0.1] and divide 1")]
    InvalidResolution(f64),
    #[error("alpha + beta = 0: the expected utility does not depend on the probability")]
    DegenerateUtility,
    #[error("alpha + beta < 0: accepting becomes more attractive as the probability falls; refusing to optimize")]
    NegativeRegime,
    #[error("utility parameters must be finite")]
    InvalidUtility,
    #[error("no rule, weight or baseline for {0}")]
    GroupMismatch(CellKey),
    #[error("rule for {0} needs tau_lo <= tau_hi with thresholds and mix in [0, 1]")]
    InvalidRule(CellKey),
    #[error("group weights must be nonnegative and sum to 1")]
    InvalidWeights,
    #[error("no rule on the grid satisfies {criterion} with epsilon {epsilon}")]
    Infeasible { criterion: Criterion, epsilon: f64 },
    #[error("missing deliverables: {}", .0.join(", "))]
    MissingDeliverable(Vec<String>),
    #[error("instance {id} has no calibrated probability")]
    UncalibratedInstance { id: String },
    #[error("instance {id} belongs to group {group}, which the rule does not cover")]
    UnknownGroup { id: String, group: GroupId },
    #[error(transparent)]
    InvalidBaseline(#[from] BaselineError),
    #[error(transparent)]
    InvalidConstraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct UtilityParams<T = f64> {
    /// Gain from accepting a positive.
    pub alpha: T,
    /// Loss from accepting a negative.
    pub beta: T,
    /// Utility of rejecting, whatever the outcome.
    pub gamma: T,
}

impl<T: Real> UtilityParams<T> {
    pub fn new(alpha: T, beta: T, gamma: T) -> Result<Self, DecisionError> {
        let u = UtilityParams { alpha, beta, gamma };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()) {
            return Err(DecisionError::InvalidUtility);
        }
        if self.alpha + self.beta == T::zero() {
            return Err(DecisionError::DegenerateUtility);
        }
        Ok(())
    }

    pub fn scaled(&self, c: T) -> Self {
        UtilityParams { alpha: self.alpha * c, beta: self.beta * c, gamma: self.gamma * c }
    }

    /// Expected utility of a set of masses.
    pub fn of(&self, s: &MassSummary<T>) -> T {
        s.true_pos * self.alpha - s.false_pos * self.beta + s.rejected * self.gamma
    }
}

/// Threshold rule for one cell.
///
/// Accept-above accepts `p >= tau_hi`, rejects `p < tau_lo` and accepts the
/// band in between with probability `mix`; accept-below mirrors this with
/// `p <= tau_lo` accepted and `p > tau_hi` rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CellRule<T = f64> {
    pub group: GroupId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    pub direction: Direction,
    pub tau_lo: T,
    pub tau_hi: T,
    pub mix: T,
}

impl<T: Real> CellRule<T> {
    pub fn deterministic(cell: &CellKey, direction: Direction, tau: T) -> Self {
        CellRule {
            group: cell.group.clone(),
            stratum: cell.stratum.clone(),
            direction,
            tau_lo: tau,
            tau_hi: tau,
            mix: T::zero(),
        }
    }

    pub fn cell(&self) -> CellKey {
        CellKey { group: self.group.clone(), stratum: self.stratum.clone() }
    }

    pub fn is_deterministic(&self) -> bool {
        self.tau_lo == self.tau_hi
    }

    /// Probability of accepting an instance with calibrated probability `p`.
    pub fn acceptance_probability(&self, p: T) -> T {
        let (sure, never) = match self.direction {
            Direction::AcceptAbove => (p >= self.tau_hi, p < self.tau_lo),
            Direction::AcceptBelow => (p <= self.tau_lo, p > self.tau_hi),
        };
        if sure {
            T::one()
        } else if never {
            T::zero()
        } else {
            self.mix
        }
    }

    fn validate(&self) -> bool {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        self.tau_lo <= self.tau_hi && unit(self.tau_lo) && unit(self.tau_hi) && unit(self.mix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecisionRule<T = f64> {
    pub cells: Vec<CellRule<T>>,
}

impl<T: Real> DecisionRule<T> {
    /// The rule for `cell`, falling back to the group-wide rule.
    pub fn rule_for(&self, cell: &CellKey) -> Option<&CellRule<T>> {
        self.cells
            .iter()
            .find(|r| r.group == cell.group && r.stratum == cell.stratum)
            .or_else(|| self.cells.iter().find(|r| r.group == cell.group && r.stratum.is_none()))
    }

    pub fn is_deterministic(&self) -> bool {
        self.cells.iter().all(|r| r.is_deterministic())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    pub grid_points: usize,
    /// Distinct per-cell rules considered.
    pub candidates: usize,
    /// Complete tuples evaluated.
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimizationResult<T = f64> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<FairnessConstraint<T>>,
    pub rule: DecisionRule<T>,
    pub expected_utility_per_capita: T,
    pub achieved_gaps: BTreeMap<GapKind, Option<T>>,
    /// Whether the unconstrained rule violates each constrained component.
    pub binding: BTreeMap<GapKind, bool>,
    /// Common target rates for target-based criteria.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<T>,
    pub search_trace: SearchTrace,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Population share of every baseline cell, by instance count.
pub fn population_shares<T: Real>(baselines: &[BaselineDistribution<T>]) -> BTreeMap<CellKey, T> {
    let total: usize = baselines.iter().map(|b| b.count).sum();
    baselines.iter().map(|b| (b.cell(), T::ratio(b.count, total))).collect()
}

fn check_inputs<T: Real>(
    baselines: &[BaselineDistribution<T>],
    weights: &BTreeMap<CellKey, T>,
) -> Result<(), DecisionError> {
    let mut sum = T::zero();
    for b in baselines {
        b.validate()?;
        let w = *weights.get(&b.cell()).ok_or_else(|| DecisionError::GroupMismatch(b.cell()))?;
        if w.is_nan() || w < T::zero() {
            return Err(DecisionError::InvalidWeights);
        }
        sum = sum + w;
    }
    if baselines.is_empty() || (sum - T::one()).abs() > T::sum_tolerance() {
        return Err(DecisionError::InvalidWeights);
    }
    Ok(())
}

fn cell_summary<T: Real>(rule: &CellRule<T>, b: &BaselineDistribution<T>) -> MassSummary<T> {
    b.summarize(|_, m| rule.acceptance_probability(m))
}

/// Per-capita expected utility of `rule` under the baselines.
pub fn evaluate_utility<T: Real>(
    rule: &DecisionRule<T>,
    baselines: &[BaselineDistribution<T>],
    weights: &BTreeMap<CellKey, T>,
    u: &UtilityParams<T>,
) -> Result<T, DecisionError> {
    check_inputs(baselines, weights)?;
    let mut total = T::zero();
    for b in baselines {
        let cell = b.cell();
        let r = rule.rule_for(&cell).ok_or_else(|| DecisionError::GroupMismatch(cell.clone()))?;
        total = total + weights[&cell] * u.of(&cell_summary(r, b));
    }
    Ok(total)
}

/// Expected gap of each component of `criterion` under the baselines.
///
/// Conditional acceptance compares cells within each stratum and reports the
/// largest stratum gap; every other component compares all cells.
pub fn expected_gaps<T: Real>(
    rule: &DecisionRule<T>,
    baselines: &[BaselineDistribution<T>],
    components: &[GapKind],
) -> Result<BTreeMap<GapKind, Option<T>>, DecisionError> {
    let mut rates = Vec::with_capacity(baselines.len());
    for b in baselines {
        let cell = b.cell();
        let r = rule.rule_for(&cell).ok_or_else(|| DecisionError::GroupMismatch(cell.clone()))?;
        rates.push((cell, cell_summary(r, b).rates()));
    }
    let spread = |vals: Vec<T>| -> Option<T> {
        let lo = vals.iter().copied().reduce(T::min)?;
        let hi = vals.iter().copied().reduce(T::max)?;
        Some(hi - lo)
    };
    let mut out = BTreeMap::new();
    for &kind in components {
        let gap = match kind {
            GapKind::ConditionalAcceptance => {
                let mut by_stratum: BTreeMap<Option<&String>, Vec<T>> = BTreeMap::new();
                for (cell, r) in &rates {
                    by_stratum.entry(cell.stratum.as_ref()).or_default().push(r.acceptance);
                }
                by_stratum.into_values().filter_map(spread).reduce(T::max)
            }
            _ => spread(
                rates
                    .iter()
                    .filter_map(|(_, r)| match kind {
                        GapKind::Acceptance => Some(r.acceptance),
                        GapKind::Tpr => r.tpr,
                        GapKind::Fpr => r.fpr,
                        GapKind::Ppv => r.ppv,
                        GapKind::For => r.for_rate,
                        GapKind::ConditionalAcceptance => unreachable!(),
                    })
                    .collect(),
            ),
        };
        out.insert(kind, gap);
    }
    Ok(out)
}

/// `(beta + gamma) / (alpha + beta)`: accept iff the probability reaches it.
pub fn optimal_unconstrained_threshold<T: Real>(u: &UtilityParams<T>) -> Result<T, DecisionError> {
    u.validate()?;
    let denom = u.alpha + u.beta;
    if denom < T::zero() {
        return Err(DecisionError::NegativeRegime);
    }
    Ok((u.beta + u.gamma) / denom)
}

fn clamp_unit<T: Real>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

fn informational_components<T: Real>(baselines: &[BaselineDistribution<T>]) -> Vec<GapKind> {
    let stratified = baselines.iter().any(|b| b.stratum.is_some());
    GapKind::ALL
        .into_iter()
        .filter(|k| stratified || *k != GapKind::ConditionalAcceptance)
        .collect()
}

/// The same accept-above threshold for every cell.
pub fn optimize_unconstrained<T: Real>(
    baselines: &[BaselineDistribution<T>],
    weights: &BTreeMap<CellKey, T>,
    u: &UtilityParams<T>,
) -> Result<OptimizationResult<T>, DecisionError> {
    let tau = optimal_unconstrained_threshold(u)?;
    check_inputs(baselines, weights)?;
    let rule = DecisionRule {
        cells: baselines
            .iter()
            .map(|b| CellRule::deterministic(&b.cell(), Direction::AcceptAbove, clamp_unit(tau)))
            .collect(),
    };
    let expected_utility_per_capita = evaluate_utility(&rule, baselines, weights, u)?;
    let achieved_gaps = expected_gaps(&rule, baselines, &informational_components(baselines))?;
    Ok(OptimizationResult {
        constraint: None,
        rule,
        expected_utility_per_capita,
        achieved_gaps,
        binding: BTreeMap::new(),
        targets: Vec::new(),
        search_trace: SearchTrace { resolution: None, grid_points: 0, candidates: baselines.len(), evaluations: 1 },
        warnings: Vec::new(),
    })
}

/// Rule families searched for each criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Above,
    AboveOrBelow,
    AboveOrBand,
}

fn family(c: Criterion) -> Family {
    match c {
        Criterion::Independence
        | Criterion::ConditionalStatisticalParity
        | Criterion::EqualOpportunity
        | Criterion::PredictiveEquality => Family::Above,
        Criterion::PredictiveParity | Criterion::ForParity => Family::AboveOrBelow,
        Criterion::EqualizedOdds | Criterion::Sufficiency => Family::AboveOrBand,
    }
}

/// Accept-above rules have PPV at least the base rate.
fn ppv_direction<T: Real>(target: T, base_rate: T) -> Direction {
    if target >= base_rate {
        Direction::AcceptAbove
    } else {
        Direction::AcceptBelow
    }
}

/// Accept-above rules have FOR at most the base rate.
fn for_direction<T: Real>(target: T, base_rate: T) -> Direction {
    if target <= base_rate {
        Direction::AcceptAbove
    } else {
        Direction::AcceptBelow
    }
}

fn candidates_for<T: Real>(
    fam: Family,
    b: &BaselineDistribution<T>,
    grid: &ThresholdGrid,
    u: &UtilityParams<T>,
    snap: T,
) -> Vec<Candidate<T>> {
    let p = Profile::new(b);
    let mut out = above_candidates(&p, grid, u, Some(snap));
    match fam {
        Family::Above => {}
        Family::AboveOrBelow => out.extend(below_candidates(&p, grid, u)),
        Family::AboveOrBand => out.extend(band_candidates(&p, grid, u)),
    }
    out
}

/// Cells that share one constraint: strata for conditional parity, else everything.
fn blocks<T: Real>(
    baselines: &[BaselineDistribution<T>],
    constraint: &FairnessConstraint<T>,
) -> Result<Vec<Vec<usize>>, DecisionError> {
    if constraint.criterion != Criterion::ConditionalStatisticalParity {
        if let Some(b) = baselines.iter().find(|b| b.stratum.is_some()) {
            return Err(DecisionError::GroupMismatch(b.cell()));
        }
        return Ok(vec![(0..baselines.len()).collect()]);
    }
    let strata = constraint.strata.clone().unwrap_or_default();
    let mut by: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (i, b) in baselines.iter().enumerate() {
        match &b.stratum {
            Some(s) if strata.contains(s) => by.entry(s).or_default().push(i),
            _ => return Err(DecisionError::GroupMismatch(b.cell())),
        }
    }
    Ok(by.into_values().collect())
}

/// Utility-maximal rule on the threshold grid whose expected gaps meet the constraint.
pub fn optimize_constrained<T: Real>(
    baselines: &[BaselineDistribution<T>],
    weights: &BTreeMap<CellKey, T>,
    u: &UtilityParams<T>,
    constraint: &FairnessConstraint<T>,
    resolution: T,
) -> Result<OptimizationResult<T>, DecisionError> {
    constraint.validate()?;
    let grid = ThresholdGrid::from_resolution(resolution)?;
    let unconstrained = optimize_unconstrained(baselines, weights, u)?;
    let components = constraint.criterion.components();
    let eps = constraint.epsilon;
    let slack = T::lit(FEASIBILITY_SLACK);
    let free_gaps = expected_gaps(&unconstrained.rule, baselines, components)?;
    let binding: BTreeMap<GapKind, bool> =
        free_gaps.iter().map(|(k, g)| (*k, g.is_some_and(|g| g > eps + slack))).collect();
    let trace = |candidates, evaluations| SearchTrace {
        resolution: resolution.to_f64(),
        grid_points: grid.len(),
        candidates,
        evaluations,
    };
    if eps >= T::one() {
        return Ok(OptimizationResult {
            constraint: Some(constraint.clone()),
            binding,
            search_trace: trace(unconstrained.search_trace.candidates, 1),
            achieved_gaps: free_gaps,
            ..unconstrained
        });
    }

    let snap = clamp_unit(optimal_unconstrained_threshold(u)?);
    let fam = family(constraint.criterion);
    let mut cells: Vec<CellRule<T>> = Vec::with_capacity(baselines.len());
    let mut targets = Vec::new();
    let mut warnings = Vec::new();
    let (mut n_candidates, mut evaluations) = (0usize, 0u64);
    for block in blocks(baselines, constraint)? {
        let problems: Vec<CellProblem<T>> = block
            .iter()
            .map(|&i| {
                let b = &baselines[i];
                CellProblem {
                    weight: weights[&b.cell()],
                    base_rate: b.base_rate,
                    candidates: candidates_for(fam, b, &grid, u, snap),
                }
            })
            .collect();
        n_candidates += problems.iter().map(|p| p.candidates.len()).sum::<usize>();
        let (solution, evals): (Option<Solution<T>>, u64) = match constraint.criterion {
            Criterion::PredictiveParity => target_search(&problems, GapKind::Ppv, ppv_direction, eps, &grid),
            Criterion::ForParity => target_search(&problems, GapKind::For, for_direction, eps, &grid),
            Criterion::Sufficiency => joint_target_search(&problems, eps, &grid),
            _ => gap_search(&problems, components, eps),
        };
        evaluations += evals;
        let solution = solution.ok_or(DecisionError::Infeasible {
            criterion: constraint.criterion,
            epsilon: eps.to_f64().unwrap_or(f64::NAN),
        })?;
        if let (Some(&v), Criterion::PredictiveParity | Criterion::ForParity) =
            (solution.targets.first(), constraint.criterion)
        {
            for &i in &block {
                if baselines[i].base_rate == v {
                    warnings.push(format!(
                        "target {v} equals the base rate of {}; accept-above used",
                        baselines[i].cell()
                    ));
                }
            }
        }
        targets.extend(solution.targets.iter().copied());
        for (&i, (&k, p)) in block.iter().zip(solution.picks.iter().zip(&problems)) {
            let s = p.candidates[k].shape;
            let cell = baselines[i].cell();
            cells.push(CellRule {
                group: cell.group,
                stratum: cell.stratum,
                direction: s.direction,
                tau_lo: s.tau_lo,
                tau_hi: s.tau_hi,
                mix: s.mix,
            });
        }
    }
    cells.sort_by_key(|r| r.cell());
    let rule = DecisionRule { cells };
    let expected_utility_per_capita = evaluate_utility(&rule, baselines, weights, u)?;
    let achieved_gaps = expected_gaps(&rule, baselines, components)?;
    Ok(OptimizationResult {
        constraint: Some(constraint.clone()),
        rule,
        expected_utility_per_capita,
        achieved_gaps,
        binding,
        targets,
        search_trace: trace(n_candidates, evaluations),
        warnings,
    })
}

/// Adds decisions to calibrated instances. Band decisions draw from `(seed, id)`.
pub fn apply_rule<T: Real>(
    rule: &DecisionRule<T>,
    instances: &[LabeledInstance<T>],
    seed: u64,
) -> Result<Vec<LabeledInstance<T>>, DecisionError> {
    if let Some(r) = rule.cells.iter().find(|r| !r.validate()) {
        return Err(DecisionError::InvalidRule(r.cell()));
    }
    instances
        .iter()
        .map(|inst| {
            let p = inst
                .calibrated_p
                .ok_or_else(|| DecisionError::UncalibratedInstance { id: inst.id.clone() })?;
            let r = rule.rule_for(&inst.cell()).ok_or_else(|| DecisionError::UnknownGroup {
                id: inst.id.clone(),
                group: inst.group.clone(),
            })?;
            let q = r.acceptance_probability(p);
            let d = if q >= T::one() {
                true
            } else if q <= T::zero() {
                false
            } else {
                unit_draw(seed, &inst.id) < q.to_f64().unwrap_or(0.0)
            };
            Ok(inst.clone().with_decision(d))
        })
        .collect()
}

/// Groups covered by a rule.
pub fn rule_groups<T: Real>(rule: &DecisionRule<T>) -> BTreeSet<GroupId> {
    rule.cells.iter().map(|r| r.group.clone()).collect()
}

#[cfg(test)]
mod tests;
