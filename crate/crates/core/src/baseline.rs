//! Per-group distributions of calibrated probabilities.
//!
//! A baseline is a histogram of calibrated probabilities over equal-width bins
//! on `[0, 1]`. Each bin is represented by the mean probability of the
//! instances that fell in it (its midpoint when empty), and calibrated
//! probabilities are taken as true probabilities within a bin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{CellKey, GroupId, LabeledInstance};
use crate::num::Real;

pub const DEFAULT_BASELINE_BINS: usize = 100;

/// Share of a group's instances that must carry outcomes for the base rate to
/// come from labels.
pub const LABELED_SHARE_FOR_BASE_RATE: f64 = 0.9;

/// Which side of a threshold a rule accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AcceptAbove,
    AcceptBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRateSource {
    Labels,
    MeanCalibratedProbability,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("no instances for {0}")]
    EmptyGroup(CellKey),
    #[error("instance {id} has no calibrated probability")]
    UncalibratedInstances { id: String },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("malformed baseline for {cell}: {reason}")]
    Malformed { cell: CellKey, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BaselineDistribution<T = f64> {
    pub group: GroupId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    pub bin_edges: Vec<T>,
    pub mass: Vec<T>,
    /// Mean calibrated probability within each bin (midpoint when empty).
    pub bin_means: Vec<T>,
    pub count: usize,
    pub base_rate: T,
    pub base_rate_source: BaseRateSource,
}

impl<T: Real> BaselineDistribution<T> {
    pub fn cell(&self) -> CellKey {
        CellKey { group: self.group.clone(), stratum: self.stratum.clone() }
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_width(&self) -> T {
        T::one() / T::from_count(self.bins())
    }

    /// Mean calibrated probability of the group.
    pub fn mean_probability(&self) -> T {
        self.mass.iter().zip(&self.bin_means).fold(T::zero(), |acc, (&w, &m)| acc + w * m)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |reason: &str| BaselineError::Malformed { cell: self.cell(), reason: reason.into() };
        let b = self.mass.len();
        if b == 0 || self.bin_edges.len() != b + 1 || self.bin_means.len() != b {
            return Err(bad("inconsistent bin counts"));
        }
        if self.bin_edges[0] != T::zero() || self.bin_edges[b] != T::one() {
            return Err(bad("edges do not cover [0, 1]"));
        }
        if !self.bin_edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("edges not ascending"));
        }
        if self.mass.iter().any(|&w| w.is_nan() || w < T::zero()) {
            return Err(bad("negative mass"));
        }
        let total = self.mass.iter().fold(T::zero(), |a, &w| a + w);
        if (total - T::one()).abs() > T::sum_tolerance() {
            return Err(bad("mass does not sum to 1"));
        }
        for (i, &m) in self.bin_means.iter().enumerate() {
            if !(m >= self.bin_edges[i] && m <= self.bin_edges[i + 1]) {
                return Err(bad("bin mean outside its bin"));
            }
        }
        if !(self.base_rate >= T::zero() && self.base_rate <= T::one()) {
            return Err(bad("base rate outside [0, 1]"));
        }
        if self.count == 0 {
            return Err(bad("zero count"));
        }
        Ok(())
    }

    /// Aggregate masses for per-bin acceptance probabilities `q`.
    pub fn summarize(&self, q: impl Fn(usize, T) -> T) -> MassSummary<T> {
        let mut s = MassSummary::default();
        for (b, (&w, &m)) in self.mass.iter().zip(&self.bin_means).enumerate() {
            let qb = q(b, m);
            let pos = w * m;
            let neg = w * (T::one() - m);
            s.positive = s.positive + pos;
            s.negative = s.negative + neg;
            s.accepted = s.accepted + w * qb;
            s.rejected = s.rejected + w * (T::one() - qb);
            s.true_pos = s.true_pos + pos * qb;
            s.false_pos = s.false_pos + neg * qb;
            s.false_neg = s.false_neg + pos * (T::one() - qb);
        }
        s
    }
}

/// Probability masses of a rule applied to a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MassSummary<T> {
    pub accepted: T,
    pub rejected: T,
    pub true_pos: T,
    pub false_pos: T,
    pub false_neg: T,
    pub positive: T,
    pub negative: T,
}

fn div<T: Real>(num: T, den: T) -> Option<T> {
    (den > T::zero()).then(|| num / den)
}

impl<T: Real> MassSummary<T> {
    pub fn rates(&self) -> RateCurves<T> {
        RateCurves {
            acceptance: self.accepted,
            tpr: div(self.true_pos, self.positive),
            fpr: div(self.false_pos, self.negative),
            ppv: div(self.true_pos, self.accepted),
            for_rate: div(self.false_neg, self.rejected),
        }
    }
}

/// Expected rates of a threshold rule under a baseline; `None` marks an
/// empty conditioning set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RateCurves<T = f64> {
    pub acceptance: T,
    pub tpr: Option<T>,
    pub fpr: Option<T>,
    pub ppv: Option<T>,
    pub for_rate: Option<T>,
}

/// Estimates the baseline of `cell` (all strata of the group when the cell has none).
pub fn estimate_baseline<T: Real>(
    instances: &[LabeledInstance<T>],
    cell: &CellKey,
    bin_count: usize,
) -> Result<BaselineDistribution<T>, BaselineError> {
    if bin_count == 0 {
        return Err(BaselineError::ZeroBins);
    }
    let members: Vec<&LabeledInstance<T>> = instances
        .iter()
        .filter(|i| i.group == cell.group)
        .filter(|i| cell.stratum.is_none() || i.stratum == cell.stratum)
        .collect();
    if members.is_empty() {
        return Err(BaselineError::EmptyGroup(cell.clone()));
    }
    let bin_edges: Vec<T> = (0..=bin_count).map(|k| T::ratio(k, bin_count)).collect();
    let interior = &bin_edges[1..bin_count];
    let mut counts = vec![0usize; bin_count];
    let mut sums = vec![T::zero(); bin_count];
    let mut p_sum = T::zero();
    let (mut labeled, mut positives) = (0usize, 0usize);
    for inst in &members {
        let p = inst
            .calibrated_p
            .ok_or_else(|| BaselineError::UncalibratedInstances { id: inst.id.clone() })?;
        let b = interior.partition_point(|e| *e <= p);
        counts[b] += 1;
        sums[b] = sums[b] + p;
        p_sum = p_sum + p;
        if let Some(y) = inst.outcome {
            labeled += 1;
            positives += y as usize;
        }
    }
    let n = members.len();
    let nt = T::from_count(n);
    let mass = counts.iter().map(|&c| T::from_count(c) / nt).collect();
    let bin_means = (0..bin_count)
        .map(|b| {
            if counts[b] > 0 {
                // clamp guards against summation drift leaving the bin
                let m = sums[b] / T::from_count(counts[b]);
                m.max(bin_edges[b]).min(bin_edges[b + 1])
            } else {
                T::ratio(2 * b + 1, 2 * bin_count)
            }
        })
        .collect();
    let (base_rate, base_rate_source) =
        if labeled > 0 && labeled as f64 >= LABELED_SHARE_FOR_BASE_RATE * n as f64 {
            (T::ratio(positives, labeled), BaseRateSource::Labels)
        } else {
            (p_sum / nt, BaseRateSource::MeanCalibratedProbability)
        };
    Ok(BaselineDistribution {
        group: cell.group.clone(),
        stratum: cell.stratum.clone(),
        bin_edges,
        mass,
        bin_means,
        count: n,
        base_rate,
        base_rate_source,
    })
}

/// Expected rates of the deterministic threshold rule at `tau`.
pub fn expected_rate_curves<T: Real>(
    b: &BaselineDistribution<T>,
    tau: T,
    direction: Direction,
) -> RateCurves<T> {
    b.summarize(|_, m| {
        let accept = match direction {
            Direction::AcceptAbove => m >= tau,
            Direction::AcceptBelow => m <= tau,
        };
        if accept {
            T::one()
        } else {
            T::zero()
        }
    })
    .rates()
}
