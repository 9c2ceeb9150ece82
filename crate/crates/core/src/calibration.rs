//! Score-to-probability calibration by equal-frequency binning followed by
//! pooling of adjacent violators.
//!
//! Bins are half-open `[lo, hi)` with the last bin closed; scores outside the
//! fitted range clamp to the first or last bin.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{GroupId, LabeledInstance};
use crate::num::Real;

pub const DEFAULT_CALIBRATION_BINS: usize = 10;

/// Which instances a calibration function was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupScope {
    Global,
    Group(GroupId),
}

impl GroupScope {
    pub fn admits<T>(&self, inst: &LabeledInstance<T>) -> bool {
        match self {
            GroupScope::Global => true,
            GroupScope::Group(g) => &inst.group == g,
        }
    }
}

impl fmt::Display for GroupScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupScope::Global => f.write_str("global"),
            GroupScope::Group(g) => write!(f, "group:{g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("no labeled instances in scope {0}")]
    NoLabeledData(GroupScope),
    #[error("bin count {bins} exceeds the {available} labeled instances in scope {scope}")]
    InsufficientData { scope: GroupScope, bins: usize, available: usize },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("malformed calibration function: {0}")]
    Malformed(String),
}

/// Monotone step function from raw score to probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationFunction<T = f64> {
    pub group_scope: GroupScope,
    /// `bins + 1` edges; the outer two are the fitted score range.
    pub bin_edges: Vec<T>,
    pub bin_values: Vec<T>,
    pub fit_count: Vec<usize>,
}

impl<T: Real> CalibrationFunction<T> {
    pub fn bins(&self) -> usize {
        self.bin_values.len()
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bins = self.bin_values.len();
        if bins == 0 || self.bin_edges.len() != bins + 1 || self.fit_count.len() != bins {
            return Err(CalibrationError::Malformed(format!(
                "{} edges, {} values, {} counts",
                self.bin_edges.len(),
                bins,
                self.fit_count.len()
            )));
        }
        // the closed top bin may hold a single score
        let (inner, top) = self.bin_edges.split_at(bins);
        let edges_ok = inner.windows(2).all(|w| w[0] < w[1]) && inner[bins - 1] <= top[0];
        if !edges_ok {
            return Err(CalibrationError::Malformed("bin edges not ascending".into()));
        }
        if !self.bin_values.iter().all(|v| *v >= T::zero() && *v <= T::one()) {
            return Err(CalibrationError::Malformed("bin value outside [0, 1]".into()));
        }
        if !self.bin_values.windows(2).all(|w| w[0] <= w[1]) {
            return Err(CalibrationError::Malformed("bin values decrease".into()));
        }
        Ok(())
    }

    /// Index of the bin containing `score`.
    pub fn bin_index(&self, score: T) -> usize {
        let interior = &self.bin_edges[1..self.bin_edges.len() - 1];
        interior.partition_point(|e| *e <= score)
    }

    pub fn apply(&self, score: T) -> T {
        self.bin_values[self.bin_index(score)]
    }
}

/// Pools adjacent violators of monotonicity, weighting by counts.
///
/// Returns one value per input block; pooled blocks share their weighted mean.
pub fn pool_adjacent_violators<T: Real>(values: &[T], weights: &[usize]) -> Vec<T> {
    // (weighted sum, weight, number of input blocks)
    let mut stack: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let wt = T::from_count(w);
        let mut cur = (v * wt, wt, 1usize);
        while let Some(&(s, ws, k)) = stack.last() {
            // means compared cross-multiplied; zero-weight blocks pool freely
            let violates = ws == T::zero() || cur.1 == T::zero() || s * cur.1 > cur.0 * ws;
            if !violates {
                break;
            }
            stack.pop();
            cur = (cur.0 + s, cur.1 + ws, cur.2 + k);
        }
        stack.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, w, k) in stack {
        let mean = if w > T::zero() { s / w } else { T::zero() };
        out.extend(std::iter::repeat_n(mean, k));
    }
    out
}

/// Fits a calibration function on the labeled instances admitted by `scope`.
pub fn fit_calibration<T: Real>(
    instances: &[LabeledInstance<T>],
    scope: GroupScope,
    bin_count: usize,
) -> Result<CalibrationFunction<T>, CalibrationError> {
    if bin_count == 0 {
        return Err(CalibrationError::ZeroBins);
    }
    let mut data: Vec<(T, bool)> = instances
        .iter()
        .filter(|i| scope.admits(i))
        .filter_map(|i| i.outcome.map(|y| (i.raw_score, y)))
        .collect();
    if data.is_empty() {
        return Err(CalibrationError::NoLabeledData(scope));
    }
    if bin_count > data.len() {
        return Err(CalibrationError::InsufficientData {
            scope,
            bins: bin_count,
            available: data.len(),
        });
    }
    data.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let n = data.len();
    let lo = data[0].0;
    let hi = data[n - 1].0;

    // Cut at the first score of each equal-frequency chunk; drop repeats so
    // edges stay strictly ascending and every bin is nonempty.
    let mut cuts: Vec<T> = Vec::with_capacity(bin_count.saturating_sub(1));
    for k in 1..bin_count {
        let c = data[k * n / bin_count].0;
        if c > lo && cuts.last().is_none_or(|last| c > *last) {
            cuts.push(c);
        }
    }
    let bins = cuts.len() + 1;
    let mut count = vec![0usize; bins];
    let mut positives = vec![0usize; bins];
    for &(s, y) in &data {
        let b = cuts.partition_point(|e| *e <= s);
        count[b] += 1;
        positives[b] += y as usize;
    }
    let raw: Vec<T> = count
        .iter()
        .zip(&positives)
        .map(|(&c, &p)| T::from_count(p) / T::from_count(c))
        .collect();
    let bin_values = pool_adjacent_violators(&raw, &count);

    let mut bin_edges = Vec::with_capacity(bins + 1);
    bin_edges.push(lo);
    bin_edges.extend(cuts);
    bin_edges.push(hi);
    Ok(CalibrationFunction { group_scope: scope, bin_edges, bin_values, fit_count: count })
}

pub fn apply_calibration<T: Real>(f: &CalibrationFunction<T>, raw_score: T) -> T {
    f.apply(raw_score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationBin<T = f64> {
    pub count: usize,
    pub mean_score: Option<T>,
    pub empirical_frequency: Option<T>,
    pub value: T,
}

/// Reliability summary of a calibration function on labeled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationReport<T = f64> {
    pub group_scope: GroupScope,
    pub expected_calibration_error: T,
    pub bins: Vec<CalibrationBin<T>>,
}

/// Expected calibration error of `f` on the labeled instances admitted by its scope.
pub fn calibration_error<T: Real>(
    f: &CalibrationFunction<T>,
    instances: &[LabeledInstance<T>],
) -> Result<CalibrationReport<T>, CalibrationError> {
    let bins = f.bins();
    let mut count = vec![0usize; bins];
    let mut pos = vec![0usize; bins];
    let mut score_sum = vec![T::zero(); bins];
    for inst in instances.iter().filter(|i| f.group_scope.admits(i)) {
        let Some(y) = inst.outcome else { continue };
        let b = f.bin_index(inst.raw_score);
        count[b] += 1;
        pos[b] += y as usize;
        score_sum[b] = score_sum[b] + inst.raw_score;
    }
    let total: usize = count.iter().sum();
    if total == 0 {
        return Err(CalibrationError::NoLabeledData(f.group_scope.clone()));
    }
    let n = T::from_count(total);
    let mut ece = T::zero();
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let (mean_score, freq) = if count[b] > 0 {
            let c = T::from_count(count[b]);
            let freq = T::from_count(pos[b]) / c;
            ece = ece + c / n * (freq - f.bin_values[b]).abs();
            (Some(score_sum[b] / c), Some(freq))
        } else {
            (None, None)
        };
        out.push(CalibrationBin {
            count: count[b],
            mean_score,
            empirical_frequency: freq,
            value: f.bin_values[b],
        });
    }
    Ok(CalibrationReport {
        group_scope: f.group_scope.clone(),
        expected_calibration_error: ece,
        bins: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeled(rows: &[(f64, bool)]) -> Vec<LabeledInstance<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, &(s, y))| LabeledInstance::new(format!("i{i}"), s, "g").with_outcome(y))
            .collect()
    }

    #[test]
    fn constant_score_single_bin() {
        let rows: Vec<(f64, bool)> = (0..10).map(|i| (0.7, i < 7)).collect();
        let f = fit_calibration(&labeled(&rows), GroupScope::Global, 3).unwrap();
        assert_eq!(f.bins(), 1);
        assert_eq!(f.bin_values, vec![0.7]);
        assert_eq!(f.apply(0.7), 0.7);
        f.validate().unwrap();
    }

    #[test]
    fn already_calibrated_input_is_identity_like() {
        // two bins of four; in each, frequency equals the common score
        let rows = [
            (0.25, true),
            (0.25, false),
            (0.25, false),
            (0.25, false),
            (0.75, true),
            (0.75, true),
            (0.75, true),
            (0.75, false),
        ];
        let f = fit_calibration(&labeled(&rows), GroupScope::Global, 2).unwrap();
        assert_eq!(f.bin_values, vec![0.25, 0.75]);
        let r = calibration_error(&f, &labeled(&rows)).unwrap();
        assert_eq!(r.expected_calibration_error, 0.0);
        assert_eq!(r.bins[0].mean_score, Some(0.25));
    }

    #[test]
    fn all_negative_outcomes() {
        let rows: Vec<(f64, bool)> = (0..20).map(|i| (i as f64 / 20.0, false)).collect();
        let f = fit_calibration(&labeled(&rows), GroupScope::Global, 4).unwrap();
        assert!(f.bin_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_convention() {
        let f = CalibrationFunction {
            group_scope: GroupScope::Global,
            bin_edges: vec![0.0, 0.5, 1.0],
            bin_values: vec![0.2, 0.8],
            fit_count: vec![5, 5],
        };
        assert_eq!(f.apply(-3.0), 0.2);
        assert_eq!(f.apply(0.5), 0.8);
        assert_eq!(f.apply(1.0), 0.8);
        assert_eq!(f.apply(7.0), 0.8);
        assert_eq!(f.apply(0.4999), 0.2);
    }

    #[test]
    fn pooling_enforces_monotonicity() {
        // second bin frequency dips below the first
        let rows = [(0.1, true), (0.2, true), (0.3, false), (0.4, false), (0.5, true), (0.6, true)];
        let f = fit_calibration(&labeled(&rows), GroupScope::Global, 3).unwrap();
        assert_eq!(f.bin_values, vec![0.5, 0.5, 1.0]);
        f.validate().unwrap();
    }

    #[test]
    fn errors() {
        assert_eq!(
            fit_calibration::<f64>(&[], GroupScope::Global, 2),
            Err(CalibrationError::NoLabeledData(GroupScope::Global))
        );
        let rows = [(0.1, true), (0.2, false)];
        assert!(matches!(
            fit_calibration(&labeled(&rows), GroupScope::Global, 3),
            Err(CalibrationError::InsufficientData { bins: 3, available: 2, .. })
        ));
        let scope = GroupScope::Group(GroupId::from("other"));
        assert!(matches!(
            fit_calibration(&labeled(&rows), scope, 1),
            Err(CalibrationError::NoLabeledData(_))
        ));
    }

    #[test]
    fn maximal_miscalibration() {
        let rows: Vec<(f64, bool)> = (0..6).map(|i| (i as f64, false)).collect();
        let f = CalibrationFunction {
            group_scope: GroupScope::Global,
            bin_edges: vec![0.0, 5.0],
            bin_values: vec![1.0],
            fit_count: vec![6],
        };
        let r = calibration_error(&f, &labeled(&rows)).unwrap();
        assert_eq!(r.expected_calibration_error, 1.0);
    }

    #[test]
    fn hand_computed_two_bin_ece() {
        let f = CalibrationFunction {
            group_scope: GroupScope::Global,
            bin_edges: vec![0.0, 0.5, 1.0],
            bin_values: vec![0.2, 0.6],
            fit_count: vec![0, 0],
        };
        // bin0: 4 instances, 2 positive -> |0.5 - 0.2| = 0.3, weight 0.4
        // bin1: 6 instances, 6 positive -> |1.0 - 0.6| = 0.4, weight 0.6
        let mut rows = vec![(0.1, true), (0.2, true), (0.3, false), (0.4, false)];
        rows.extend((0..6).map(|_| (0.9, true)));
        let r = calibration_error(&f, &labeled(&rows)).unwrap();
        approx::assert_abs_diff_eq!(r.expected_calibration_error, 0.4 * 0.3 + 0.6 * 0.4, epsilon = 1e-15);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), rows.len());
    }

    #[test]
    fn group_scope_matches_single_group_global_fit() {
        let mut inst = Vec::new();
        for i in 0..40 {
            let g = if i % 2 == 0 { "a" } else { "b" };
            inst.push(
                LabeledInstance::new(format!("i{i}"), (i * 7 % 40) as f64 / 40.0, g).with_outcome(i % 3 == 0),
            );
        }
        let scoped = fit_calibration(&inst, GroupScope::Group(GroupId::from("a")), 4).unwrap();
        let only_a: Vec<_> = inst.iter().filter(|i| i.group.as_str() == "a").cloned().collect();
        let global = fit_calibration(&only_a, GroupScope::Global, 4).unwrap();
        assert_eq!(scoped.bin_edges, global.bin_edges);
        assert_eq!(scoped.bin_values, global.bin_values);
        assert_eq!(scoped.fit_count, global.fit_count);
    }

    #[test]
    fn works_in_f32() {
        let inst: Vec<LabeledInstance<f32>> = (0..10)
            .map(|i| LabeledInstance::new(format!("i{i}"), i as f32 / 10.0, "g").with_outcome(i >= 5))
            .collect();
        let f = fit_calibration(&inst, GroupScope::Global, 2).unwrap();
        assert_eq!(f.bin_values, vec![0.0f32, 1.0]);
    }

    proptest! {
        #[test]
        fn fitted_function_is_monotone(
            rows in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..200),
            bins in 1usize..12,
            probes in prop::collection::vec(-0.5f64..1.5, 2..30),
        ) {
            prop_assume!(bins <= rows.len());
            let f = fit_calibration(&labeled(&rows), GroupScope::Global, bins).unwrap();
            prop_assert!(f.validate().is_ok());
            let mut probes = probes;
            probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in probes.windows(2) {
                prop_assert!(f.apply(w[0]) <= f.apply(w[1]));
            }
            prop_assert_eq!(f.fit_count.iter().sum::<usize>(), rows.len());
        }

        #[test]
        fn pooling_conserves_mass(
            values in prop::collection::vec(0.0f64..1.0, 1..30),
            seed_weights in prop::collection::vec(1usize..20, 30),
        ) {
            let weights = &seed_weights[..values.len()];
            let pooled = pool_adjacent_violators(&values, weights);
            let before: f64 = values.iter().zip(weights).map(|(v, &w)| v * w as f64).sum();
            let after: f64 = pooled.iter().zip(weights).map(|(v, &w)| v * w as f64).sum();
            prop_assert!((before - after).abs() < 1e-9);
            prop_assert!(pooled.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        }

        #[test]
        fn monotone_transform_preserves_values(
            rows in prop::collection::vec((0.01f64..1.0, any::<bool>()), 4..100),
            bins in 1usize..5,
        ) {
            prop_assume!(bins <= rows.len());
            let a = fit_calibration(&labeled(&rows), GroupScope::Global, bins).unwrap();
            let shifted: Vec<(f64, bool)> = rows.iter().map(|&(s, y)| (s.ln() * 3.0 - 1.0, y)).collect();
            let b = fit_calibration(&labeled(&shifted), GroupScope::Global, bins).unwrap();
            prop_assert_eq!(a.bin_values, b.bin_values);
        }
    }
}
