//! Per-cell candidate rules and their expected masses.
//!
//! Thresholds that only differ by zero-mass bins induce the same decisions on
//! the baseline; each such class keeps one representative, the unconstrained
//! optimum when it belongs to the class and otherwise the lowest grid value.

use std::cmp::Ordering;

use super::grid::ThresholdGrid;
use super::UtilityParams;
use crate::baseline::{BaselineDistribution, Direction, MassSummary};
use crate::metrics::GapKind;
use crate::num::Real;

/// Rule shape for one cell: `tau_lo == tau_hi` is deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Shape<T> {
    pub direction: Direction,
    pub tau_lo: T,
    pub tau_hi: T,
    pub mix: T,
}

impl<T: Real> Shape<T> {
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        (self.tau_lo, self.tau_hi, self.mix)
            .partial_cmp(&(other.tau_lo, other.tau_hi, other.mix))
            .unwrap_or(Ordering::Equal)
            .then((self.direction as u8).cmp(&(other.direction as u8)))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate<T> {
    pub shape: Shape<T>,
    pub stats: MassSummary<T>,
    /// Per-capita utility within the cell (unweighted).
    pub utility: T,
}

impl<T: Real> Candidate<T> {
    pub fn signature(&self, kind: GapKind) -> Option<T> {
        let s = &self.stats;
        let div = |a: T, b: T| (b > T::zero()).then(|| a / b);
        match kind {
            GapKind::Acceptance | GapKind::ConditionalAcceptance => Some(s.accepted),
            GapKind::Tpr => div(s.true_pos, s.positive),
            GapKind::Fpr => div(s.false_pos, s.negative),
            GapKind::Ppv => div(s.true_pos, s.accepted),
            GapKind::For => div(s.false_neg, s.rejected),
        }
    }
}

/// Cumulative masses of one baseline in ascending bin order.
pub(crate) struct Profile<T> {
    means: Vec<T>,
    /// prefix sums: index j covers bins 0..j
    pre_w: Vec<T>,
    pre_pos: Vec<T>,
    pre_neg: Vec<T>,
    /// suffix sums: index i covers bins i..B
    suf_w: Vec<T>,
    suf_pos: Vec<T>,
    suf_neg: Vec<T>,
    /// number of nonzero-mass bins in 0..j
    support_before: Vec<usize>,
    positive: T,
    negative: T,
}

impl<T: Real> Profile<T> {
    pub fn new(b: &BaselineDistribution<T>) -> Self {
        let nb = b.bins();
        let mut pre_w = vec![T::zero(); nb + 1];
        let mut pre_pos = vec![T::zero(); nb + 1];
        let mut pre_neg = vec![T::zero(); nb + 1];
        let mut support_before = vec![0usize; nb + 1];
        for i in 0..nb {
            let (w, m) = (b.mass[i], b.bin_means[i]);
            pre_w[i + 1] = pre_w[i] + w;
            pre_pos[i + 1] = pre_pos[i] + w * m;
            pre_neg[i + 1] = pre_neg[i] + w * (T::one() - m);
            support_before[i + 1] = support_before[i] + (w > T::zero()) as usize;
        }
        let mut suf_w = vec![T::zero(); nb + 1];
        let mut suf_pos = vec![T::zero(); nb + 1];
        let mut suf_neg = vec![T::zero(); nb + 1];
        for i in (0..nb).rev() {
            let (w, m) = (b.mass[i], b.bin_means[i]);
            suf_w[i] = suf_w[i + 1] + w;
            suf_pos[i] = suf_pos[i + 1] + w * m;
            suf_neg[i] = suf_neg[i + 1] + w * (T::one() - m);
        }
        let positive = suf_pos[0];
        let negative = suf_neg[0];
        Profile {
            means: b.bin_means.clone(),
            pre_w,
            pre_pos,
            pre_neg,
            suf_w,
            suf_pos,
            suf_neg,
            support_before,
            positive,
            negative,
        }
    }

    fn bins(&self) -> usize {
        self.means.len()
    }

    /// First bin accepted by an accept-above threshold.
    fn above_start(&self, tau: T) -> usize {
        self.means.partition_point(|m| *m < tau)
    }

    /// One past the last bin accepted by an accept-below threshold.
    fn below_end(&self, tau: T) -> usize {
        self.means.partition_point(|m| *m <= tau)
    }

    /// Accept bins `start..` surely and `band_start..start` with probability `mix`.
    fn above_stats(&self, start: usize, band_start: usize, mix: T) -> MassSummary<T> {
        let bw = self.pre_w[start] - self.pre_w[band_start];
        let bp = self.pre_pos[start] - self.pre_pos[band_start];
        let bn = self.pre_neg[start] - self.pre_neg[band_start];
        let keep = T::one() - mix;
        MassSummary {
            accepted: self.suf_w[start] + mix * bw,
            rejected: self.pre_w[band_start] + keep * bw,
            true_pos: self.suf_pos[start] + mix * bp,
            false_pos: self.suf_neg[start] + mix * bn,
            false_neg: self.pre_pos[band_start] + keep * bp,
            positive: self.positive,
            negative: self.negative,
        }
    }

    fn below_stats(&self, end: usize) -> MassSummary<T> {
        MassSummary {
            accepted: self.pre_w[end],
            rejected: self.suf_w[end],
            true_pos: self.pre_pos[end],
            false_pos: self.pre_neg[end],
            false_neg: self.suf_pos[end],
            positive: self.positive,
            negative: self.negative,
        }
    }

    /// Support bins accepted by accept-above at `start`.
    fn support_from(&self, start: usize) -> usize {
        self.support_before[self.bins()] - self.support_before[start]
    }
}

fn utility_of<T: Real>(s: &MassSummary<T>, u: &UtilityParams<T>) -> T {
    s.true_pos * u.alpha - s.false_pos * u.beta + s.rejected * u.gamma
}

/// Class representatives in ascending threshold order: `(tau, boundary bin, class id)`.
fn classes<T: Real>(
    grid: &ThresholdGrid,
    snap: Option<T>,
    boundary: impl Fn(T) -> usize,
    class_of: impl Fn(usize) -> usize,
) -> Vec<(T, usize, usize)> {
    let mut out: Vec<(T, usize, usize)> = Vec::new();
    for tau in grid.values::<T>() {
        let at = boundary(tau);
        let class = class_of(at);
        if out.last().is_none_or(|&(_, _, c)| c != class) {
            out.push((tau, at, class));
        }
    }
    if let Some(s) = snap {
        let class = class_of(boundary(s));
        if let Some(entry) = out.iter_mut().find(|e| e.2 == class) {
            entry.0 = s;
        }
    }
    out
}

/// Deterministic accept-above candidates, one per decision class.
pub(crate) fn above_candidates<T: Real>(
    p: &Profile<T>,
    grid: &ThresholdGrid,
    u: &UtilityParams<T>,
    snap: Option<T>,
) -> Vec<Candidate<T>> {
    classes(grid, snap, |t| p.above_start(t), |i| p.support_from(i))
        .into_iter()
        .map(|(tau, start, _)| {
            let stats = p.above_stats(start, start, T::zero());
            Candidate {
                shape: Shape { direction: Direction::AcceptAbove, tau_lo: tau, tau_hi: tau, mix: T::zero() },
                utility: utility_of(&stats, u),
                stats,
            }
        })
        .collect()
}

/// Deterministic accept-below candidates, one per decision class.
pub(crate) fn below_candidates<T: Real>(
    p: &Profile<T>,
    grid: &ThresholdGrid,
    u: &UtilityParams<T>,
) -> Vec<Candidate<T>> {
    classes(grid, None, |t| p.below_end(t), |j| p.support_before[j])
        .into_iter()
        .map(|(tau, end, _)| {
            let stats = p.below_stats(end);
            Candidate {
                shape: Shape { direction: Direction::AcceptBelow, tau_lo: tau, tau_hi: tau, mix: T::zero() },
                utility: utility_of(&stats, u),
                stats,
            }
        })
        .collect()
}

/// Randomized accept-above bands with positive band mass and interior mix.
pub(crate) fn band_candidates<T: Real>(
    p: &Profile<T>,
    grid: &ThresholdGrid,
    u: &UtilityParams<T>,
) -> Vec<Candidate<T>> {
    let reps = classes(grid, None, |t| p.above_start(t), |i| p.support_from(i));
    let mixes: Vec<T> = (1..grid.steps).map(|k| grid.value(k)).collect();
    let mut out = Vec::new();
    // reps are in ascending tau, so accepted support shrinks along the list
    for (a, &(lo, lo_start, lo_class)) in reps.iter().enumerate() {
        for &(hi, hi_start, hi_class) in &reps[a + 1..] {
            debug_assert!(hi_class < lo_class);
            for &mix in &mixes {
                let stats = p.above_stats(hi_start, lo_start, mix);
                out.push(Candidate {
                    shape: Shape { direction: Direction::AcceptAbove, tau_lo: lo, tau_hi: hi, mix },
                    utility: utility_of(&stats, u),
                    stats,
                });
            }
        }
    }
    out
}
