//! Combining per-cell candidates into a feasible, utility-maximal tuple.
//!
//! Two feasibility notions are searched. Gap constraints bound the spread of
//! one or two rates across cells; they are solved by a depth-first walk over
//! cells in utility order with a bucketed range index for the last cell.
//! Target constraints require every cell's rate to sit within `eps / 2` of a
//! common grid target; each target is solved cell by cell.

use std::cmp::Ordering;

use super::candidates::{Candidate, Shape};
use super::grid::{ThresholdGrid, FEASIBILITY_SLACK};
use crate::baseline::Direction;
use crate::metrics::GapKind;
use crate::num::Real;

pub(crate) struct CellProblem<T> {
    pub weight: T,
    pub base_rate: T,
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Real> CellProblem<T> {
    /// Candidate indices, most preferred first.
    fn preference_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.candidates[a], &self.candidates[b]);
            cb.utility
                .partial_cmp(&ca.utility)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ca.shape.key_cmp(&cb.shape))
        });
        order
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution<T> {
    pub picks: Vec<usize>,
    pub total: T,
    pub spread: T,
    pub targets: Vec<T>,
}

/// Largest pairwise threshold difference within a tuple.
pub(crate) fn threshold_spread<'a, T: Real>(shapes: impl Iterator<Item = &'a Shape<T>>) -> T {
    let mut lo = (T::infinity(), T::neg_infinity());
    let mut hi = (T::infinity(), T::neg_infinity());
    for s in shapes {
        lo = (lo.0.min(s.tau_lo), lo.1.max(s.tau_lo));
        hi = (hi.0.min(s.tau_hi), hi.1.max(s.tau_hi));
    }
    if lo.0 > lo.1 {
        return T::zero();
    }
    (lo.1 - lo.0).max(hi.1 - hi.0)
}

fn shapes_cmp<T: Real>(a: &[Shape<T>], b: &[Shape<T>]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.key_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

struct Incumbent<'a, T> {
    cells: &'a [CellProblem<T>],
    best: Option<Solution<T>>,
    evaluations: u64,
}

impl<'a, T: Real> Incumbent<'a, T> {
    fn new(cells: &'a [CellProblem<T>]) -> Self {
        Incumbent { cells, best: None, evaluations: 0 }
    }

    fn shapes(&self, picks: &[usize]) -> Vec<Shape<T>> {
        picks.iter().zip(self.cells).map(|(&i, c)| c.candidates[i].shape).collect()
    }

    fn total(&self, picks: &[usize]) -> T {
        picks
            .iter()
            .zip(self.cells)
            .fold(T::zero(), |acc, (&i, c)| acc + c.weight * c.candidates[i].utility)
    }

    fn offer(&mut self, picks: &[usize], targets: &[T]) {
        self.evaluations += 1;
        let total = self.total(picks);
        let shapes = self.shapes(picks);
        let spread = threshold_spread(shapes.iter());
        let better = match &self.best {
            None => true,
            Some(b) => {
                total > b.total
                    || (total == b.total
                        && (spread < b.spread
                            || (spread == b.spread
                                && shapes_cmp(&shapes, &self.shapes(&b.picks)) == Ordering::Less)))
            }
        };
        if better {
            self.best = Some(Solution { picks: picks.to_vec(), total, spread, targets: targets.to_vec() });
        }
    }

    fn best_total(&self) -> Option<T> {
        self.best.as_ref().map(|b| b.total)
    }
}

/// Rate windows `[lo, hi]` per constrained dimension.
#[derive(Clone)]
struct Window<T> {
    bounds: Vec<(T, T)>,
}

impl<T: Real> Window<T> {
    fn open(dims: usize) -> Self {
        Window { bounds: vec![(T::neg_infinity(), T::infinity()); dims] }
    }

    fn admits(&self, sig: &[Option<T>]) -> bool {
        self.bounds.iter().zip(sig).all(|(&(lo, hi), s)| match s {
            Some(v) => *v >= lo && *v <= hi,
            None => true,
        })
    }

    fn narrowed(&self, sig: &[Option<T>], reach: T) -> Self {
        let bounds = self
            .bounds
            .iter()
            .zip(sig)
            .map(|(&(lo, hi), s)| match s {
                Some(v) => (lo.max(*v - reach), hi.min(*v + reach)),
                None => (lo, hi),
            })
            .collect();
        Window { bounds }
    }
}

/// Buckets a cell's candidates by their defined signature coordinates.
struct RangeIndex {
    per_dim: usize,
    /// dimensions in which the cell's signatures are defined
    axes: Vec<usize>,
    buckets: Vec<Vec<usize>>,
}

impl RangeIndex {
    fn new<T: Real>(sigs: &[Vec<Option<T>>], order: &[usize], eps: T) -> Self {
        let axes: Vec<usize> = match sigs.first() {
            Some(s) => (0..s.len()).filter(|&d| s[d].is_some()).collect(),
            None => Vec::new(),
        };
        let per_dim = if axes.is_empty() {
            1
        } else {
            let e = eps.to_f64().unwrap_or(1.0);
            if e > 0.0 {
                ((1.0 / e).floor() as usize).clamp(1, 128)
            } else {
                128
            }
        };
        let mut buckets = vec![Vec::new(); per_dim.pow(axes.len() as u32)];
        for &i in order {
            let b = Self::flat(per_dim, axes.iter().map(|&d| Self::slot(per_dim, sigs[i][d].unwrap_or_default())));
            buckets[b].push(i);
        }
        RangeIndex { per_dim, axes, buckets }
    }

    fn slot<T: Real>(per_dim: usize, v: T) -> usize {
        let x = (v.to_f64().unwrap_or(0.0) * per_dim as f64).floor();
        (x.max(0.0) as usize).min(per_dim - 1)
    }

    fn flat(per_dim: usize, slots: impl Iterator<Item = usize>) -> usize {
        slots.fold(0, |acc, s| acc * per_dim + s)
    }

    /// Buckets overlapping `window`, each listed in preference order.
    fn buckets_in<T: Real>(&self, window: &Window<T>) -> Vec<&[usize]> {
        let mut ranges = Vec::new();
        for &d in &self.axes {
            let (lo, hi) = window.bounds[d];
            if lo > hi {
                return Vec::new();
            }
            let a = if lo.is_finite() { Self::slot(self.per_dim, lo) } else { 0 };
            let b = if hi.is_finite() { Self::slot(self.per_dim, hi) } else { self.per_dim - 1 };
            ranges.push((a, b));
        }
        let mut out = Vec::new();
        let mut cursor: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.buckets[Self::flat(self.per_dim, cursor.iter().copied())].as_slice());
            let mut d = cursor.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if cursor[d] < ranges[d].1 {
                    cursor[d] += 1;
                    break;
                }
                cursor[d] = ranges[d].0;
            }
        }
    }
}

/// Best tuple whose rates differ by at most `eps` across cells in every dimension.
pub(crate) fn gap_search<T: Real>(
    cells: &[CellProblem<T>],
    dims: &[GapKind],
    eps: T,
) -> (Option<Solution<T>>, u64) {
    if cells.is_empty() {
        return (None, 0);
    }
    let reach = eps + T::lit(FEASIBILITY_SLACK);
    let sigs: Vec<Vec<Vec<Option<T>>>> = cells
        .iter()
        .map(|c| c.candidates.iter().map(|k| dims.iter().map(|&d| k.signature(d)).collect()).collect())
        .collect();
    let orders: Vec<Vec<usize>> = cells.iter().map(|c| c.preference_order()).collect();
    let last = cells.len() - 1;
    let index = RangeIndex::new(&sigs[last], &orders[last], eps);
    // best achievable weighted utility of cells i.. on their own
    let mut tail = vec![T::zero(); cells.len() + 1];
    for i in (0..cells.len()).rev() {
        let top = orders[i].first().map_or(T::zero(), |&k| cells[i].candidates[k].utility);
        tail[i] = tail[i + 1] + cells[i].weight * top;
    }
    let walk = Walk { cells, sigs: &sigs, orders: &orders, index: &index, tail: &tail, reach };
    let mut inc = Incumbent::new(cells);
    let mut picks = Vec::with_capacity(cells.len());
    walk.descend(0, T::zero(), &Window::open(dims.len()), &mut picks, &mut inc);
    (inc.best, inc.evaluations)
}

struct Walk<'a, T> {
    cells: &'a [CellProblem<T>],
    sigs: &'a [Vec<Vec<Option<T>>>],
    orders: &'a [Vec<usize>],
    index: &'a RangeIndex,
    tail: &'a [T],
    reach: T,
}

impl<T: Real> Walk<'_, T> {
    fn pruned(&self, bound: T, inc: &Incumbent<T>) -> bool {
        match inc.best_total() {
            // margin keeps exact ties alive despite a different summation order
            Some(best) => bound + T::lit(1e-12) * (T::one() + best.abs()) < best,
            None => false,
        }
    }

    fn descend(&self, i: usize, partial: T, window: &Window<T>, picks: &mut Vec<usize>, inc: &mut Incumbent<T>) {
        let cell = &self.cells[i];
        if i + 1 == self.cells.len() {
            self.finish(window, picks, inc);
            return;
        }
        for &k in &self.orders[i] {
            let gain = cell.weight * cell.candidates[k].utility;
            if self.pruned(partial + gain + self.tail[i + 1], inc) {
                break;
            }
            let sig = &self.sigs[i][k];
            if !window.admits(sig) {
                continue;
            }
            picks.push(k);
            self.descend(i + 1, partial + gain, &window.narrowed(sig, self.reach), picks, inc);
            picks.pop();
        }
    }

    /// Offers the preferred admissible candidate of the last cell.
    fn finish(&self, window: &Window<T>, picks: &mut Vec<usize>, inc: &mut Incumbent<T>) {
        let last = self.cells.len() - 1;
        let cands = &self.cells[last].candidates;
        let chosen: Vec<Shape<T>> =
            picks.iter().enumerate().map(|(c, &k)| self.cells[c].candidates[k].shape).collect();
        let mut best: Option<(usize, T)> = None;
        for bucket in self.index.buckets_in(window) {
            for &k in bucket {
                let c = &cands[k];
                if let Some((b, _)) = best {
                    if c.utility < cands[b].utility {
                        break;
                    }
                }
                if !window.admits(&self.sigs[last][k]) {
                    continue;
                }
                let spread = threshold_spread(chosen.iter().chain(std::iter::once(&c.shape)));
                let better = match best {
                    None => true,
                    Some((b, bs)) => {
                        let cb = &cands[b];
                        c.utility > cb.utility
                            || (c.utility == cb.utility
                                && (spread < bs || (spread == bs && c.shape.key_cmp(&cb.shape) == Ordering::Less)))
                    }
                };
                if better {
                    best = Some((k, spread));
                }
            }
        }
        if let Some((k, _)) = best {
            picks.push(k);
            inc.offer(picks, &[]);
            picks.pop();
        }
    }
}

/// Which side a cell must accept for a given target and base rate.
pub(crate) type DirectionLaw<T> = fn(T, T) -> Direction;

/// Best tuple whose `kind` rates all lie within `eps / 2` of one grid target.
pub(crate) fn target_search<T: Real>(
    cells: &[CellProblem<T>],
    kind: GapKind,
    law: DirectionLaw<T>,
    eps: T,
    grid: &ThresholdGrid,
) -> (Option<Solution<T>>, u64) {
    let half = eps / T::lit(2.0) + T::lit(FEASIBILITY_SLACK);
    let orders: Vec<Vec<usize>> = cells.iter().map(|c| c.preference_order()).collect();
    let sigs: Vec<Vec<Option<T>>> =
        cells.iter().map(|c| c.candidates.iter().map(|k| k.signature(kind)).collect()).collect();
    let mut inc = Incumbent::new(cells);
    let mut picks = Vec::with_capacity(cells.len());
    'targets: for v in grid.values::<T>() {
        picks.clear();
        for (c, cell) in cells.iter().enumerate() {
            let dir = law(v, cell.base_rate);
            let found = orders[c].iter().copied().find(|&k| {
                cell.candidates[k].shape.direction == dir && sigs[c][k].is_some_and(|s| (s - v).abs() <= half)
            });
            match found {
                Some(k) => picks.push(k),
                None => continue 'targets,
            }
        }
        inc.offer(&picks, &[v]);
    }
    (inc.best, inc.evaluations)
}

/// Best tuple whose PPV and FOR each lie within `eps / 2` of a common grid target pair.
pub(crate) fn joint_target_search<T: Real>(
    cells: &[CellProblem<T>],
    eps: T,
    grid: &ThresholdGrid,
) -> (Option<Solution<T>>, u64) {
    const NONE: u32 = u32::MAX;
    type Span = (usize, usize);
    let half = eps / T::lit(2.0);
    let side = grid.len();
    let mut tables: Vec<Vec<u32>> = Vec::with_capacity(cells.len());
    for cell in cells {
        let order = cell.preference_order();
        let spans: Vec<Option<(Span, Span)>> = cell
            .candidates
            .iter()
            .map(|c| {
                let rows = grid.indices_near(c.signature(GapKind::Ppv)?, half)?;
                let cols = grid.indices_near(c.signature(GapKind::For)?, half)?;
                Some((rows, cols))
            })
            .collect();
        let mut table = vec![NONE; side * side];
        let mut next = vec![0usize; side + 1];
        for row in 0..side {
            // next[j] is the first unpainted column at or after j
            for (j, n) in next.iter_mut().enumerate() {
                *n = j;
            }
            let mut painted = 0;
            for &k in &order {
                let Some(((r0, r1), (c0, c1))) = spans[k] else { continue };
                if row < r0 || row > r1 {
                    continue;
                }
                let mut j = find(&mut next, c0);
                while j <= c1 {
                    table[row * side + j] = k as u32;
                    painted += 1;
                    next[j] = j + 1;
                    j = find(&mut next, j + 1);
                }
                if painted == side {
                    break;
                }
            }
        }
        tables.push(table);
    }
    let mut inc = Incumbent::new(cells);
    let mut picks = Vec::with_capacity(cells.len());
    for row in 0..side {
        'cols: for col in 0..side {
            picks.clear();
            for table in &tables {
                match table[row * side + col] {
                    NONE => continue 'cols,
                    k => picks.push(k as usize),
                }
            }
            inc.offer(&picks, &[grid.value(row), grid.value(col)]);
        }
    }
    (inc.best, inc.evaluations)
}

fn find(next: &mut [usize], j: usize) -> usize {
    let mut root = j;
    while next[root] != root {
        root = next[root];
    }
    let mut cur = j;
    while next[cur] != root {
        let up = next[cur];
        next[cur] = root;
        cur = up;
    }
    root
}
