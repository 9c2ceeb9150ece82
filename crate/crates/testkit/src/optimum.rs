//! Exhaustive search for constrained optima over threshold grids.
//!
//! Every rule on the grid is enumerated per cell and its masses are summed bin
//! by bin. Rules that accept the same bins with the same probabilities are the
//! same rule as far as the baseline can tell, so only the first one met is
//! kept. Tuples are enumerated in decreasing utility with a bound that stops
//! as soon as no remaining tuple can beat the incumbent.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use fairdecide::decision::{CellRule, DecisionRule};
use fairdecide::{BaselineDistribution, CellKey, Criterion, Direction, FairnessConstraint, GapKind, UtilityParams};

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub rule: DecisionRule,
    pub utility: f64,
    /// Common target rates for target-based criteria.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    Resolution(f64),
    TooManyCells(usize),
    Utility,
    Stratification(CellKey),
    Infeasible,
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    direction: Direction,
    lo: f64,
    hi: f64,
    mix: f64,
    accepted: f64,
    rejected: f64,
    tp: f64,
    fp: f64,
    fnn: f64,
    pos: f64,
    neg: f64,
    utility: f64,
}

impl Choice {
    fn rate(&self, kind: GapKind) -> Option<f64> {
        let r = |a: f64, b: f64| if b > 0.0 { Some(a / b) } else { None };
        match kind {
            GapKind::Acceptance | GapKind::ConditionalAcceptance => Some(self.accepted),
            GapKind::Tpr => r(self.tp, self.pos),
            GapKind::Fpr => r(self.fp, self.neg),
            GapKind::Ppv => r(self.tp, self.accepted),
            GapKind::For => r(self.fnn, self.rejected),
        }
    }

    fn key(&self) -> (f64, f64, f64, u8) {
        (self.lo, self.hi, self.mix, (self.direction == Direction::AcceptBelow) as u8)
    }
}

fn key_cmp(a: &Choice, b: &Choice) -> Ordering {
    a.key().partial_cmp(&b.key()).unwrap_or(Ordering::Equal)
}

/// Masses of accepting each support bin `(w, m)` with probability `q(m)`.
fn evaluate(support: &[(f64, f64)], q: impl Fn(f64) -> f64) -> [f64; 7] {
    let mut s = [0.0; 7];
    for &(w, m) in support {
        let a = q(m);
        s[0] += w * a;
        s[1] += w * (1.0 - a);
        s[2] += w * m * a;
        s[3] += w * (1.0 - m) * a;
        s[4] += w * m * (1.0 - a);
        s[5] += w * m;
        s[6] += w * (1.0 - m);
    }
    s
}

fn choice(support: &[(f64, f64)], u: &UtilityParams, direction: Direction, lo: f64, hi: f64, mix: f64) -> Choice {
    let q = |m: f64| match direction {
        Direction::AcceptAbove => {
            if m >= hi {
                1.0
            } else if m >= lo {
                mix
            } else {
                0.0
            }
        }
        Direction::AcceptBelow => {
            if m <= lo {
                1.0
            } else if m <= hi {
                mix
            } else {
                0.0
            }
        }
    };
    let s = evaluate(support, q);
    Choice {
        direction,
        lo,
        hi,
        mix,
        accepted: s[0],
        rejected: s[1],
        tp: s[2],
        fp: s[3],
        fnn: s[4],
        pos: s[5],
        neg: s[6],
        utility: u.alpha * s[2] - u.beta * s[3] + u.gamma * s[1],
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Above,
    AboveOrBelow,
    AboveOrBand,
}

fn family(c: Criterion) -> Family {
    match c {
        Criterion::EqualizedOdds | Criterion::Sufficiency => Family::AboveOrBand,
        Criterion::PredictiveParity | Criterion::ForParity => Family::AboveOrBelow,
        _ => Family::Above,
    }
}

fn enumerate(b: &BaselineDistribution, u: &UtilityParams, fam: Family, n: usize, tau_star: f64) -> Vec<Choice> {
    let support: Vec<(f64, f64)> =
        b.mass.iter().zip(&b.bin_means).filter(|(w, _)| **w > 0.0).map(|(w, m)| (*w, *m)).collect();
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let above = |t: f64| support.iter().filter(|(_, m)| *m >= t).count();
    let below = |t: f64| support.iter().filter(|(_, m)| *m <= t).count();
    let mut out = Vec::new();

    let mut seen = Vec::new();
    for &t in &grid {
        let k = above(t);
        if !seen.contains(&k) {
            seen.push(k);
            let label = if above(tau_star) == k { tau_star } else { t };
            out.push(choice(&support, u, Direction::AcceptAbove, label, label, 0.0));
        }
    }
    if fam == Family::AboveOrBelow {
        let mut seen = Vec::new();
        for &t in &grid {
            let k = below(t);
            if !seen.contains(&k) {
                seen.push(k);
                out.push(choice(&support, u, Direction::AcceptBelow, t, t, 0.0));
            }
        }
    }
    if fam == Family::AboveOrBand {
        let mut seen = Vec::new();
        for (i, &lo) in grid.iter().enumerate() {
            for &hi in &grid[i + 1..] {
                let sure = above(hi);
                let band = above(lo) - sure;
                if band == 0 || seen.contains(&(sure, band)) {
                    continue;
                }
                seen.push((sure, band));
                for k in 1..n {
                    out.push(choice(&support, u, Direction::AcceptAbove, lo, hi, k as f64 / n as f64));
                }
            }
        }
    }
    out
}

/// How a tuple is judged feasible.
#[derive(Clone, Copy)]
enum Rule {
    /// Spread of each listed rate at most epsilon.
    Gap(&'static [GapKind]),
    /// One grid target per listed rate, each cell within epsilon / 2 of it.
    Target(&'static [GapKind]),
}

struct Problem {
    cells: Vec<Vec<Choice>>,
    weights: Vec<f64>,
    base_rates: Vec<f64>,
    rule: Rule,
    criterion: Criterion,
    eps: f64,
    n: usize,
}

fn required_direction(c: Criterion, v: f64, base_rate: f64) -> Option<Direction> {
    match c {
        Criterion::PredictiveParity => Some(if v >= base_rate { Direction::AcceptAbove } else { Direction::AcceptBelow }),
        Criterion::ForParity => Some(if v <= base_rate { Direction::AcceptAbove } else { Direction::AcceptBelow }),
        _ => None,
    }
}

impl Problem {
    /// Lowest grid target serving every chosen cell in `kind`, if any.
    fn target(&self, chosen: &[(usize, &Choice)], kind: GapKind) -> Option<f64> {
        let half = self.eps / 2.0 + SLACK;
        let mut rates = Vec::with_capacity(chosen.len());
        for (_, c) in chosen {
            rates.push(c.rate(kind)?);
        }
        let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let n = self.n as f64;
        let first = (((hi - half) * n).floor() - 1.0).max(0.0) as usize;
        let last = (((lo + half) * n).ceil() + 1.0).min(n) as usize;
        (first..=last).map(|k| k as f64 / n).find(|&v| {
            chosen.iter().zip(&rates).all(|((cell, c), r)| {
                (r - v).abs() <= half
                    && required_direction(self.criterion, v, self.base_rates[*cell]).is_none_or(|d| d == c.direction)
            })
        })
    }

    fn feasible(&self, chosen: &[(usize, &Choice)]) -> Option<Vec<f64>> {
        match self.rule {
            Rule::Gap(kinds) => {
                for &k in kinds {
                    let rates: Vec<f64> = chosen.iter().filter_map(|(_, c)| c.rate(k)).collect();
                    for a in &rates {
                        for b in &rates {
                            if (a - b).abs() > self.eps + SLACK {
                                return None;
                            }
                        }
                    }
                }
                Some(Vec::new())
            }
            Rule::Target(kinds) => kinds.iter().map(|&k| self.target(chosen, k)).collect(),
        }
    }

    /// Rate used to window the last cell, and the window half-width.
    fn window(&self, last: usize) -> Option<(GapKind, f64)> {
        match self.rule {
            Rule::Gap(kinds) => kinds
                .iter()
                .copied()
                .find(|&k| self.cells[last].first().is_some_and(|c| c.rate(k).is_some()))
                .map(|k| (k, self.eps + SLACK)),
            Rule::Target(kinds) => Some((kinds[0], self.eps + 2.0 * SLACK)),
        }
    }
}

struct Best {
    picks: Vec<usize>,
    total: f64,
    spread: f64,
    targets: Vec<f64>,
}

fn spread(chosen: &[&Choice]) -> f64 {
    let mut s: f64 = 0.0;
    for a in chosen {
        for b in chosen {
            s = s.max((a.lo - b.lo).abs()).max((a.hi - b.hi).abs());
        }
    }
    s
}

fn better(total: f64, sp: f64, picks: &[&Choice], best: &Option<Best>, cells: &[Vec<Choice>]) -> bool {
    let Some(b) = best else { return true };
    if total != b.total {
        return total > b.total;
    }
    if sp != b.spread {
        return sp < b.spread;
    }
    let theirs: Vec<&Choice> = b.picks.iter().enumerate().map(|(c, &i)| &cells[c][i]).collect();
    for (x, y) in picks.iter().zip(&theirs) {
        match key_cmp(x, y) {
            Ordering::Equal => continue,
            o => return o == Ordering::Less,
        }
    }
    false
}

fn solve(p: &Problem) -> Option<Best> {
    let cells = p.cells.len();
    let orders: Vec<Vec<usize>> = p
        .cells
        .iter()
        .map(|cs| {
            let mut o: Vec<usize> = (0..cs.len()).collect();
            o.sort_by(|&a, &b| {
                cs[b].utility.partial_cmp(&cs[a].utility).unwrap_or(Ordering::Equal).then(key_cmp(&cs[a], &cs[b]))
            });
            o
        })
        .collect();
    let last = cells - 1;
    let window = p.window(last);
    // last cell sorted by the windowed rate, undefined rates dropped
    let mut by_rate: Vec<(f64, usize)> = match window {
        Some((k, _)) => p.cells[last].iter().enumerate().filter_map(|(i, c)| c.rate(k).map(|r| (r, i))).collect(),
        None => p.cells[last].iter().enumerate().map(|(i, _)| (0.0, i)).collect(),
    };
    by_rate.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let top: Vec<f64> = orders.iter().zip(&p.cells).map(|(o, cs)| cs[o[0]].utility).collect();

    let mut best: Option<Best> = None;
    let mut stack: Vec<usize> = Vec::with_capacity(cells);
    #[allow(clippy::too_many_arguments)]
    fn rec(
        p: &Problem,
        level: usize,
        partial: f64,
        stack: &mut Vec<usize>,
        orders: &[Vec<usize>],
        by_rate: &[(f64, usize)],
        window: Option<(GapKind, f64)>,
        top: &[f64],
        best: &mut Option<Best>,
    ) {
        let last = p.cells.len() - 1;
        let rest: f64 = (level + 1..p.cells.len()).map(|c| p.weights[c] * top[c]).sum();
        let chosen = |stack: &[usize]| -> Vec<(usize, &Choice)> {
            stack.iter().enumerate().map(|(c, &i)| (c, &p.cells[c][i])).collect()
        };
        if level < last {
            for &i in &orders[level] {
                let gain = p.weights[level] * p.cells[level][i].utility;
                if let Some(b) = best {
                    if partial + gain + rest + 1e-12 * (1.0 + b.total.abs()) < b.total {
                        break;
                    }
                }
                stack.push(i);
                if p.feasible(&chosen(stack)).is_some() {
                    rec(p, level + 1, partial + gain, stack, orders, by_rate, window, top, best);
                }
                stack.pop();
            }
            return;
        }
        let range = match window {
            Some((k, width)) => {
                let rates: Vec<f64> = chosen(stack).iter().filter_map(|(_, c)| c.rate(k)).collect();
                if rates.is_empty() {
                    (0, by_rate.len())
                } else {
                    let lo = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max) - width;
                    let hi = rates.iter().copied().fold(f64::INFINITY, f64::min) + width;
                    (by_rate.partition_point(|r| r.0 < lo), by_rate.partition_point(|r| r.0 <= hi))
                }
            }
            None => (0, by_rate.len()),
        };
        for &(_, i) in &by_rate[range.0..range.1.max(range.0)] {
            stack.push(i);
            let ch = chosen(stack);
            if let Some(targets) = p.feasible(&ch) {
                let total = ch.iter().fold(0.0, |acc, (c, x)| acc + p.weights[*c] * x.utility);
                let refs: Vec<&Choice> = ch.iter().map(|(_, x)| *x).collect();
                let sp = spread(&refs);
                if better(total, sp, &refs, best, &p.cells) {
                    *best = Some(Best { picks: stack.clone(), total, spread: sp, targets });
                }
            }
            stack.pop();
        }
    }
    rec(p, 0, 0.0, &mut stack, &orders, &by_rate, window, &top, &mut best);
    best
}

fn criterion_rule(c: Criterion) -> Rule {
    match c {
        Criterion::Independence => Rule::Gap(&[GapKind::Acceptance]),
        Criterion::ConditionalStatisticalParity => Rule::Gap(&[GapKind::ConditionalAcceptance]),
        Criterion::EqualOpportunity => Rule::Gap(&[GapKind::Tpr]),
        Criterion::PredictiveEquality => Rule::Gap(&[GapKind::Fpr]),
        Criterion::EqualizedOdds => Rule::Gap(&[GapKind::Tpr, GapKind::Fpr]),
        Criterion::PredictiveParity => Rule::Target(&[GapKind::Ppv]),
        Criterion::ForParity => Rule::Target(&[GapKind::For]),
        Criterion::Sufficiency => Rule::Target(&[GapKind::Ppv, GapKind::For]),
    }
}

/// Utility-maximal rule on the grid meeting `constraint` under the baselines.
///
/// Feasibility follows the optimizer's definitions: gap criteria bound the
/// spread of each rate by epsilon; predictive parity, FOR parity and
/// sufficiency require a common grid target within epsilon / 2 of every cell.
pub fn brute_force_optimum(
    baselines: &[BaselineDistribution],
    weights: &BTreeMap<CellKey, f64>,
    u: &UtilityParams,
    constraint: &FairnessConstraint,
    resolution: f64,
) -> Result<OracleOptimum, OracleError> {
    let n = (1.0 / resolution).round() as usize;
    if !(0.001..=0.1 + 1e-12).contains(&resolution) || ((n as f64) * resolution - 1.0).abs() > 1e-6 {
        return Err(OracleError::Resolution(resolution));
    }
    if u.alpha + u.beta <= 0.0 {
        return Err(OracleError::Utility);
    }
    let tau_star = ((u.beta + u.gamma) / (u.alpha + u.beta)).clamp(0.0, 1.0);
    let eps = constraint.epsilon;
    let criterion = constraint.criterion;

    // cells grouped by the stratum they are compared within
    let mut blocks: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
    for (i, b) in baselines.iter().enumerate() {
        let csp = criterion == Criterion::ConditionalStatisticalParity;
        if csp != b.stratum.is_some() {
            return Err(OracleError::Stratification(b.cell()));
        }
        blocks.entry(b.stratum.clone()).or_default().push(i);
    }

    let mut rules = Vec::new();
    let mut utility = 0.0;
    let mut targets = Vec::new();
    for cells in blocks.values() {
        if cells.len() > 3 {
            return Err(OracleError::TooManyCells(cells.len()));
        }
        let fam = if eps >= 1.0 { Family::Above } else { family(criterion) };
        let choices: Vec<Vec<Choice>> =
            cells.iter().map(|&i| enumerate(&baselines[i], u, fam, n, tau_star)).collect();
        let w: Vec<f64> = cells.iter().map(|&i| weights[&baselines[i].cell()]).collect();
        let picks: Vec<Choice> = if eps >= 1.0 {
            // any tuple is feasible; the unconstrained threshold is kept as is
            cells
                .iter()
                .map(|&i| {
                    let support: Vec<(f64, f64)> = baselines[i]
                        .mass
                        .iter()
                        .zip(&baselines[i].bin_means)
                        .filter(|(w, _)| **w > 0.0)
                        .map(|(w, m)| (*w, *m))
                        .collect();
                    choice(&support, u, Direction::AcceptAbove, tau_star, tau_star, 0.0)
                })
                .collect()
        } else {
            let p = Problem {
                cells: choices,
                weights: w.clone(),
                base_rates: cells.iter().map(|&i| baselines[i].base_rate).collect(),
                rule: criterion_rule(criterion),
                criterion,
                eps,
                n,
            };
            let best = solve(&p).ok_or(OracleError::Infeasible)?;
            targets.extend(best.targets.iter().copied());
            best.picks.iter().enumerate().map(|(c, &i)| p.cells[c][i]).collect()
        };
        for ((&i, c), wt) in cells.iter().zip(&picks).zip(&w) {
            utility += wt * c.utility;
            let cell = baselines[i].cell();
            rules.push(CellRule {
                group: cell.group,
                stratum: cell.stratum,
                direction: c.direction,
                tau_lo: c.lo,
                tau_hi: c.hi,
                mix: c.mix,
            });
        }
    }
    rules.sort_by_key(|r| r.cell());
    Ok(OracleOptimum { rule: DecisionRule { cells: rules }, utility, targets })
}

/// Non-degenerate deterministic accept-above threshold pairs on the grid whose
/// rate spreads in every listed component stay within `eps`.
///
/// A pair is degenerate when either group accepts everyone or no one.
pub fn threshold_pairs_within(
    a: &BaselineDistribution,
    b: &BaselineDistribution,
    resolution: f64,
    eps: f64,
    kinds: &[GapKind],
) -> Vec<(f64, f64)> {
    let n = (1.0 / resolution).round() as usize;
    let u = UtilityParams { alpha: 1.0, beta: 0.0, gamma: 0.0 };
    let support = |x: &BaselineDistribution| -> Vec<(f64, f64)> {
        x.mass.iter().zip(&x.bin_means).filter(|(w, _)| **w > 0.0).map(|(w, m)| (*w, *m)).collect()
    };
    let (sa, sb) = (support(a), support(b));
    let eval = |s: &[(f64, f64)]| -> Vec<Choice> {
        (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                choice(s, &u, Direction::AcceptAbove, t, t, 0.0)
            })
            .collect()
    };
    let (ca, cb) = (eval(&sa), eval(&sb));
    let proper = |c: &Choice| c.accepted > 0.0 && c.rejected > 0.0;
    let mut out = Vec::new();
    for x in ca.iter().filter(|c| proper(c)) {
        for y in cb.iter().filter(|c| proper(c)) {
            let ok = kinds.iter().all(|&k| match (x.rate(k), y.rate(k)) {
                (Some(p), Some(q)) => (p - q).abs() <= eps + SLACK,
                _ => false,
            });
            if ok {
                out.push((x.lo, y.lo));
            }
        }
    }
    out
}
