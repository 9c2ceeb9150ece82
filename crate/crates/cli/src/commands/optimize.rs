use std::collections::BTreeSet;
use std::fmt::Write as _;

use fairdecide::protocol::baselines_for;
use fairdecide::{
    estimate_baseline, optimize_constrained, optimize_unconstrained, population_shares, require_deliverables,
    BaselineDistribution, CellKey, DeliverableBundle, FairnessConstraint, OptimizationResult,
};
use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::read_table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutput {
    pub result: OptimizationResult,
    /// Utility of the unconstrained rule on the same baselines.
    pub unconstrained_utility: f64,
    /// Unconstrained minus constrained utility.
    pub cost_of_fairness: f64,
}

/// Baselines an optimization under `constraint` runs on.
///
/// Unconstrained bundles carry no baselines; per-group baselines are then
/// estimated from the calibrated table the bundle references.
pub(crate) fn baselines(
    cfg: &RunConfig,
    bundle: &DeliverableBundle,
    constraint: Option<&FairnessConstraint>,
) -> Result<Vec<BaselineDistribution>, CliError> {
    if let Some(c) = constraint {
        return Ok(baselines_for(bundle, c));
    }
    let plain: Vec<_> = bundle.baselines.iter().filter(|b| b.stratum.is_none()).cloned().collect();
    if !plain.is_empty() {
        return Ok(plain);
    }
    let table = read_table(&cfg.path(bundle.scored_data_ref.as_ref()), &["p_hat"])?;
    let groups: BTreeSet<_> = table.instances.iter().map(|i| i.group.clone()).collect();
    groups
        .into_iter()
        .map(|g| estimate_baseline(&table.instances, &CellKey::group(g), cfg.baseline_bins).map_err(CliError::from))
        .collect()
}

/// Optimizes on the bundle at the configured tolerance.
pub fn optimize(cfg: &RunConfig) -> Result<OptimizeOutput, CliError> {
    let bundle: DeliverableBundle = read_json(&cfg.path(&cfg.paths.bundle))?;
    let constraint = cfg.constraint()?;
    require_deliverables(&bundle, constraint.as_ref())?;
    let out = optimize_at(cfg, &bundle, constraint.as_ref())?;
    write_json(&cfg.path(&cfg.paths.result), &out)?;
    write_json(&cfg.path(&cfg.paths.rule), &out.result.rule)?;
    Ok(out)
}

pub(crate) fn optimize_at(
    cfg: &RunConfig,
    bundle: &DeliverableBundle,
    constraint: Option<&FairnessConstraint>,
) -> Result<OptimizeOutput, CliError> {
    let u = cfg.utility()?;
    let bs = baselines(cfg, bundle, constraint)?;
    let w = population_shares(&bs);
    let free = optimize_unconstrained(&bs, &w, &u)?;
    let result = match constraint {
        Some(c) => optimize_constrained(&bs, &w, &u, c, cfg.resolution)?,
        None => free.clone(),
    };
    let unconstrained_utility = free.expected_utility_per_capita;
    Ok(OptimizeOutput {
        cost_of_fairness: unconstrained_utility - result.expected_utility_per_capita,
        unconstrained_utility,
        result,
    })
}

/// Plain-text summary of an optimization.
pub fn render(out: &OptimizeOutput) -> String {
    let r = &out.result;
    let mut s = String::new();
    match &r.constraint {
        Some(c) => writeln!(s, "constraint: {} within {}", c.criterion, c.epsilon),
        None => writeln!(s, "constraint: none"),
    }
    .ok();
    for c in &r.rule.cells {
        let cell = c.cell();
        if c.is_deterministic() {
            writeln!(s, "  {cell}: {:?} tau {}", c.direction, c.tau_lo).ok();
        } else {
            writeln!(s, "  {cell}: {:?} band [{}, {}) accepted with probability {}", c.direction, c.tau_lo, c.tau_hi, c.mix)
                .ok();
        }
    }
    writeln!(s, "expected utility per capita: {:.6}", r.expected_utility_per_capita).ok();
    writeln!(s, "unconstrained utility: {:.6}", out.unconstrained_utility).ok();
    writeln!(s, "cost of fairness: {:.6}", out.cost_of_fairness).ok();
    for (k, g) in &r.achieved_gaps {
        match g {
            Some(g) => writeln!(s, "  {k} gap {g:.6}{}", if r.binding.get(k) == Some(&true) { " (binding)" } else { "" }),
            None => writeln!(s, "  {k} gap undefined"),
        }
        .ok();
    }
    for w in &r.warnings {
        writeln!(s, "warning: {w}").ok();
    }
    s
}
