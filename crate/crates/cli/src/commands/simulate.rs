use std::collections::BTreeMap;

use fairdecide::seed::stage_seed;
use fairdecide::{DecisionRule, GapKind, GapReport};
use fairdecide_testkit::{generate_population, SyntheticSpec, GENERATOR};
use serde::Serialize;

use super::{apply, audit, calibrate, optimize, sweep, write_json, SweepPoint};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::write_table;

/// Combined outcome of a simulated pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub generator: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub group_sizes: BTreeMap<String, usize>,
    pub calibration_error: BTreeMap<String, f64>,
    pub rule: DecisionRule,
    pub expected_utility_per_capita: f64,
    pub unconstrained_utility: f64,
    pub cost_of_fairness: f64,
    pub expected_gaps: BTreeMap<GapKind, Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<GapReport>,
    pub sweep: Vec<SweepPoint>,
}

/// Generates a population and runs calibrate, optimize, apply and audit on it.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationReport, CliError> {
    let synthetic = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Schema("config field synthetic: simulate needs a synthetic population".into()))?;
    let stage = |name: &'static str| move |e: CliError| e.in_stage(name);

    let generate_seed = stage_seed(cfg.seed, "generate");
    let spec = SyntheticSpec { groups: synthetic.groups.clone(), seed: generate_seed };
    let pop = generate_population(&spec).map_err(|e| CliError::Schema(e.to_string())).map_err(stage("generate"))?;
    write_table(&cfg.path(&cfg.paths.scored), &pop.instances).map_err(stage("generate"))?;

    let cal = calibrate(cfg).map_err(stage("calibrate"))?;
    let opt = optimize(cfg).map_err(stage("optimize"))?;
    apply(cfg).map_err(stage("apply"))?;
    let audited = match cfg.criterion {
        Some(_) => Some(audit(cfg).map_err(stage("audit"))?.report),
        None => None,
    };
    let sweep = match cfg.criterion {
        Some(_) => sweep(cfg, &cal.bundle).map_err(stage("sweep"))?,
        None => Vec::new(),
    };

    let report = SimulationReport {
        generator: GENERATOR.to_string(),
        seed: cfg.seed,
        stage_seeds: [("generate", generate_seed), ("apply", stage_seed(cfg.seed, "apply"))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        group_sizes: synthetic.groups.iter().map(|g| (g.name.clone(), g.size)).collect(),
        calibration_error: cal
            .reports
            .iter()
            .map(|r| (r.group_scope.to_string(), r.expected_calibration_error))
            .collect(),
        rule: opt.result.rule.clone(),
        expected_utility_per_capita: opt.result.expected_utility_per_capita,
        unconstrained_utility: opt.unconstrained_utility,
        cost_of_fairness: opt.cost_of_fairness,
        expected_gaps: opt.result.achieved_gaps.clone(),
        audit: audited,
        sweep,
    };
    write_json(&cfg.path(&cfg.paths.simulation), &report)?;
    Ok(report)
}
