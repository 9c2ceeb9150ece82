use fairdecide::seed::stage_seed;
use fairdecide::{apply_rule, DecisionRule, LabeledInstance};

use super::read_json;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{read_table, write_table};

/// Adds a decision column to the calibrated table.
pub fn apply(cfg: &RunConfig) -> Result<Vec<LabeledInstance>, CliError> {
    let rule: DecisionRule = read_json(&cfg.path(&cfg.paths.rule))?;
    let table = read_table(&cfg.path(&cfg.paths.calibrated), &["p_hat"])?;
    let decided = apply_rule(&rule, &table.instances, stage_seed(cfg.seed, "apply"))?;
    write_table(&cfg.path(&cfg.paths.decisions), &decided)?;
    Ok(decided)
}
