use fairdecide::exact::Ratio;
use fairdecide::{GapReport, Population};

use super::write_json;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::read_table;

pub struct AuditOutcome {
    pub report: GapReport,
    pub pass: bool,
}

/// Audits the decisions table against the configured constraint.
///
/// Gaps are reported as floats; pass or fail is decided on exact count ratios.
pub fn audit(cfg: &RunConfig) -> Result<AuditOutcome, CliError> {
    let constraint = cfg
        .constraint()?
        .ok_or_else(|| CliError::Schema("config field criterion: an audit needs a criterion".into()))?;
    let required: &[&str] =
        if constraint.criterion.needs_outcomes() { &["decision", "y"] } else { &["decision"] };
    let table = read_table(&cfg.path(&cfg.paths.decisions), required)?;
    let pop = Population::from_instances(table.instances)?;
    let exact = fairdecide::audit::<Ratio, f64>(&pop, &constraint)?;
    let mut report = fairdecide::audit::<f64, f64>(&pop, &constraint)?;
    report.verdict.pass = exact.verdict.pass;
    report.verdict.violated = exact.verdict.violated;
    write_json(&cfg.path(&cfg.paths.audit), &report)?;
    Ok(AuditOutcome { pass: report.verdict.pass, report })
}

pub fn render(out: &AuditOutcome) -> String {
    let v = &out.report.verdict;
    let mut s = format!("{} within {}: {}\n", v.criterion, v.epsilon, if v.pass { "pass" } else { "fail" });
    for (k, g) in &out.report.gaps {
        match g {
            Some(g) => s.push_str(&format!("  {k} gap {g:.6}\n")),
            None => s.push_str(&format!("  {k} gap undefined\n")),
        }
    }
    for w in &out.report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}
