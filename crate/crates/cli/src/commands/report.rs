use fairdecide::{expected_rate_curves, Direction, DeliverableBundle, ThresholdGrid};
use serde::{Deserialize, Serialize};

use super::optimize::{baselines, optimize_at};
use super::{file_stem, read_json};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    /// `None` when no rule on the grid is feasible.
    pub utility: Option<f64>,
}

/// Constrained utility at each configured tolerance.
pub fn sweep(cfg: &RunConfig, bundle: &DeliverableBundle) -> Result<Vec<SweepPoint>, CliError> {
    let mut out = Vec::new();
    for &epsilon in &cfg.sweep {
        let c = cfg.constraint_at(epsilon)?;
        let utility = match optimize_at(cfg, bundle, c.as_ref()) {
            Ok(o) => Some(o.result.expected_utility_per_capita),
            Err(CliError::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        out.push(SweepPoint { epsilon, utility });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Writes plot-ready tables: utility against tolerance, and the expected
/// accept-above rates of every baseline cell against the threshold.
pub fn report(cfg: &RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let bundle: DeliverableBundle = read_json(&cfg.path(&cfg.paths.bundle))?;
    let dir = cfg.path(&cfg.paths.curves_dir);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut written = Vec::new();

    if cfg.criterion.is_some() {
        let constraint = cfg.constraint()?;
        fairdecide::require_deliverables(&bundle, constraint.as_ref())?;
        let mut text = String::from("epsilon,utility,feasible\n");
        for p in sweep(cfg, &bundle)? {
            text.push_str(&format!("{},{},{}\n", p.epsilon, opt(p.utility), p.utility.is_some()));
        }
        let path = dir.join("epsilon_sweep.csv");
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }

    let grid = ThresholdGrid::from_resolution(cfg.resolution)?;
    let mut cells = baselines(cfg, &bundle, None)?;
    cells.extend(bundle.baselines.iter().filter(|b| b.stratum.is_some()).cloned());
    for b in &cells {
        let mut text = String::from("tau,acceptance,tpr,fpr,ppv,for\n");
        for tau in grid.values::<f64>() {
            let r = expected_rate_curves(b, tau, Direction::AcceptAbove);
            text.push_str(&format!(
                "{tau},{},{},{},{},{}\n",
                r.acceptance,
                opt(r.tpr),
                opt(r.fpr),
                opt(r.ppv),
                opt(r.for_rate)
            ));
        }
        let path = dir.join(format!("rates_{}.csv", file_stem(&b.cell().to_string())));
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
