//! Run configuration: one TOML document, overridable from the command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fairdecide::protocol::TargetDefinition;
use fairdecide::{BundleMode, Criterion, FairnessConstraint, UtilityParams, DEFAULT_RESOLUTION};
use fairdecide_testkit::GroupSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every other path is relative to this directory.
    pub run_dir: PathBuf,
    pub mode: BundleMode,
    pub criterion: Option<Criterion>,
    pub epsilon: f64,
    pub strata: Option<BTreeSet<String>>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub calibration_bins: usize,
    pub baseline_bins: usize,
    pub resolution: f64,
    pub seed: u64,
    /// Tolerances swept by `report` and `simulate`.
    pub sweep: Vec<f64>,
    pub paths: Paths,
    pub task: TaskConfig,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_dir: PathBuf::from("."),
            mode: BundleMode::Unconstrained,
            criterion: None,
            epsilon: 0.0,
            strata: None,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            calibration_bins: 10,
            baseline_bins: 100,
            resolution: DEFAULT_RESOLUTION,
            seed: 0,
            sweep: vec![0.0, 0.01, 0.05, 0.1, 1.0],
            paths: Paths::default(),
            task: TaskConfig::default(),
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scored: PathBuf,
    pub calibrated: PathBuf,
    pub calibration_dir: PathBuf,
    pub calibration_report: PathBuf,
    pub bundle: PathBuf,
    pub result: PathBuf,
    pub rule: PathBuf,
    pub decisions: PathBuf,
    pub audit: PathBuf,
    pub curves_dir: PathBuf,
    pub simulation: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            scored: "scored.csv".into(),
            calibrated: "calibrated.csv".into(),
            calibration_dir: "calibration".into(),
            calibration_report: "calibration_report.json".into(),
            bundle: "bundle.json".into(),
            result: "result.json".into(),
            rule: "rule.json".into(),
            decisions: "decisions.csv".into(),
            audit: "audit.json".into(),
            curves_dir: "curves".into(),
            simulation: "simulation.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub target: String,
    pub positive_outcome: String,
    pub sensitive_attribute: String,
    pub population_note: String,
    pub model_name: String,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            target: "binary outcome".into(),
            positive_outcome: "y = 1".into(),
            sensitive_attribute: "group".into(),
            population_note: String::new(),
            model_name: "scores".into(),
        }
    }
}

impl TaskConfig {
    pub fn target_definition(&self) -> TargetDefinition {
        TargetDefinition { description: self.target.clone(), positive_outcome: self.positive_outcome.clone() }
    }
}

/// Groups of a synthetic population; the seed comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub groups: Vec<GroupSpec>,
}

/// Command-line values that replace file values when given.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run directory holding all inputs and outputs
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// unconstrained or fairness
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<BundleMode>,
    #[arg(long, global = true)]
    pub criterion: Option<Criterion>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Comma-separated legitimate strata for conditional statistical parity
    #[arg(long, global = true, value_delimiter = ',')]
    pub strata: Option<Vec<String>>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub calibration_bins: Option<usize>,
    #[arg(long, global = true)]
    pub baseline_bins: Option<usize>,
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn parse_mode(s: &str) -> Result<BundleMode, String> {
    match s {
        "unconstrained" => Ok(BundleMode::Unconstrained),
        "fairness" => Ok(BundleMode::Fairness),
        _ => Err(format!("unknown mode {s:?}; expected unconstrained or fairness")),
    }
}

impl RunConfig {
    /// Reads `path` (defaults when absent) and applies `o`. A relative
    /// `run_dir` from the file is taken relative to the file.
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?;
                if cfg.run_dir.is_relative() {
                    cfg.run_dir = p.parent().unwrap_or(Path::new(".")).join(&cfg.run_dir);
                }
                cfg
            }
            None => RunConfig::default(),
        };
        cfg.apply(o);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.run_dir {
            self.run_dir = v.clone();
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if let Some(v) = o.criterion {
            self.criterion = Some(v);
        }
        if let Some(v) = &o.strata {
            self.strata = Some(v.iter().cloned().collect());
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { self.$f = v; })* };
        }
        set!(epsilon, alpha, beta, gamma, calibration_bins, baseline_bins, resolution, seed);
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::Schema(format!("config field {field}: {why}")));
        if self.calibration_bins == 0 {
            return bad("calibration_bins", "must be at least 1".into());
        }
        if self.baseline_bins == 0 {
            return bad("baseline_bins", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", format!("{} outside [0, 1]", self.epsilon));
        }
        if let Some(e) = self.sweep.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad("sweep", format!("{e} outside [0, 1]"));
        }
        if let Err(e) = self.utility() {
            return bad("alpha/beta/gamma", e.to_string());
        }
        if self.criterion.is_some() {
            self.constraint()?;
        }
        Ok(())
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.run_dir.join(p)
    }

    pub fn utility(&self) -> Result<UtilityParams, fairdecide::DecisionError> {
        let u = UtilityParams::new(self.alpha, self.beta, self.gamma)?;
        fairdecide::optimal_unconstrained_threshold(&u)?;
        Ok(u)
    }

    /// The configured constraint at the configured tolerance, if any.
    pub fn constraint(&self) -> Result<Option<FairnessConstraint>, CliError> {
        self.constraint_at(self.epsilon)
    }

    pub fn constraint_at(&self, epsilon: f64) -> Result<Option<FairnessConstraint>, CliError> {
        let Some(c) = self.criterion else { return Ok(None) };
        let strata = if c == Criterion::ConditionalStatisticalParity { self.strata.clone() } else { None };
        FairnessConstraint::new(c, epsilon, strata)
            .map(Some)
            .map_err(|e| CliError::Schema(format!("config field criterion: {e}")))
    }
}
