//! Exchange documents between the decision-maker and the prediction-modeler.
//!
//! The decision-maker sends a [`TaskSpec`]; the prediction-modeler answers
//! with a [`DeliverableBundle`]. [`validate_bundle`] checks that a bundle holds
//! every deliverable the intended optimization needs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselineDistribution;
use crate::calibration::{CalibrationFunction, CalibrationReport, GroupScope};
use crate::decision::DecisionError;
use crate::instance::{GroupId, LabeledInstance};
use crate::metrics::{Criterion, FairnessConstraint};
use crate::num::Real;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleMode {
    Unconstrained,
    Fairness,
}

/// Items a prediction-modeler may owe the decision-maker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deliverable {
    PredictionModel,
    ModelPerformance,
    CalibrationFunction,
    GroupCalibrationFunctions,
    GroupBaselineDistributions,
}

impl Deliverable {
    pub fn name(self) -> &'static str {
        match self {
            Deliverable::PredictionModel => "prediction model",
            Deliverable::ModelPerformance => "prediction model performance",
            Deliverable::CalibrationFunction => "calibration function",
            Deliverable::GroupCalibrationFunctions => "group-specific calibration functions",
            Deliverable::GroupBaselineDistributions => "group-specific baseline distributions",
        }
    }

    /// Minimum deliverables for a mode.
    pub fn required(mode: BundleMode) -> &'static [Deliverable] {
        use Deliverable::*;
        match mode {
            BundleMode::Unconstrained => &[PredictionModel, ModelPerformance, CalibrationFunction],
            BundleMode::Fairness => &[
                PredictionModel,
                ModelPerformance,
                GroupCalibrationFunctions,
                GroupBaselineDistributions,
            ],
        }
    }
}

impl fmt::Display for Deliverable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDefinition {
    pub description: String,
    /// What `y = 1` means; `y = 0` is its complement.
    pub positive_outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveAttribute {
    pub name: String,
    pub groups: BTreeSet<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub schema_version: u32,
    pub mode: BundleMode,
    pub target: TargetDefinition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitive_attribute: Option<SensitiveAttribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legitimate_strata: Option<BTreeSet<String>>,
    #[serde(default)]
    pub population_note: String,
}

impl TaskSpec {
    pub fn groups(&self) -> Option<&BTreeSet<GroupId>> {
        self.sensitive_attribute.as_ref().map(|a| &a.groups)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("fairness mode needs the sensitive attribute and its groups")]
    MissingSensitiveAttribute,
    #[error("fairness mode needs at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {group} has no {deliverable}")]
    GroupCoverage { group: GroupId, deliverable: Deliverable },
    #[error("{0} missing")]
    Missing(Deliverable),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
}

pub fn build_task_spec(
    mode: BundleMode,
    target: TargetDefinition,
    sensitive_attribute: Option<SensitiveAttribute>,
    legitimate_strata: Option<BTreeSet<String>>,
    population_note: impl Into<String>,
) -> Result<TaskSpec, ProtocolError> {
    if mode == BundleMode::Fairness {
        let attr = sensitive_attribute.as_ref().ok_or(ProtocolError::MissingSensitiveAttribute)?;
        if attr.groups.len() < 2 {
            return Err(ProtocolError::TooFewGroups(attr.groups.len()));
        }
    }
    Ok(TaskSpec {
        schema_version: SCHEMA_VERSION,
        mode,
        target,
        sensitive_attribute,
        legitimate_strata,
        population_note: population_note.into(),
    })
}

/// Describes the model behind the scores; the model itself stays with its owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    /// Column of the scored table that holds the raw model score.
    pub score_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Performance<T = f64> {
    /// Accuracy of accepting exactly when the calibrated probability is at least 1/2.
    pub accuracy_at_half: Option<T>,
    pub roc_auc: Option<T>,
    pub calibration: Vec<CalibrationReport<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub estimation_set: String,
    pub instance_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DeliverableBundle<T = f64> {
    pub schema_version: u32,
    pub bundle_mode: BundleMode,
    pub task: TaskSpec,
    /// Path of the scored instance table, relative to the bundle.
    pub scored_data_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<Performance<T>>,
    #[serde(default)]
    pub calibration: Vec<CalibrationFunction<T>>,
    #[serde(default)]
    pub baselines: Vec<BaselineDistribution<T>>,
    pub provenance: Provenance,
    /// Reserved for deliverables of criteria not covered by this schema version.
    #[serde(default)]
    pub extensions: BTreeMap<String, String>,
}

impl<T: Real> DeliverableBundle<T> {
    pub fn calibration_for(&self, group: &GroupId) -> Option<&CalibrationFunction<T>> {
        self.calibration
            .iter()
            .find(|f| matches!(&f.group_scope, GroupScope::Group(g) if g == group))
            .or_else(|| self.calibration.iter().find(|f| f.group_scope == GroupScope::Global))
    }

    /// Groups known to the bundle: declared ones, else those with group-specific artifacts.
    pub fn groups(&self) -> BTreeSet<GroupId> {
        if let Some(g) = self.task.groups() {
            return g.clone();
        }
        let mut out: BTreeSet<GroupId> = self.baselines.iter().map(|b| b.group.clone()).collect();
        for f in &self.calibration {
            if let GroupScope::Group(g) = &f.group_scope {
                out.insert(g.clone());
            }
        }
        out
    }
}

pub struct BundleParts<T> {
    pub scored_data_ref: String,
    pub model: ModelDescriptor,
    pub performance: Performance<T>,
    pub calibration: Vec<CalibrationFunction<T>>,
    pub baselines: Vec<BaselineDistribution<T>>,
    pub provenance: Provenance,
}

pub fn assemble_bundle<T: Real>(
    task: &TaskSpec,
    parts: BundleParts<T>,
) -> Result<DeliverableBundle<T>, ProtocolError> {
    match task.mode {
        BundleMode::Fairness => {
            let groups = task.groups().ok_or(ProtocolError::MissingSensitiveAttribute)?;
            for g in groups {
                let scoped = GroupScope::Group(g.clone());
                if !parts.calibration.iter().any(|f| f.group_scope == scoped) {
                    return Err(ProtocolError::GroupCoverage {
                        group: g.clone(),
                        deliverable: Deliverable::GroupCalibrationFunctions,
                    });
                }
                if !parts.baselines.iter().any(|b| &b.group == g) {
                    return Err(ProtocolError::GroupCoverage {
                        group: g.clone(),
                        deliverable: Deliverable::GroupBaselineDistributions,
                    });
                }
            }
        }
        BundleMode::Unconstrained => {
            if parts.calibration.is_empty() {
                return Err(ProtocolError::Missing(Deliverable::CalibrationFunction));
            }
        }
    }
    Ok(DeliverableBundle {
        schema_version: SCHEMA_VERSION,
        bundle_mode: task.mode,
        task: task.clone(),
        scored_data_ref: parts.scored_data_ref,
        model: Some(parts.model),
        performance: Some(parts.performance),
        calibration: parts.calibration,
        baselines: parts.baselines,
        provenance: parts.provenance,
        extensions: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub missing: Vec<String>,
    pub warnings: Vec<String>,
}

/// Checks the bundle against the deliverables its intended use requires.
pub fn validate_bundle<T: Real>(
    bundle: &DeliverableBundle<T>,
    intent: Option<&FairnessConstraint<T>>,
) -> ValidationReport {
    let mut missing = BTreeSet::new();
    let mut warnings = Vec::new();
    if bundle.schema_version != SCHEMA_VERSION {
        warnings.push(format!("schema version {} differs from {}", bundle.schema_version, SCHEMA_VERSION));
    }
    if bundle.model.is_none() {
        missing.insert(Deliverable::PredictionModel);
    }
    if bundle.performance.is_none() {
        missing.insert(Deliverable::ModelPerformance);
    }
    match intent {
        None => {
            if bundle.calibration.is_empty() {
                missing.insert(Deliverable::CalibrationFunction);
            }
        }
        Some(c) => {
            let groups = bundle.groups();
            if bundle.task.sensitive_attribute.is_none() {
                warnings.push("task declares no sensitive attribute; groups taken from the bundle".into());
            }
            if groups.len() < 2 {
                warnings.push(format!("{} group(s) known; fairness constraints compare at least two", groups.len()));
            }
            let calibrated = |g: &GroupId| {
                bundle.calibration.iter().any(|f| f.group_scope == GroupScope::Group(g.clone()))
            };
            if groups.is_empty() || !groups.iter().all(calibrated) {
                missing.insert(Deliverable::GroupCalibrationFunctions);
            }
            let strata: Option<&BTreeSet<String>> = match c.criterion {
                Criterion::ConditionalStatisticalParity => c.strata.as_ref(),
                _ => None,
            };
            let covered = |g: &GroupId| match strata {
                None => bundle.baselines.iter().any(|b| &b.group == g && b.stratum.is_none()),
                Some(ss) => ss.iter().all(|s| {
                    bundle.baselines.iter().any(|b| &b.group == g && b.stratum.as_ref() == Some(s))
                }),
            };
            if groups.is_empty() || !groups.iter().all(covered) {
                missing.insert(Deliverable::GroupBaselineDistributions);
            }
        }
    }
    let missing: Vec<String> = missing.into_iter().map(|d| d.name().to_owned()).collect();
    ValidationReport { valid: missing.is_empty(), missing, warnings }
}

/// Refuses to proceed unless the bundle supports the intended optimization.
pub fn require_deliverables<T: Real>(
    bundle: &DeliverableBundle<T>,
    intent: Option<&FairnessConstraint<T>>,
) -> Result<ValidationReport, DecisionError> {
    let report = validate_bundle(bundle, intent);
    if report.valid {
        Ok(report)
    } else {
        Err(DecisionError::MissingDeliverable(report.missing.clone()))
    }
}

/// Baselines a constrained optimization should use from the bundle.
pub fn baselines_for<T: Real>(
    bundle: &DeliverableBundle<T>,
    constraint: &FairnessConstraint<T>,
) -> Vec<BaselineDistribution<T>> {
    let want_strata = constraint.criterion == Criterion::ConditionalStatisticalParity;
    bundle
        .baselines
        .iter()
        .filter(|b| {
            if want_strata {
                b.stratum.as_ref().is_some_and(|s| constraint.strata.as_ref().is_some_and(|ss| ss.contains(s)))
            } else {
                b.stratum.is_none()
            }
        })
        .cloned()
        .collect()
}

/// Share of labeled, calibrated instances classified correctly by `p >= 1/2`.
pub fn accuracy_at_half<T: Real>(instances: &[LabeledInstance<T>]) -> Option<T> {
    let half = T::lit(0.5);
    let (mut n, mut hit) = (0usize, 0usize);
    for inst in instances {
        if let (Some(y), Some(p)) = (inst.outcome, inst.calibrated_p) {
            n += 1;
            hit += ((p >= half) == y) as usize;
        }
    }
    (n > 0).then(|| T::ratio(hit, n))
}

/// Area under the ROC curve of the raw score; ties count one half.
pub fn roc_auc<T: Real>(instances: &[LabeledInstance<T>]) -> Option<T> {
    let mut scored: Vec<(T, bool)> =
        instances.iter().filter_map(|i| i.outcome.map(|y| (i.raw_score, y))).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // Mann-Whitney: twice the count of (negative, positive) pairs ordered correctly
    let (mut below, mut twice) = (0usize, 0u128);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let p = scored[i..j].iter().filter(|s| s.1).count();
        let n = (j - i) - p;
        twice += (2 * below * p + n * p) as u128;
        below += n;
        i = j;
    }
    Some(T::lit(twice as f64 / (2.0 * pos as f64 * neg as f64)))
}
