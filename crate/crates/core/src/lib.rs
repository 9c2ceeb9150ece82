//! Utility-optimal post-processing decision rules under group-fairness
//! constraints.
//!
//! The pipeline: calibrate raw scores ([`calibration`]), summarize each group's
//! calibrated probabilities ([`baseline`]), pick a per-group threshold rule
//! that maximizes expected utility subject to a fairness constraint
//! ([`decision`]), apply it, and audit the decisions ([`metrics`]). The
//! [`protocol`] module carries the documents exchanged between the party that
//! builds the scores and the party that decides.
//!
//! Types are generic over the scalar. Frequency metrics accept any
//! [`num::Scalar`], exact rationals included; everything else needs a float.
//! The aliases below fix `f64`, with `f32` variants under [`single`].

pub mod baseline;
pub mod calibration;
pub mod decision;
pub mod instance;
pub mod metrics;
pub mod num;
pub mod protocol;
pub mod seed;

pub use baseline::{
    estimate_baseline, expected_rate_curves, BaseRateSource, BaselineError, Direction, MassSummary,
    DEFAULT_BASELINE_BINS,
};
pub use calibration::{
    apply_calibration, calibration_error, fit_calibration, CalibrationError, GroupScope,
    DEFAULT_CALIBRATION_BINS,
};
pub use decision::{
    apply_rule, evaluate_utility, expected_gaps, optimal_unconstrained_threshold, optimize_constrained,
    optimize_unconstrained, population_shares, DecisionError, SearchTrace, ThresholdGrid, DEFAULT_RESOLUTION,
};
pub use instance::{CellKey, GroupId, PopulationError};
pub use metrics::{
    acceptance_rates, audit, conditional_parity_gap, independence_gap, separation_gaps, sufficiency_gaps,
    ConstraintError, Criterion, Degeneracy, GapKind, MetricsError,
};
pub use protocol::{
    assemble_bundle, build_task_spec, require_deliverables, validate_bundle, BundleMode, Deliverable,
    ProtocolError, TaskSpec, ValidationReport,
};

pub type LabeledInstance = instance::LabeledInstance<f64>;
pub type Population = instance::Population<f64>;
pub type CalibrationFunction = calibration::CalibrationFunction<f64>;
pub type CalibrationReport = calibration::CalibrationReport<f64>;
pub type BaselineDistribution = baseline::BaselineDistribution<f64>;
pub type RateCurves = baseline::RateCurves<f64>;
pub type UtilityParams = decision::UtilityParams<f64>;
pub type CellRule = decision::CellRule<f64>;
pub type DecisionRule = decision::DecisionRule<f64>;
pub type OptimizationResult = decision::OptimizationResult<f64>;
pub type FairnessConstraint = metrics::FairnessConstraint<f64>;
pub type GapReport = metrics::GapReport<f64>;
pub type DeliverableBundle = protocol::DeliverableBundle<f64>;

/// Single-precision aliases.
pub mod single {
    pub type LabeledInstance = crate::instance::LabeledInstance<f32>;
    pub type Population = crate::instance::Population<f32>;
    pub type CalibrationFunction = crate::calibration::CalibrationFunction<f32>;
    pub type BaselineDistribution = crate::baseline::BaselineDistribution<f32>;
    pub type UtilityParams = crate::decision::UtilityParams<f32>;
    pub type DecisionRule = crate::decision::DecisionRule<f32>;
    pub type OptimizationResult = crate::decision::OptimizationResult<f32>;
    pub type FairnessConstraint = crate::metrics::FairnessConstraint<f32>;
}

/// Exact-rational aliases for frequency metrics.
pub mod exact {
    pub type Ratio = num_rational::Ratio<i64>;
}
