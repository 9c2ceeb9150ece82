use std::path::{Path, PathBuf};

use fairdecide::calibration::CalibrationError;
use fairdecide::{BaselineError, DecisionError, MetricsError, PopulationError, ProtocolError};
use thiserror::Error;

/// Process exit codes. Scripts depend on these values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    AuditFail = 1,
    Schema = 2,
    InsufficientData = 3,
    MissingDeliverable = 4,
    Infeasible = 5,
    UnknownGroup = 6,
    MissingArtifact = 7,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    InsufficientData(String),
    #[error("{0}")]
    MissingDeliverable(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    UnknownGroup(String),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// A failure inside one stage of a pipeline run.
    #[error("stage {stage}: {inner}")]
    Stage { stage: &'static str, inner: Box<CliError> },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Schema(_) | CliError::Io { .. } => Exit::Schema,
            CliError::InsufficientData(_) => Exit::InsufficientData,
            CliError::MissingDeliverable(_) => Exit::MissingDeliverable,
            CliError::Infeasible(_) => Exit::Infeasible,
            CliError::UnknownGroup(_) => Exit::UnknownGroup,
            CliError::MissingArtifact(_) => Exit::MissingArtifact,
            CliError::Stage { inner, .. } => inner.exit(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingArtifact(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        CliError::Stage { stage, inner: Box::new(self) }
    }
}

impl From<DecisionError> for CliError {
    fn from(e: DecisionError) -> Self {
        let msg = e.to_string();
        match e {
            DecisionError::MissingDeliverable(_) => CliError::MissingDeliverable(msg),
            DecisionError::Infeasible { .. } => CliError::Infeasible(msg),
            DecisionError::UnknownGroup { .. } => CliError::UnknownGroup(msg),
            _ => CliError::Schema(msg),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::NoLabeledData(_) | CalibrationError::InsufficientData { .. } => {
                CliError::InsufficientData(e.to_string())
            }
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::EmptyGroup(_) => CliError::InsufficientData(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Missing(_) => CliError::MissingDeliverable(e.to_string()),
            ProtocolError::SchemaVersion(_) => CliError::Schema(e.to_string()),
            _ => CliError::InsufficientData(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::MissingOutcome { .. } => CliError::Schema(format!("column y: {e}")),
            MetricsError::MissingDecision { .. } => CliError::Schema(format!("column decision: {e}")),
            MetricsError::MissingStratum { .. } => CliError::Schema(format!("column stratum: {e}")),
            MetricsError::EmptyGroup { .. } => CliError::InsufficientData(e.to_string()),
        }
    }
}

impl From<PopulationError> for CliError {
    fn from(e: PopulationError) -> Self {
        CliError::Schema(e.to_string())
    }
}
