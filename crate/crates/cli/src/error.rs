use std::fmt;
use std::process::ExitCode;

use cascade_ids::calibrate::CalibrateError;
use cascade_ids::evaluate::EvalError;
use cascade_ids::ingest::IngestError;
use cascade_ids::nn::TrainError;
use cascade_ids::pipeline::{ArtifactError, SplitError};
use cascade_ids::preprocess::PreprocessError;

/// Command failure, bucketed by exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Artifact(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Artifact(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Artifact(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(format!("invalid training configuration: {m}")),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::Config(_) => CliError::Usage(e.to_string()),
            CalibrateError::Model(_) | CalibrateError::Detect(_) => CliError::Artifact(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Artifact(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Split(e) => e.into(),
            EvalError::Preprocess(e) => e.into(),
            EvalError::Train(e) => e.into(),
            EvalError::Calibrate(e) => e.into(),
            EvalError::InvalidRatio(_) | EvalError::Repetitions(_) => CliError::Usage(e.to_string()),
            EvalError::Detect(_) | EvalError::Model(_) => CliError::Artifact(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
