//! Metrics, experiment runners and timing.

mod bench;
mod experiment;
mod metrics;

pub use bench::{bench_inference, TimingReport};
pub use experiment::{
    classify_all, evaluate_artifacts, ratio_sweep, run_kddtest_experiment, run_split_experiment,
    AblationReport, ExperimentOutput, RatioPoint, SplitReport, SplitSizes,
};
pub use metrics::{confusion, metrics, CategoryRecall, Confusion, MetricReport, Metrics};

use thiserror::Error;

use crate::calibrate::CalibrateError;
use crate::detect::DetectError;
use crate::nn::{ModelError, TrainError};
use crate::pipeline::SplitError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predicted} predictions but {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("anomaly ratio must be a positive percentage, got {0}")]
    InvalidRatio(u32),
    #[error("ratio {ratio}% needs {needed} anomalies but only {available} are available")]
    InsufficientAnomalies { ratio: u32, needed: usize, available: usize },
    #[error("no flows to evaluate")]
    NoFlows,
    #[error("at least 3 repetitions required, got {0}")]
    Repetitions(usize),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
