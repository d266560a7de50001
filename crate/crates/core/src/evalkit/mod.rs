//! Forecast metrics, model evaluation, the persistence yardstick, forgetting
//! and data-shift checks, and their CSV/text output.

mod checks;
mod metrics;
mod output;

pub use checks::{
    evaluate, forgetting_check, persistence_baseline, shift_check, ForgettingReport,
    ForgettingRow, PredictionRow,
};
pub use metrics::{mae, rmse, MetricsReport};
pub use output::{
    summary_text, write_forgetting_csv, write_metrics_csv, write_predictions_csv, METRICS_HEADER,
};

use thiserror::Error;

use crate::dataseries::DataError;
use crate::tsformer::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}
