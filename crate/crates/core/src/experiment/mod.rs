//! Parameter sweeps over the trainers, CSV output and summaries.

mod config;
mod report;
mod runner;

pub use config::{
    preset, Algorithm, BackendKind, DatasetSpec, DtSettings, ExperimentConfig, PRESETS,
};
pub use report::{report, GroupSummary, Stat, Summary};
pub use runner::{
    grid, read_csv, read_csv_file, run_experiment, run_experiment_with, run_records, write_csv,
    write_csv_file, GridPoint, MetricRow, RunOptions, RunRecord, CSV_HEADER,
};

use crate::data::DataError;
use crate::federation::FederationError;
use crate::trainers::TrainerError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("CSV header mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<FederationError> for ExperimentError {
    fn from(e: FederationError) -> Self {
        ExperimentError::Trainer(TrainerError::Federation(e))
    }
}

impl ExperimentError {
    /// Errors a user fixes by editing the configuration or inputs.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::SchemaMismatch { .. }
                | ExperimentError::Data(_)
        ) || matches!(self, ExperimentError::Trainer(TrainerError::Config(_)))
    }
}
