//! Federated learners expressed as query plans over a [`Session`], plus the
//! comparison baselines and evaluation metrics.
//!
//! [`Session`]: crate::federation::Session

pub mod baselines;
pub mod dt;
pub mod metrics;
pub mod mlp;
pub mod model_io;
pub mod svm;

pub use dt::{dt_predict, dt_train, split_score, DtBudget, DtHyper, TreeModel, TreeNode};
pub use metrics::{accuracy, macro_f1, micro_f1, Scores};
pub use mlp::{MlpHyper, MlpModel};
pub use model_io::{load_model, save_model, SavedModel};
pub use svm::{SvmHyper, SvmModel};

use crate::federation::FederationError;

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("local shard is empty")]
    EmptyShard,
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<TrainerError> for FederationError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::Federation(inner) => inner,
            other => FederationError::Trainer(other.to_string()),
        }
    }
}

impl From<crate::dpcore::DpError> for TrainerError {
    fn from(e: crate::dpcore::DpError) -> Self {
        TrainerError::Federation(e.into())
    }
}

/// A party's trained parameters after answering one training query.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    pub params: Vec<f64>,
    /// Steps that added privacy noise; each one is charged to the ledger.
    pub noised_steps: usize,
}
