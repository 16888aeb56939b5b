//! Federated learning with trust-calibrated differential privacy and
//! threshold Paillier aggregation.

// Parameter checks use negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dpcore;
pub mod experiment;
pub mod federation;
pub mod thpaillier;
pub mod trainers;

pub use data::{CategoricalDataset, NumericDataset};
pub use dpcore::{BudgetLedger, Charge, Mechanism, NoiseSpec, PrivacyParams};
pub use federation::{CryptoBackend, PrivacyMode, Session, SessionConfig};
pub use thpaillier::{Ciphertext, KeyShare, PartialDecryption, PublicKey};
pub use trainers::{MlpModel, SvmModel, TreeModel};
