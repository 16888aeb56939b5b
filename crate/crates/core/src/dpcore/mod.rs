//! Differential-privacy mechanisms, Gaussian calibration and composition
//! accounting.
//!
//! Trust-scaled mechanisms split one query's noise among parties: each of
//! `n` parties draws a share such that any `t - 1` honest shares already sum
//! to the full central-DP noise.

mod ledger;
mod mechanisms;

pub use ledger::{BudgetGuard, BudgetLedger, Charge, Composition, LedgerReport, LedgerRow};
pub use mechanisms::{
    calibrate_gaussian_sigma, gamma_share_noise, gaussian_noise, gaussian_theorem_holds,
    laplace_noise, per_party_noise_std, trust_scaled_gaussian, Mechanism, NoiseDraw, NoiseScaling,
    NoiseSpec, PrivacyParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("trust t = {0} is below 2; noise cannot be split across t - 1 parties")]
    TrustTooLow(usize),
    #[error("trust t = {trust_t} exceeds the number of parties {n_parties}")]
    TrustExceedsParties { trust_t: usize, n_parties: usize },
    #[error("mechanism needs {0}, which was not configured")]
    MissingParameter(&'static str),
    #[error("privacy budget exhausted: spent {spent}, limit {limit}")]
    BudgetExhausted { spent: f64, limit: f64 },
}
