use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::DpError;

/// One privacy-consuming release.
///
/// Charges sharing a `group` but with different `cell`s touch disjoint
/// records and compose in parallel: the group costs the maximum of its cell
/// totals. Ungrouped charges compose sequentially.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub label: String,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub sigma: Option<f64>,
    pub group: Option<(String, u64)>,
}

impl Charge {
    pub fn pure(label: impl Into<String>, epsilon: f64) -> Self {
        Charge {
            label: label.into(),
            epsilon: Some(epsilon),
            delta: 0.0,
            sigma: None,
            group: None,
        }
    }

    pub fn gaussian(label: impl Into<String>, sigma: f64) -> Self {
        Charge {
            label: label.into(),
            epsilon: None,
            delta: 0.0,
            sigma: Some(sigma),
            group: None,
        }
    }

    pub fn in_cell(mut self, group: impl Into<String>, cell: u64) -> Self {
        self.group = Some((group.into(), cell));
        self
    }

    fn epsilon_exact(&self) -> BigRational {
        self.epsilon
            .and_then(BigRational::from_float)
            .unwrap_or_else(BigRational::zero)
    }

    fn delta_exact(&self) -> BigRational {
        BigRational::from_float(self.delta).unwrap_or_else(BigRational::zero)
    }

    /// `1 / (2 sigma^2)` for Gaussian releases, zero otherwise.
    fn gaussian_rho_exact(&self) -> BigRational {
        match self.sigma.and_then(BigRational::from_float) {
            Some(s) if !s.is_zero() => {
                (BigRational::from_integer(BigInt::from(2)) * &s * &s).recip()
            }
            _ => BigRational::zero(),
        }
    }

    /// zCDP cost: Gaussian rho, or `epsilon^2 / 2` for pure releases.
    fn rho_exact(&self) -> BigRational {
        if self.sigma.is_some() {
            self.gaussian_rho_exact()
        } else {
            let e = self.epsilon_exact();
            &e * &e / BigRational::from_integer(BigInt::from(2))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Composition {
    /// Sum of epsilons and deltas.
    Basic,
    /// zCDP composition converted at `delta_target`.
    Zcdp { delta_target: f64 },
}

#[derive(Clone, Debug, Default)]
struct Totals {
    sequential: BigRational,
    cells: BTreeMap<(String, u64), BigRational>,
    group_max: BTreeMap<String, BigRational>,
}

impl Totals {
    fn add(&mut self, group: &Option<(String, u64)>, amount: BigRational) {
        match group {
            None => self.sequential += amount,
            Some(key) => {
                let cell = self
                    .cells
                    .entry(key.clone())
                    .or_insert_with(BigRational::zero);
                *cell += amount;
                let max = self
                    .group_max
                    .entry(key.0.clone())
                    .or_insert_with(BigRational::zero);
                if *cell > *max {
                    *max = cell.clone();
                }
            }
        }
    }

    fn total(&self) -> BigRational {
        self.group_max
            .values()
            .fold(self.sequential.clone(), |acc, v| acc + v)
    }
}

/// Running record of privacy spend, with exact rational totals.
#[derive(Clone, Debug, Default)]
pub struct BudgetLedger {
    entries: Vec<Charge>,
    epsilon: Totals,
    delta: Totals,
    gaussian_rho: Totals,
    rho: Totals,
    running_epsilon: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetGuard {
    pub epsilon_limit: Option<f64>,
    pub rho_limit: Option<f64>,
    /// Refuse over-budget charges instead of logging a warning.
    pub hard: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub label: String,
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub sigma: Option<f64>,
    pub group: Option<(String, u64)>,
    pub cumulative_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub entries: Vec<LedgerRow>,
    pub total_epsilon: f64,
    pub total_delta: f64,
    pub total_rho: f64,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, charge: Charge) {
        self.epsilon.add(&charge.group, charge.epsilon_exact());
        self.delta.add(&charge.group, charge.delta_exact());
        self.gaussian_rho
            .add(&charge.group, charge.gaussian_rho_exact());
        self.rho.add(&charge.group, charge.rho_exact());
        self.running_epsilon.push(self.total_epsilon());
        self.entries.push(charge);
    }

    /// Charges unless the guard's limits would be exceeded. Soft guards
    /// record the charge anyway and only warn.
    pub fn charge_guarded(&mut self, charge: Charge, guard: &BudgetGuard) -> Result<(), DpError> {
        let mut trial = self.clone();
        trial.charge(charge.clone());
        let over = [
            (guard.epsilon_limit, trial.total_epsilon()),
            (guard.rho_limit, trial.total_rho()),
        ]
        .into_iter()
        .find_map(|(limit, spent)| limit.filter(|&l| spent > l).map(|l| (spent, l)));
        if let Some((spent, limit)) = over {
            if guard.hard {
                return Err(DpError::BudgetExhausted { spent, limit });
            }
            log::warn!("privacy budget exceeded: spent {spent}, limit {limit}");
        }
        *self = trial;
        Ok(())
    }

    pub fn entries(&self) -> &[Charge] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_epsilon_exact(&self) -> BigRational {
        self.epsilon.total()
    }

    /// `sum of 1/(2 sigma^2)` over Gaussian releases.
    pub fn total_rho_exact(&self) -> BigRational {
        self.gaussian_rho.total()
    }

    pub fn total_epsilon(&self) -> f64 {
        self.total_epsilon_exact().to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn total_delta(&self) -> f64 {
        self.delta.total().to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn total_rho(&self) -> f64 {
        self.total_rho_exact().to_f64().unwrap_or(f64::INFINITY)
    }

    /// Overall `(epsilon, delta)` under the chosen composition.
    pub fn to_eps_delta(&self, composition: Composition) -> (f64, f64) {
        if self.is_empty() {
            return (0.0, 0.0);
        }
        match composition {
            Composition::Basic => (self.total_epsilon(), self.total_delta()),
            Composition::Zcdp { delta_target } => {
                let rho = self.rho.total().to_f64().unwrap_or(f64::INFINITY);
                (zcdp_to_epsilon(rho, delta_target), delta_target)
            }
        }
    }

    pub fn report(&self) -> LedgerReport {
        LedgerReport {
            entries: self
                .entries
                .iter()
                .zip(&self.running_epsilon)
                .map(|(c, &cumulative_epsilon)| LedgerRow {
                    label: c.label.clone(),
                    epsilon: c.epsilon,
                    delta: c.delta,
                    sigma: c.sigma,
                    group: c.group.clone(),
                    cumulative_epsilon,
                })
                .collect(),
            total_epsilon: self.total_epsilon(),
            total_delta: self.total_delta(),
            total_rho: self.total_rho(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.report()).expect("ledger report serializes")
    }
}

/// `rho + 2 sqrt(rho ln(1/delta))`.
pub fn zcdp_to_epsilon(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}
