//! Linear SVM trained by noised full-batch gradient descent at each party,
//! with `K` local steps per query and parameter averaging.

use ndarray::{Array1, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LocalUpdate, TrainerError};
use crate::data::NumericDataset;
use crate::dpcore::{Mechanism, NoiseSpec, PrivacyParams};
use crate::federation::{ParamVector, QueryPayload, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    /// Per-row L2 clipping bound applied to features.
    pub clip: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Total local steps `E`.
    pub epochs: usize,
    /// Local steps per query `K`; `E/K` rounds are run.
    pub epochs_per_query: usize,
    /// Use `c` as the noise sensitivity instead of 1.
    #[serde(default)]
    pub noise_scale_by_c: bool,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper {
            clip: 16.0,
            sigma: 4.0,
            learning_rate: 0.01,
            lambda: 1e-4,
            epochs: 100,
            epochs_per_query: 10,
            noise_scale_by_c: false,
        }
    }
}

impl SvmHyper {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(self.clip > 0.0)
            || !(self.learning_rate > 0.0)
            || !(self.lambda >= 0.0)
            || !(self.sigma >= 0.0)
        {
            return Err(TrainerError::Config(
                "need c > 0, eta > 0, lambda >= 0 and sigma >= 0".into(),
            ));
        }
        if self.epochs_per_query == 0
            || self.epochs == 0
            || !self.epochs.is_multiple_of(self.epochs_per_query)
        {
            return Err(TrainerError::Config(format!(
                "E = {} must be a positive multiple of K = {}",
                self.epochs, self.epochs_per_query
            )));
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.epochs / self.epochs_per_query
    }

    pub fn sensitivity(&self) -> f64 {
        if self.noise_scale_by_c {
            self.clip
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: ParamVector,
}

impl SvmModel {
    pub fn zeros(dim: usize) -> Self {
        SvmModel {
            weights: ParamVector::new(vec![0.0; dim]),
        }
    }

    /// Labels in `{-1, +1}`; a zero score maps to `+1`.
    pub fn predict(&self, data: &NumericDataset) -> Vec<i32> {
        let w = ArrayView1::from(&self.weights.values);
        data.features
            .dot(&w)
            .iter()
            .map(|&s| if s >= 0.0 { 1 } else { -1 })
            .collect()
    }
}

/// Scales each row to L2 norm at most `clip`.
pub fn clip_features(data: &NumericDataset, clip: f64) -> NumericDataset {
    let mut features = data.features.clone();
    for mut row in features.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > clip {
            row *= clip / norm;
        }
    }
    NumericDataset::new(features, data.labels.clone())
}

fn check(weights: &[f64], data: &NumericDataset) -> Result<(), TrainerError> {
    if weights.len() != data.n_features() {
        return Err(TrainerError::ShapeMismatch {
            expected: data.n_features(),
            got: weights.len(),
        });
    }
    if data.labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(TrainerError::Config("SVM labels must be -1 or +1".into()));
    }
    Ok(())
}

/// `mean_i max(0, 1 - y_i <w, x_i>) + lambda |w|^2`.
pub fn objective(weights: &[f64], data: &NumericDataset, lambda: f64) -> Result<f64, TrainerError> {
    check(weights, data)?;
    let w = ArrayView1::from(weights);
    let scores = data.features.dot(&w);
    let hinge: f64 = scores
        .iter()
        .zip(&data.labels)
        .map(|(s, &y)| (1.0 - y as f64 * s).max(0.0))
        .sum();
    Ok(hinge / data.n_rows().max(1) as f64 + lambda * w.dot(&w))
}

/// A subgradient of [`objective`]; rows exactly on the margin contribute 0.
pub fn subgradient(
    weights: &[f64],
    data: &NumericDataset,
    lambda: f64,
) -> Result<Array1<f64>, TrainerError> {
    check(weights, data)?;
    let w = ArrayView1::from(weights);
    let scores = data.features.dot(&w);
    let coeff: Array1<f64> = scores
        .iter()
        .zip(&data.labels)
        .map(|(s, &y)| {
            if (y as f64) * s < 1.0 {
                -(y as f64)
            } else {
                0.0
            }
        })
        .collect();
    let mut g = data.features.t().dot(&coeff) / data.n_rows().max(1) as f64;
    g.scaled_add(2.0 * lambda, &w);
    Ok(g)
}

/// `K` steps of `w -= eta * (grad + noise)` on an already clipped shard.
pub fn local_steps<R: Rng + ?Sized>(
    weights: &[f64],
    clipped: &NumericDataset,
    hyper: &SvmHyper,
    noise: Option<&NoiseSpec>,
    rng: &mut R,
) -> Result<LocalUpdate, TrainerError> {
    hyper.validate()?;
    if clipped.n_rows() == 0 {
        return Err(TrainerError::EmptyShard);
    }
    let mut w = weights.to_vec();
    let mut noised_steps = 0;
    for _ in 0..hyper.epochs_per_query {
        let mut g = subgradient(&w, clipped, hyper.lambda)?.to_vec();
        if let Some(spec) = noise {
            spec.perturb(&mut g, rng)?;
            noised_steps += 1;
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= hyper.learning_rate * gi;
        }
    }
    Ok(LocalUpdate {
        params: w,
        noised_steps,
    })
}

/// Runs `E/K` rounds of local steps and averaging from `w = 0`.
pub fn svm_train(
    session: &mut Session,
    dim: usize,
    hyper: &SvmHyper,
    mut on_round: impl FnMut(usize, &SvmModel),
) -> Result<SvmModel, TrainerError> {
    hyper.validate()?;
    let noise = session.noise(
        Mechanism::Gaussian,
        PrivacyParams::gaussian(hyper.sigma, hyper.sensitivity()),
    );
    let n = session.config().n_parties as f64;
    let mut model = SvmModel::zeros(dim);
    for round in 0..hyper.rounds() {
        let payload = QueryPayload::TrainSvm {
            weights: model.weights.clone(),
            hyper: hyper.clone(),
        };
        let summed = session.run_round(payload, noise.clone(), Vec::new())?;
        model.weights = ParamVector::new(summed.into_iter().map(|v| v / n).collect());
        on_round(round, &model);
        session.save_checkpoint(serde_json::to_value(&model).expect("model serializes"))?;
    }
    Ok(model)
}
