//! Fully connected ReLU network with a softmax cross-entropy head, trained
//! by DP-SGD at each party and averaged by the aggregator.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LocalUpdate, TrainerError};
use crate::data::NumericDataset;
use crate::dpcore::{Mechanism, NoiseSpec, PrivacyParams};
use crate::federation::{ParamVector, QueryPayload, Session};

pub const PAPER_LAYERS: [usize; 4] = [784, 60, 1000, 10];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub clip: f64,
    pub sigma: f64,
    pub learning_rate: f64,
    pub batch_rate: f64,
    pub epochs: usize,
    /// Weight each party's parameters by its shard size when averaging.
    #[serde(default)]
    pub weighted_average: bool,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            clip: 4.0,
            sigma: 8.0,
            learning_rate: 0.1,
            batch_rate: 0.01,
            epochs: 30,
            weighted_average: false,
        }
    }
}

impl MlpHyper {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(self.clip > 0.0)
            || !(self.batch_rate > 0.0 && self.batch_rate <= 1.0)
            || self.epochs == 0
        {
            return Err(TrainerError::Config(format!(
                "need c > 0, 0 < b <= 1, E >= 1; got c = {}, b = {}, E = {}",
                self.clip, self.batch_rate, self.epochs
            )));
        }
        if !(self.sigma >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(TrainerError::Config(
                "sigma must be >= 0 and the learning rate > 0".into(),
            ));
        }
        Ok(())
    }

    /// Batches per local epoch: `ceil(1/b)`.
    pub fn batches_per_epoch(&self) -> usize {
        (1.0 / self.batch_rate).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<usize>,
    pub params: ParamVector,
}

/// Number of weights and biases for `layers`.
pub fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn layer_views<'a>(
    layers: &[usize],
    params: &'a [f64],
) -> Vec<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
    let mut offset = 0;
    layers
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = ArrayView2::from_shape(
                (fan_out, fan_in),
                &params[offset..offset + fan_in * fan_out],
            )
            .expect("weight block");
            offset += fan_in * fan_out;
            let bias = ArrayView1::from(&params[offset..offset + fan_out]);
            offset += fan_out;
            (weights, bias)
        })
        .collect()
}

impl MlpModel {
    /// He-initialised weights, zero biases.
    pub fn init(layers: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(layers));
        for w in layers.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.push(std * z);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        MlpModel {
            layers: layers.to_vec(),
            params: ParamVector::new(params),
        }
    }

    pub fn zeros(layers: &[usize]) -> Self {
        MlpModel {
            layers: layers.to_vec(),
            params: ParamVector::new(vec![0.0; param_count(layers)]),
        }
    }

    pub fn check(&self) -> Result<(), TrainerError> {
        let expected = param_count(&self.layers);
        if self.params.len() != expected {
            return Err(TrainerError::ShapeMismatch {
                expected,
                got: self.params.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        forward(&self.layers, &self.params.values, x)
            .pop()
            .expect("output layer")
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<i32> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|row| argmax(row.iter().copied()) as i32)
            .collect()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Pre-activations of every layer; hidden layers are returned after ReLU.
fn forward(layers: &[usize], params: &[f64], x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let views = layer_views(layers, params);
    let mut activations = Vec::with_capacity(views.len());
    let mut current = x.to_owned();
    for (l, (w, b)) in views.iter().enumerate() {
        let mut z = current.dot(&w.t());
        z += b;
        if l + 1 < views.len() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        activations.push(z.clone());
        current = z;
    }
    activations
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

fn check_batch(
    layers: &[usize],
    params: &[f64],
    x: ArrayView2<f64>,
    labels: &[i32],
) -> Result<(), TrainerError> {
    let expected = param_count(layers);
    if params.len() != expected {
        return Err(TrainerError::ShapeMismatch {
            expected,
            got: params.len(),
        });
    }
    if x.ncols() != layers[0] {
        return Err(TrainerError::ShapeMismatch {
            expected: layers[0],
            got: x.ncols(),
        });
    }
    if x.nrows() != labels.len() {
        return Err(TrainerError::ShapeMismatch {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let classes = *layers.last().expect("output layer") as i32;
    if labels.iter().any(|&l| l < 0 || l >= classes) {
        return Err(TrainerError::Config(format!(
            "labels must lie in 0..{classes}"
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch.
pub fn loss(
    layers: &[usize],
    params: &[f64],
    x: ArrayView2<f64>,
    labels: &[i32],
) -> Result<f64, TrainerError> {
    check_batch(layers, params, x, labels)?;
    let logits = forward(layers, params, x).pop().expect("output layer");
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y as usize];
    }
    Ok(total / labels.len() as f64)
}

struct Backprop {
    /// Inputs to each layer (`a_0 = x`, then hidden activations).
    inputs: Vec<Array2<f64>>,
    /// Per-example error signals `dL_i/dz_l` for each layer.
    deltas: Vec<Array2<f64>>,
    loss_sum: f64,
}

fn backprop(layers: &[usize], params: &[f64], x: ArrayView2<f64>, labels: &[i32]) -> Backprop {
    let views = layer_views(layers, params);
    let mut acts = forward(layers, params, x);
    let logits = acts.pop().expect("output layer");
    let mut inputs = Vec::with_capacity(views.len());
    inputs.push(x.to_owned());
    inputs.extend(acts);

    let mut delta = softmax_rows(&logits);
    let mut loss_sum = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss_sum -= delta[[i, y as usize]].max(f64::MIN_POSITIVE).ln();
        delta[[i, y as usize]] -= 1.0;
    }
    let mut deltas = vec![delta];
    for l in (1..views.len()).rev() {
        let upstream = deltas.last().expect("pushed above");
        let mut d = upstream.dot(&views[l].0);
        d.zip_mut_with(&inputs[l], |g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        deltas.push(d);
    }
    deltas.reverse();
    Backprop {
        inputs,
        deltas,
        loss_sum,
    }
}

/// Flattened `sum_i scale_i * grad_i` in parameter order.
fn weighted_gradient(bp: &Backprop, scale: Option<&Array1<f64>>, n_params: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_params);
    for (delta, input) in bp.deltas.iter().zip(&bp.inputs) {
        let scaled;
        let d = match scale {
            Some(s) => {
                scaled = delta * &s.view().insert_axis(Axis(1));
                &scaled
            }
            None => delta,
        };
        let gw = d.t().dot(input);
        out.extend(gw.iter());
        out.extend(d.sum_axis(Axis(0)).iter());
    }
    out
}

/// Mean loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    layers: &[usize],
    params: &[f64],
    x: ArrayView2<f64>,
    labels: &[i32],
) -> Result<(f64, Vec<f64>), TrainerError> {
    check_batch(layers, params, x, labels)?;
    let bp = backprop(layers, params, x, labels);
    let n = labels.len() as f64;
    let mut g = weighted_gradient(&bp, None, params.len());
    g.iter_mut().for_each(|v| *v /= n);
    Ok((bp.loss_sum / n, g))
}

/// Per-example gradient L2 norms, via
/// `|g_i|^2 = sum_l |delta_l,i|^2 (|a_(l-1),i|^2 + 1)`.
fn per_example_norms(bp: &Backprop) -> Array1<f64> {
    let n = bp.inputs[0].nrows();
    let mut sq = Array1::<f64>::zeros(n);
    for (delta, input) in bp.deltas.iter().zip(&bp.inputs) {
        for i in 0..n {
            let d2: f64 = delta.row(i).iter().map(|v| v * v).sum();
            let a2: f64 = input.row(i).iter().map(|v| v * v).sum();
            sq[i] += d2 * (a2 + 1.0);
        }
    }
    sq.mapv(f64::sqrt)
}

/// Scale factor `1 / max(1, |g| / c)` applied to a gradient of norm `norm`.
pub fn clip_factor(norm: f64, clip: f64) -> f64 {
    1.0 / (norm / clip).max(1.0)
}

/// Sum of per-example gradients, each clipped to norm `clip`.
pub fn clipped_gradient_sum(
    layers: &[usize],
    params: &[f64],
    x: ArrayView2<f64>,
    labels: &[i32],
    clip: f64,
) -> Result<Vec<f64>, TrainerError> {
    check_batch(layers, params, x, labels)?;
    let bp = backprop(layers, params, x, labels);
    let scale = per_example_norms(&bp).mapv(|n| clip_factor(n, clip));
    Ok(weighted_gradient(&bp, Some(&scale), params.len()))
}

fn poisson_batch<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<usize> {
    (0..n).filter(|_| rng.random::<f64>() < rate).collect()
}

/// One local epoch of DP-SGD: `ceil(1/b)` Poisson-sampled batches, each
/// step `theta -= eta * (sum of clipped grads + noise) / |B|`.
///
/// An empty batch is redrawn once and then skipped without noise.
pub fn local_epoch<R: Rng + ?Sized>(
    layers: &[usize],
    params: &[f64],
    data: &NumericDataset,
    hyper: &MlpHyper,
    noise: Option<&NoiseSpec>,
    rng: &mut R,
) -> Result<LocalUpdate, TrainerError> {
    hyper.validate()?;
    if data.n_rows() == 0 {
        return Err(TrainerError::EmptyShard);
    }
    let mut theta = params.to_vec();
    let mut noised_steps = 0;
    for _ in 0..hyper.batches_per_epoch() {
        let mut batch = poisson_batch(data.n_rows(), hyper.batch_rate, rng);
        if batch.is_empty() {
            batch = poisson_batch(data.n_rows(), hyper.batch_rate, rng);
        }
        if batch.is_empty() {
            log::debug!("skipping an empty batch");
            continue;
        }
        let x = data.features.select(Axis(0), &batch);
        let labels: Vec<i32> = batch.iter().map(|&i| data.labels[i]).collect();
        let mut g = clipped_gradient_sum(layers, &theta, x.view(), &labels, hyper.clip)?;
        if let Some(spec) = noise {
            spec.perturb(&mut g, rng)?;
            noised_steps += 1;
        }
        let step = hyper.learning_rate / batch.len() as f64;
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
    }
    if hyper.weighted_average {
        let w = data.n_rows() as f64;
        theta.iter_mut().for_each(|t| *t *= w);
        theta.push(w);
    }
    Ok(LocalUpdate {
        params: theta,
        noised_steps,
    })
}

/// The aggregator's view of one epoch: average the parties' summed
/// parameters.
pub fn average(summed: Vec<f64>, n_parties: usize, weighted: bool) -> Vec<f64> {
    let mut summed = summed;
    let denom = if weighted {
        summed.pop().unwrap_or(1.0)
    } else {
        n_parties as f64
    };
    summed.iter_mut().for_each(|v| *v /= denom);
    summed
}

/// Runs `hyper.epochs` rounds: broadcast, local epoch at every party,
/// encrypted sum, average. `on_epoch` sees the model after each round.
pub fn mlp_train(
    session: &mut Session,
    initial: MlpModel,
    hyper: &MlpHyper,
    mut on_epoch: impl FnMut(usize, &MlpModel),
) -> Result<MlpModel, TrainerError> {
    hyper.validate()?;
    initial.check()?;
    let noise = session.noise(
        Mechanism::Gaussian,
        PrivacyParams::gaussian(hyper.sigma, hyper.clip),
    );
    let n = session.config().n_parties;
    let mut model = initial;
    for epoch in 0..hyper.epochs {
        let payload = QueryPayload::TrainMlp {
            layers: model.layers.clone(),
            params: model.params.clone(),
            hyper: hyper.clone(),
        };
        let summed = session.run_round(payload, noise.clone(), Vec::new())?;
        model.params = ParamVector::new(average(summed, n, hyper.weighted_average));
        on_epoch(epoch, &model);
        session.save_checkpoint(serde_json::to_value(&model).expect("model serializes"))?;
    }
    Ok(model)
}

/// Parameter slice `[start, end)` of layer `l`'s weights, for gradient checks.
pub fn weight_range(layers: &[usize], l: usize) -> std::ops::Range<usize> {
    let start: usize = layers.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
    start..start + layers[l] * layers[l + 1]
}

/// Convenience for metrics: predictions on a dataset.
pub fn predict_dataset(model: &MlpModel, data: &NumericDataset) -> Vec<i32> {
    let mut preds = Vec::with_capacity(data.n_rows());
    let chunk = 512;
    for start in (0..data.n_rows()).step_by(chunk) {
        let end = (start + chunk).min(data.n_rows());
        preds.extend(model.predict(data.features.slice(s![start..end, ..])));
    }
    preds
}
