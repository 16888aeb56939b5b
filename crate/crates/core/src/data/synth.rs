use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CategoricalDataset, NumericDataset};

const NURSERY_FEATURES: [(&str, &[&str]); 8] = [
    ("parents", &["usual", "pretentious", "great_pret"]),
    (
        "has_nurs",
        &["proper", "less_proper", "improper", "critical", "very_crit"],
    ),
    ("form", &["complete", "completed", "incomplete", "foster"]),
    ("children", &["1", "2", "3", "more"]),
    ("housing", &["convenient", "less_conv", "critical"]),
    ("finance", &["convenient", "inconv"]),
    ("social", &["nonprob", "slightly_prob", "problematic"]),
    ("health", &["recommended", "priority", "not_recom"]),
];

pub const NURSERY_CLASSES: [&str; 5] = [
    "not_recom",
    "recommend",
    "very_recom",
    "priority",
    "spec_prior",
];

/// Feature names, vocabularies and classes of the UCI Nursery data.
pub fn nursery_schema() -> (Vec<String>, Vec<Vec<String>>, Vec<String>) {
    (
        NURSERY_FEATURES
            .iter()
            .map(|(n, _)| n.to_string())
            .collect(),
        NURSERY_FEATURES
            .iter()
            .map(|(_, v)| v.iter().map(|s| s.to_string()).collect())
            .collect(),
        NURSERY_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

fn nursery_label(row: &[u32]) -> u32 {
    let [parents, has_nurs, form, children, housing, finance, social, health] =
        <[u32; 8]>::try_from(row).expect("eight features");
    if health == 2 {
        return 0;
    }
    match has_nurs {
        0 | 1 => {
            if health == 0 && finance == 0 && social == 0 {
                if parents == 0 && form == 0 && children == 0 && housing == 0 {
                    1
                } else {
                    2
                }
            } else {
                3
            }
        }
        2 if parents == 2 => 4,
        2 => 3,
        _ => 4,
    }
}

/// The full factorial of the Nursery vocabularies (12,960 rows) labelled by
/// a planted rule with a class mix close to the UCI file.
pub fn synth_nursery() -> CategoricalDataset {
    let (feature_names, vocabularies, classes) = nursery_schema();
    let sizes: Vec<u32> = vocabularies.iter().map(|v| v.len() as u32).collect();
    let total: u32 = sizes.iter().product();
    let mut rows = Vec::with_capacity(total as usize);
    let mut labels = Vec::with_capacity(total as usize);
    for mut code in 0..total {
        let mut row = vec![0u32; sizes.len()];
        for f in (0..sizes.len()).rev() {
            row[f] = code % sizes[f];
            code /= sizes[f];
        }
        labels.push(nursery_label(&row));
        rows.push(row);
    }
    CategoricalDataset {
        feature_names,
        vocabularies,
        classes,
        rows,
        labels,
    }
}

/// Random categorical data labelled by a random planted tree, with a
/// fraction of labels replaced uniformly at random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoricalSynthConfig {
    pub rows: usize,
    pub vocab_sizes: Vec<usize>,
    pub n_classes: usize,
    pub rule_depth: usize,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for CategoricalSynthConfig {
    fn default() -> Self {
        CategoricalSynthConfig {
            rows: 2000,
            vocab_sizes: vec![3, 4, 2, 3, 5, 2],
            n_classes: 3,
            rule_depth: 3,
            label_noise: 0.1,
            seed: 0,
        }
    }
}

enum Planted {
    Leaf(u32),
    Split(usize, Vec<Planted>),
}

fn plant(
    rng: &mut ChaCha20Rng,
    sizes: &[usize],
    free: &mut Vec<usize>,
    depth: usize,
    classes: usize,
) -> Planted {
    if depth == 0 || free.is_empty() {
        return Planted::Leaf(rng.random_range(0..classes as u32));
    }
    let feature = free.remove(rng.random_range(0..free.len()));
    let children = (0..sizes[feature])
        .map(|_| plant(rng, sizes, &mut free.clone(), depth - 1, classes))
        .collect();
    Planted::Split(feature, children)
}

fn planted_label(tree: &Planted, row: &[u32]) -> u32 {
    match tree {
        Planted::Leaf(c) => *c,
        Planted::Split(f, children) => planted_label(&children[row[*f] as usize], row),
    }
}

pub fn synth_categorical(config: &CategoricalSynthConfig) -> CategoricalDataset {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let sizes = &config.vocab_sizes;
    let tree = plant(
        &mut rng,
        sizes,
        &mut (0..sizes.len()).collect(),
        config.rule_depth,
        config.n_classes,
    );
    let mut rows = Vec::with_capacity(config.rows);
    let mut labels = Vec::with_capacity(config.rows);
    for _ in 0..config.rows {
        let row: Vec<u32> = sizes
            .iter()
            .map(|&s| rng.random_range(0..s as u32))
            .collect();
        let label = if rng.random::<f64>() < config.label_noise {
            rng.random_range(0..config.n_classes as u32)
        } else {
            planted_label(&tree, &row)
        };
        rows.push(row);
        labels.push(label);
    }
    CategoricalDataset {
        feature_names: (0..sizes.len()).map(|f| format!("f{f}")).collect(),
        vocabularies: sizes
            .iter()
            .map(|&s| (0..s).map(|v| format!("v{v}")).collect())
            .collect(),
        classes: (0..config.n_classes).map(|c| format!("c{c}")).collect(),
        rows,
        labels,
    }
}

/// Binary data `x = y m u + z` with a hidden unit direction `u`, margin
/// `m ~ U[margin, margin + spread]` and Gaussian `z` orthogonal to `u`.
/// Every row satisfies `y <u, x> >= margin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSynthConfig {
    pub dim: usize,
    pub margin: f64,
    pub spread: f64,
    pub noise_std: f64,
    /// Seed of the hidden direction, shared by train and test draws.
    pub concept_seed: u64,
}

impl Default for LinearSynthConfig {
    fn default() -> Self {
        LinearSynthConfig {
            dim: 500,
            margin: 0.0,
            spread: 16.0,
            noise_std: 0.05,
            concept_seed: 0,
        }
    }
}

impl LinearSynthConfig {
    pub fn direction(&self) -> Array1<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.concept_seed);
        let u: Array1<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = u.dot(&u).sqrt();
        u / norm
    }
}

pub fn synth_linear(config: &LinearSynthConfig, rows: usize, seed: u64) -> NumericDataset {
    let u = config.direction();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((rows, config.dim));
    let mut labels = Vec::with_capacity(rows);
    for mut row in features.rows_mut() {
        let y: i32 = if rng.random::<bool>() { 1 } else { -1 };
        let m = config.margin + config.spread * rng.random::<f64>();
        let z: Array1<f64> = (0..config.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.noise_std * z
            })
            .collect();
        let z = &z - &(&u * z.dot(&u));
        row.assign(&(&u * (y as f64 * m) + z));
        labels.push(y);
    }
    NumericDataset::new(features, labels)
}

/// Image-like multi-class data: each class has a random prototype in
/// `[0, 1]^dim`; rows blend their class prototype with a random other one
/// and add pixel noise, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrototypeSynthConfig {
    pub dim: usize,
    pub n_classes: usize,
    /// Fraction of active pixels in a prototype.
    pub density: f64,
    /// Upper bound of the weight on the distractor prototype.
    pub max_blend: f64,
    pub noise_std: f64,
    pub concept_seed: u64,
}

impl Default for PrototypeSynthConfig {
    fn default() -> Self {
        PrototypeSynthConfig {
            dim: 784,
            n_classes: 10,
            density: 0.2,
            max_blend: 0.45,
            noise_std: 0.3,
            concept_seed: 0,
        }
    }
}

impl PrototypeSynthConfig {
    pub fn prototypes(&self) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.concept_seed);
        Array2::from_shape_fn((self.n_classes, self.dim), |_| {
            if rng.random::<f64>() < self.density {
                rng.random_range(0.5..1.0)
            } else {
                0.0
            }
        })
    }
}

pub fn synth_prototypes(config: &PrototypeSynthConfig, rows: usize, seed: u64) -> NumericDataset {
    let protos = config.prototypes();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((rows, config.dim));
    let mut labels = Vec::with_capacity(rows);
    for mut row in features.rows_mut() {
        let class = rng.random_range(0..config.n_classes);
        let other = (class + rng.random_range(1..config.n_classes)) % config.n_classes;
        let blend = config.max_blend * rng.random::<f64>();
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let x = (1.0 - blend) * protos[[class, j]]
                + blend * protos[[other, j]]
                + config.noise_std * noise;
            *v = x.clamp(0.0, 1.0);
        }
        labels.push(class as i32);
    }
    NumericDataset::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nursery_synthetic_shape_and_mix() {
        let ds = synth_nursery();
        assert_eq!(ds.n_rows(), 12960);
        assert_eq!(ds.n_features(), 8);
        assert_eq!(ds.n_classes(), 5);
        assert_eq!(ds.class_counts(), vec![4320, 2, 286, 4320, 4032]);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let cfg = CategoricalSynthConfig::default();
        assert_eq!(synth_categorical(&cfg), synth_categorical(&cfg));
        let lin = LinearSynthConfig {
            dim: 20,
            ..Default::default()
        };
        assert_eq!(synth_linear(&lin, 10, 4), synth_linear(&lin, 10, 4));
        assert_ne!(synth_linear(&lin, 10, 4), synth_linear(&lin, 10, 5));
    }

    #[test]
    fn linear_rows_respect_the_margin() {
        let cfg = LinearSynthConfig {
            dim: 30,
            margin: 1.0,
            spread: 2.0,
            noise_std: 0.5,
            concept_seed: 8,
        };
        let u = cfg.direction();
        let ds = synth_linear(&cfg, 200, 1);
        for (row, &y) in ds.features.rows().into_iter().zip(&ds.labels) {
            assert!(y as f64 * row.dot(&u) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn prototype_rows_are_pixels() {
        let cfg = PrototypeSynthConfig::default();
        let ds = synth_prototypes(&cfg, 50, 2);
        assert_eq!(ds.features.dim(), (50, 784));
        assert!(ds.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ds.labels.iter().all(|l| (0..10).contains(l)));
    }
}
