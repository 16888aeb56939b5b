use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::data::{CategoricalSynthConfig, LinearSynthConfig, PrototypeSynthConfig};
use crate::federation::PrivacyMode;
use crate::trainers::{MlpHyper, SvmHyper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dt,
    Mlp,
    Svm,
    /// Class drawn uniformly at random.
    Uniform,
    /// Class drawn from the training label distribution.
    Random,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dt => "dt",
            Algorithm::Mlp => "mlp",
            Algorithm::Svm => "svm",
            Algorithm::Uniform => "uniform",
            Algorithm::Random => "random",
        }
    }

    pub fn uses_sigma(self) -> bool {
        matches!(self, Algorithm::Mlp | Algorithm::Svm)
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Algorithm::Uniform | Algorithm::Random)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Paillier,
    Plaintext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// The UCI Nursery file, or its synthetic stand-in when `path` is unset
    /// or missing.
    Nursery {
        #[serde(default)]
        path: Option<String>,
    },
    CategoricalCsv {
        path: String,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        class_column: Option<usize>,
    },
    CategoricalSynth(CategoricalSynthConfig),
    LinearSynth {
        #[serde(flatten)]
        generator: LinearSynthConfig,
        train_rows: usize,
        test_rows: usize,
    },
    PrototypeSynth {
        #[serde(flatten)]
        generator: PrototypeSynthConfig,
        train_rows: usize,
        test_rows: usize,
    },
    Idx {
        train_images: String,
        train_labels: String,
        test_images: String,
        test_labels: String,
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
    Libsvm {
        train: String,
        test: String,
        #[serde(default)]
        dim: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn is_categorical(&self) -> bool {
        matches!(
            self,
            DatasetSpec::Nursery { .. }
                | DatasetSpec::CategoricalCsv { .. }
                | DatasetSpec::CategoricalSynth(_)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DtSettings {
    #[serde(default)]
    pub max_depth: Option<usize>,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_delta() -> f64 {
    1e-5
}

fn default_key_bits() -> usize {
    crate::thpaillier::RECOMMENDED_KEY_BITS
}

fn default_timeout() -> f64 {
    600.0
}

fn default_backend() -> BackendKind {
    BackendKind::Paillier
}

/// One sweep: every combination of mode, budget, party count, trust and
/// seed becomes a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub algorithm: Algorithm,
    pub modes: Vec<PrivacyMode>,
    pub dataset: DatasetSpec,
    /// Total budgets for decision trees.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Noise multipliers for the Gaussian learners.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    pub n_parties: Vec<usize>,
    /// Empty means `t = n` for every party count.
    #[serde(default)]
    pub trust: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Target `delta` when converting Gaussian ledgers to `(eps, delta)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Encryption used by hybrid runs; other modes never encrypt.
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_key_bits")]
    pub key_bits: usize,
    #[serde(default = "default_timeout")]
    pub round_timeout_secs: f64,
    /// Writes zero for every timing column so reruns are byte-identical.
    #[serde(default)]
    pub deterministic: bool,
    /// Runs grid points on separate threads.
    #[serde(default)]
    pub parallel: bool,
    /// Dataset manifest used to resolve paths written as `@name`.
    #[serde(default)]
    pub manifest: Option<String>,
    /// Target budget printed beside the ledger conversion, if any.
    #[serde(default)]
    pub reported_epsilon: Option<f64>,
    #[serde(default)]
    pub reported_delta: Option<f64>,
    #[serde(default)]
    pub dt: DtSettings,
    #[serde(default)]
    pub mlp: Option<MlpHyper>,
    #[serde(default)]
    pub svm: Option<SvmHyper>,
    /// Directory that relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{path:?}: {e}")))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn round_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.round_timeout_secs)
    }

    pub fn mlp_hyper(&self) -> MlpHyper {
        self.mlp.clone().unwrap_or_default()
    }

    pub fn svm_hyper(&self) -> SvmHyper {
        self.svm.clone().unwrap_or_default()
    }

    /// Trust values paired with `n`.
    pub fn trust_for(&self, n: usize) -> Vec<usize> {
        if self.trust.is_empty() {
            vec![n]
        } else {
            self.trust.clone()
        }
    }

    /// Budgets swept: `epsilons` for trees, `sigmas` otherwise. Each entry
    /// is `(epsilon, sigma)`.
    pub fn budgets(&self) -> Vec<(Option<f64>, Option<f64>)> {
        match self.algorithm {
            Algorithm::Dt => self.epsilons.iter().map(|&e| (Some(e), None)).collect(),
            Algorithm::Mlp | Algorithm::Svm => {
                self.sigmas.iter().map(|&s| (None, Some(s))).collect()
            }
            Algorithm::Uniform | Algorithm::Random => vec![(None, None)],
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.modes.is_empty() || self.n_parties.is_empty() || self.seeds.is_empty() {
            return bad("modes, n_parties and seeds must be non-empty".into());
        }
        match self.algorithm {
            Algorithm::Dt if self.epsilons.is_empty() => {
                return bad("dt needs a non-empty epsilons grid".into())
            }
            Algorithm::Mlp | Algorithm::Svm if self.sigmas.is_empty() => {
                return bad(format!(
                    "{} needs a non-empty sigmas grid",
                    self.algorithm.as_str()
                ))
            }
            _ => {}
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("epsilons must be positive".into());
        }
        if self.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("sigmas must be positive".into());
        }
        let wants_categorical = matches!(
            self.algorithm,
            Algorithm::Dt | Algorithm::Uniform | Algorithm::Random
        );
        if wants_categorical != self.dataset.is_categorical() && !self.algorithm.is_baseline() {
            return bad(format!(
                "{} cannot run on this dataset kind",
                self.algorithm.as_str()
            ));
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)".into());
        }
        if !(self.round_timeout_secs > 0.0) {
            return bad("round_timeout_secs must be positive".into());
        }
        for &n in &self.n_parties {
            if n == 0 {
                return bad("party counts must be positive".into());
            }
            for t in self.trust_for(n) {
                if t > n || t == 0 {
                    return bad(format!("trust t = {t} is outside 1..={n}"));
                }
                if self.modes.contains(&PrivacyMode::Hybrid) && t < 2 {
                    return bad(format!(
                        "hybrid mode needs 2 <= t <= n, got t = {t}, n = {n}"
                    ));
                }
            }
        }
        if let Some(h) = &self.mlp {
            h.validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if let Some(h) = &self.svm {
            h.validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Resolves a configured path: `@name` goes through the manifest,
    /// relative paths are taken from the config file's directory.
    pub fn resolve_path(&self, raw: &str) -> Result<PathBuf, ExperimentError> {
        let relative = |p: &str| match &self.base_dir {
            Some(base) if Path::new(p).is_relative() => base.join(p),
            _ => PathBuf::from(p),
        };
        match raw.strip_prefix('@') {
            Some(name) => {
                let manifest = self
                    .manifest
                    .as_deref()
                    .ok_or_else(|| ExperimentError::Config(format!("{raw:?} needs a manifest")))?;
                let manifest = crate::data::DatasetManifest::load(&relative(manifest))?;
                Ok(manifest.resolve(name)?)
            }
            None => Ok(relative(raw)),
        }
    }
}

/// Bundled configuration files keyed by preset name.
pub const PRESETS: [(&str, &str); 7] = [
    (
        "dt-budget",
        include_str!("../../../../configs/presets/dt-budget.toml"),
    ),
    (
        "dt-parties",
        include_str!("../../../../configs/presets/dt-parties.toml"),
    ),
    (
        "dt-trust",
        include_str!("../../../../configs/presets/dt-trust.toml"),
    ),
    (
        "cnn-sigma8",
        include_str!("../../../../configs/presets/cnn-sigma8.toml"),
    ),
    (
        "mlp-trust",
        include_str!("../../../../configs/presets/mlp-trust.toml"),
    ),
    (
        "svm-sigma4",
        include_str!("../../../../configs/presets/svm-sigma4.toml"),
    ),
    (
        "timing",
        include_str!("../../../../configs/presets/timing.toml"),
    ),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            ExperimentError::Config(format!(
                "unknown preset {name:?}; available: {}",
                names.join(", ")
            ))
        })?;
    ExperimentConfig::from_toml(text)
}
