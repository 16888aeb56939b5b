use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, BackendKind, DatasetSpec, ExperimentConfig};
use super::ExperimentError;
use crate::data::{
    load_csv_categorical, load_idx, load_libsvm, nursery_schema, partition, synth_categorical,
    synth_linear, synth_nursery, synth_prototypes, train_test_split, CategoricalDataset,
    CategoricalSchema, NumericDataset,
};
use crate::dpcore::{BudgetLedger, Composition};
use crate::federation::{CryptoBackend, PartyData, PrivacyMode, Session, SessionConfig};
use crate::trainers::baselines::{random_guess, uniform_guess};
use crate::trainers::mlp::{mlp_train, predict_dataset};
use crate::trainers::model_io::{save_model, LedgerSummary};
use crate::trainers::svm::svm_train;
use crate::trainers::{dt_train, DtHyper, MlpModel, SavedModel, Scores};

/// Column order of every experiment CSV.
pub const CSV_HEADER: [&str; 17] = [
    "algorithm",
    "mode",
    "dataset",
    "n_parties",
    "trust_t",
    "epsilon",
    "sigma",
    "seed",
    "micro_f1",
    "macro_f1",
    "accuracy",
    "t_compute_ms",
    "t_encrypt_ms",
    "t_aggregate_ms",
    "t_decrypt_ms",
    "ledger_eps",
    "ledger_delta",
];

/// One grid point and seed. Failed runs carry `NaN` scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub algorithm: String,
    pub mode: String,
    pub dataset: String,
    pub n_parties: usize,
    pub trust_t: usize,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub t_compute_ms: f64,
    pub t_encrypt_ms: f64,
    pub t_aggregate_ms: f64,
    pub t_decrypt_ms: f64,
    pub ledger_eps: f64,
    pub ledger_delta: f64,
}

impl MetricRow {
    pub fn failed(&self) -> bool {
        self.micro_f1.is_nan()
    }
}

/// A grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub mode: PrivacyMode,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub n_parties: usize,
    pub trust_t: usize,
    pub seed: u64,
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &mode in &cfg.modes {
        for (epsilon, sigma) in cfg.budgets() {
            for &n in &cfg.n_parties {
                for t in cfg.trust_for(n) {
                    for &seed in &cfg.seeds {
                        points.push(GridPoint {
                            mode,
                            epsilon,
                            sigma,
                            n_parties: n,
                            trust_t: t,
                            seed,
                        });
                    }
                }
            }
        }
    }
    points
}

enum Loaded {
    Categorical(CategoricalDataset),
    Numeric {
        train: NumericDataset,
        test: NumericDataset,
    },
    /// Regenerated per seed.
    Synthetic(DatasetSpec),
}

enum Split {
    Categorical {
        train: CategoricalDataset,
        test: CategoricalDataset,
    },
    Numeric {
        train: NumericDataset,
        test: NumericDataset,
    },
}

fn dataset_name(spec: &DatasetSpec, nursery_file: bool) -> String {
    match spec {
        DatasetSpec::Nursery { .. } if nursery_file => "nursery".into(),
        DatasetSpec::Nursery { .. } => "nursery-synth".into(),
        DatasetSpec::CategoricalCsv { path, .. } => Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into()),
        DatasetSpec::CategoricalSynth(_) => "categorical-synth".into(),
        DatasetSpec::LinearSynth { .. } => "linear-synth".into(),
        DatasetSpec::PrototypeSynth { .. } => "prototype-synth".into(),
        DatasetSpec::Idx { .. } => "idx".into(),
        DatasetSpec::Libsvm { .. } => "libsvm".into(),
    }
}

fn load(cfg: &ExperimentConfig) -> Result<(Loaded, String), ExperimentError> {
    let spec = &cfg.dataset;
    let loaded = match spec {
        DatasetSpec::Nursery { path } => {
            let file = match path {
                Some(p) => Some(cfg.resolve_path(p)?).filter(|p| p.exists()),
                None => None,
            };
            match file {
                Some(p) => {
                    let (feature_names, vocabularies, classes) = nursery_schema();
                    let schema = CategoricalSchema {
                        has_header: false,
                        class_column: None,
                        feature_names: Some(feature_names),
                        vocabularies: Some(vocabularies),
                        classes: Some(classes),
                    };
                    return Ok((
                        Loaded::Categorical(load_csv_categorical(&p, &schema)?),
                        dataset_name(spec, true),
                    ));
                }
                None => {
                    if path.is_some() {
                        log::warn!("nursery file not found; using the synthetic stand-in");
                    }
                    Loaded::Categorical(synth_nursery())
                }
            }
        }
        DatasetSpec::CategoricalCsv {
            path,
            has_header,
            class_column,
        } => {
            let schema = CategoricalSchema {
                has_header: *has_header,
                class_column: *class_column,
                ..Default::default()
            };
            Loaded::Categorical(load_csv_categorical(&cfg.resolve_path(path)?, &schema)?)
        }
        DatasetSpec::CategoricalSynth(c) => Loaded::Categorical(synth_categorical(c)),
        DatasetSpec::LinearSynth { .. } | DatasetSpec::PrototypeSynth { .. } => {
            Loaded::Synthetic(spec.clone())
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            max_train,
            max_test,
        } => {
            let scale = |mut d: NumericDataset, max: Option<usize>| {
                d.features.mapv_inplace(|v| v / 255.0);
                match max {
                    Some(m) if m < d.n_rows() => d.subset(&(0..m).collect::<Vec<_>>()),
                    _ => d,
                }
            };
            let train = load_idx(
                &cfg.resolve_path(train_images)?,
                &cfg.resolve_path(train_labels)?,
            )?;
            let test = load_idx(
                &cfg.resolve_path(test_images)?,
                &cfg.resolve_path(test_labels)?,
            )?;
            Loaded::Numeric {
                train: scale(train, *max_train),
                test: scale(test, *max_test),
            }
        }
        DatasetSpec::Libsvm { train, test, dim } => {
            let train = load_libsvm(&cfg.resolve_path(train)?, *dim)?;
            let dim = dim.or(Some(train.n_features()));
            let test = load_libsvm(&cfg.resolve_path(test)?, dim)?;
            Loaded::Numeric { train, test }
        }
    };
    Ok((loaded, dataset_name(spec, false)))
}

/// Distinct generator seeds for the train and test draws of one run.
fn data_seeds(seed: u64) -> (u64, u64) {
    (
        seed.wrapping_mul(2).wrapping_add(1_000),
        seed.wrapping_mul(2).wrapping_add(1_001),
    )
}

fn split(loaded: &Loaded, test_fraction: f64, seed: u64) -> Split {
    match loaded {
        Loaded::Categorical(d) => {
            let (train, test) = train_test_split(d.n_rows(), test_fraction, seed);
            Split::Categorical {
                train: d.subset(&train),
                test: d.subset(&test),
            }
        }
        Loaded::Numeric { train, test } => Split::Numeric {
            train: train.clone(),
            test: test.clone(),
        },
        Loaded::Synthetic(spec) => {
            let (a, b) = data_seeds(seed);
            let (train, test) = match spec {
                DatasetSpec::LinearSynth {
                    generator,
                    train_rows,
                    test_rows,
                } => (
                    synth_linear(generator, *train_rows, a),
                    synth_linear(generator, *test_rows, b),
                ),
                DatasetSpec::PrototypeSynth {
                    generator,
                    train_rows,
                    test_rows,
                } => (
                    synth_prototypes(generator, *train_rows, a),
                    synth_prototypes(generator, *test_rows, b),
                ),
                _ => unreachable!("only generated numeric data is synthetic here"),
            };
            Split::Numeric { train, test }
        }
    }
}

/// Extra settings for a run that do not belong in the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Save each trained model as `<dir>/<index>.model`.
    pub model_dir: Option<PathBuf>,
}

struct Trained {
    model: Option<SavedModel>,
    scores: Scores,
    session: Option<Session>,
}

fn session_config(cfg: &ExperimentConfig, point: &GridPoint, index: usize) -> SessionConfig {
    let (n, t) = effective_parties(point);
    let mut s = SessionConfig::new(n, t, point.mode);
    s.session_id = format!(
        "{}-{index}",
        if cfg.name.is_empty() {
            "run"
        } else {
            &cfg.name
        }
    );
    s.backend = match (point.mode, cfg.backend) {
        (PrivacyMode::Hybrid, BackendKind::Paillier) => CryptoBackend::Paillier {
            key_bits: cfg.key_bits,
        },
        _ => CryptoBackend::Plaintext,
    };
    s.seed = point.seed;
    s.round_timeout = cfg.round_timeout();
    s
}

/// Central runs hold all data at one party.
fn effective_parties(point: &GridPoint) -> (usize, usize) {
    match point.mode {
        PrivacyMode::Central => (1, 1),
        _ => (point.n_parties, point.trust_t),
    }
}

fn shards<T>(
    rows: usize,
    n: usize,
    seed: u64,
    subset: impl Fn(&[usize]) -> T,
) -> Result<Vec<T>, ExperimentError> {
    Ok(partition(rows, n, seed)?
        .shards
        .iter()
        .map(|r| subset(r))
        .collect())
}

fn train_point(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    index: usize,
    data: Split,
) -> Result<Trained, ExperimentError> {
    let (n, _) = effective_parties(point);
    let mut rng = ChaCha20Rng::seed_from_u64(point.seed);
    match (cfg.algorithm, data) {
        (Algorithm::Uniform | Algorithm::Random, data) => {
            let (train_labels, test_labels): (Vec<u32>, Vec<u32>) = match data {
                Split::Categorical { train, test } => (train.labels, test.labels),
                Split::Numeric { train, test } => {
                    let distinct: std::collections::BTreeSet<i32> =
                        train.labels.iter().chain(&test.labels).copied().collect();
                    let index = |v: Vec<i32>| {
                        v.into_iter()
                            .map(|l| {
                                distinct.iter().position(|&d| d == l).expect("label seen") as u32
                            })
                            .collect()
                    };
                    (index(train.labels), index(test.labels))
                }
            };
            let n_classes = train_labels
                .iter()
                .chain(&test_labels)
                .max()
                .map_or(1, |m| *m as usize + 1);
            let guesses = if cfg.algorithm == Algorithm::Uniform {
                uniform_guess(n_classes, test_labels.len(), &mut rng)
            } else {
                random_guess(&train_labels, test_labels.len(), &mut rng)
            };
            Ok(Trained {
                model: None,
                scores: Scores::compute(&test_labels, &guesses),
                session: None,
            })
        }
        (Algorithm::Dt, Split::Categorical { train, test }) => {
            let parts = shards(train.n_rows(), n, point.seed, |r| {
                PartyData::Categorical(train.subset(r))
            })?;
            let mut session = Session::in_proc(session_config(cfg, point, index), parts)?;
            let hyper = DtHyper {
                epsilon: point.epsilon.expect("dt grid carries epsilon"),
                max_depth: cfg.dt.max_depth,
            };
            let tree = dt_train(&mut session, &train, &hyper)?;
            let scores = Scores::compute(&test.labels, &tree.predict_all(&test));
            Ok(Trained {
                model: Some(SavedModel::Tree(tree)),
                scores,
                session: Some(session),
            })
        }
        (Algorithm::Mlp, Split::Numeric { train, test }) => {
            let parts = shards(train.n_rows(), n, point.seed, |r| {
                PartyData::Numeric(train.subset(r))
            })?;
            let mut session = Session::in_proc(session_config(cfg, point, index), parts)?;
            let mut hyper = cfg.mlp_hyper();
            hyper.sigma = point.sigma.expect("mlp grid carries sigma");
            let n_classes = train.n_classes().max(test.n_classes());
            let layers = [train.n_features(), 60, 1000, n_classes];
            let model = mlp_train(
                &mut session,
                MlpModel::init(&layers, point.seed),
                &hyper,
                |_, _| {},
            )?;
            let scores = Scores::compute(&test.labels, &predict_dataset(&model, &test));
            Ok(Trained {
                model: Some(SavedModel::Mlp(model)),
                scores,
                session: Some(session),
            })
        }
        (Algorithm::Svm, Split::Numeric { train, test }) => {
            let parts = shards(train.n_rows(), n, point.seed, |r| {
                PartyData::Numeric(train.subset(r))
            })?;
            let mut session = Session::in_proc(session_config(cfg, point, index), parts)?;
            let mut hyper = cfg.svm_hyper();
            hyper.sigma = point.sigma.expect("svm grid carries sigma");
            let model = svm_train(&mut session, train.n_features(), &hyper, |_, _| {})?;
            let scores = Scores::compute(&test.labels, &model.predict(&test));
            Ok(Trained {
                model: Some(SavedModel::Svm(model)),
                scores,
                session: Some(session),
            })
        }
        (algorithm, _) => Err(ExperimentError::Config(format!(
            "{} cannot run on this dataset kind",
            algorithm.as_str()
        ))),
    }
}

fn ledger_columns(cfg: &ExperimentConfig, session: &Session) -> (f64, f64) {
    let ledger = session.ledger();
    if cfg.algorithm.uses_sigma() {
        ledger.to_eps_delta(Composition::Zcdp {
            delta_target: cfg.delta,
        })
    } else {
        ledger.to_eps_delta(Composition::Basic)
    }
}

/// A CSV row plus every party's exact ledger for that run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub point: GridPoint,
    pub row: MetricRow,
    pub ledgers: Vec<BudgetLedger>,
}

fn run_point(
    cfg: &ExperimentConfig,
    loaded: &Loaded,
    dataset: &str,
    options: &RunOptions,
    index: usize,
    point: &GridPoint,
) -> RunRecord {
    let (n_parties, trust_t) = effective_parties(point);
    let mut row = MetricRow {
        algorithm: cfg.algorithm.as_str().into(),
        mode: point.mode.as_str().into(),
        dataset: dataset.into(),
        n_parties,
        trust_t,
        epsilon: point.epsilon,
        sigma: point.sigma,
        seed: point.seed,
        micro_f1: f64::NAN,
        macro_f1: f64::NAN,
        accuracy: f64::NAN,
        t_compute_ms: 0.0,
        t_encrypt_ms: 0.0,
        t_aggregate_ms: 0.0,
        t_decrypt_ms: 0.0,
        ledger_eps: f64::NAN,
        ledger_delta: f64::NAN,
    };
    let data = split(loaded, cfg.test_fraction, point.seed);
    let trained = match train_point(cfg, point, index, data) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("run {index} ({point:?}) failed: {e}");
            return RunRecord {
                point: *point,
                row,
                ledgers: Vec::new(),
            };
        }
    };
    row.micro_f1 = trained.scores.micro_f1;
    row.macro_f1 = trained.scores.macro_f1;
    row.accuracy = trained.scores.accuracy;
    let mut summary = LedgerSummary::default();
    match &trained.session {
        Some(session) => {
            let (eps, delta) = ledger_columns(cfg, session);
            row.ledger_eps = eps;
            row.ledger_delta = delta;
            summary = session.ledger().into();
            if !cfg.deterministic {
                let t = session.timings();
                row.t_compute_ms = t.compute_ms;
                row.t_encrypt_ms = t.encrypt_ms;
                row.t_aggregate_ms = t.aggregate_ms;
                row.t_decrypt_ms = t.decrypt_ms;
            }
        }
        None => {
            row.ledger_eps = 0.0;
            row.ledger_delta = 0.0;
        }
    }
    if let (Some(dir), Some(model)) = (&options.model_dir, &trained.model) {
        let hyper = match cfg.algorithm {
            Algorithm::Mlp => serde_json::to_value(cfg.mlp_hyper()).unwrap_or_default(),
            Algorithm::Svm => serde_json::to_value(cfg.svm_hyper()).unwrap_or_default(),
            _ => serde_json::json!({ "epsilon": point.epsilon, "max_depth": cfg.dt.max_depth }),
        };
        if let Err(e) = save_model(&dir.join(format!("{index}.model")), model, hyper, summary) {
            log::warn!("could not save model {index}: {e}");
        }
    }
    let mut ledgers = Vec::new();
    if let Some(session) = trained.session {
        ledgers = session.party_ledgers().to_vec();
        session.shutdown();
    }
    RunRecord {
        point: *point,
        row,
        ledgers,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>, ExperimentError> {
    run_experiment_with(cfg, &RunOptions::default())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<Vec<MetricRow>, ExperimentError> {
    Ok(run_records(cfg, options)?
        .into_iter()
        .map(|r| r.row)
        .collect())
}

/// Runs every grid point. Failed points become rows with `NaN` scores
/// rather than aborting the sweep.
pub fn run_records(
    cfg: &ExperimentConfig,
    options: &RunOptions,
) -> Result<Vec<RunRecord>, ExperimentError> {
    cfg.validate()?;
    let (loaded, dataset) = load(cfg)?;
    let points = grid(cfg);
    if !cfg.parallel {
        return Ok(points
            .iter()
            .enumerate()
            .map(|(i, p)| run_point(cfg, &loaded, &dataset, options, i, p))
            .collect());
    }
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(points.len().max(1));
    let mut rows: Vec<Option<RunRecord>> = vec![None; points.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (loaded, dataset, points) = (&loaded, &dataset, &points);
                scope.spawn(move || {
                    (w..points.len())
                        .step_by(workers)
                        .map(|i| (i, run_point(cfg, loaded, dataset, options, i, &points[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, row) in h.join().expect("worker panicked") {
                rows[i] = Some(row);
            }
        }
    });
    Ok(rows
        .into_iter()
        .map(|r| r.expect("every point ran"))
        .collect())
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[MetricRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[MetricRow]) -> Result<(), ExperimentError> {
    write_csv(std::fs::File::create(path)?, rows)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ExperimentError::SchemaMismatch {
            expected: CSV_HEADER.join(","),
            found: header.join(","),
        });
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<MetricRow>, ExperimentError> {
    read_csv(std::fs::File::open(path)?)
}
