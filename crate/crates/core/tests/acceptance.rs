//! Acceptance harness: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run a subset with `cargo test --test acceptance -- 1 4 7`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::Array2;
use num_bigint::BigUint;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hybridfl::data::{
    partition, synth_categorical, synth_linear, synth_prototypes, CategoricalDataset,
    CategoricalSynthConfig, LinearSynthConfig, NumericDataset, PrototypeSynthConfig,
};
use hybridfl::dpcore::{
    gamma_share_noise, trust_scaled_gaussian, BudgetLedger, Mechanism, PrivacyParams,
};
use hybridfl::experiment::{
    preset, run_records, write_csv, ExperimentConfig, RunOptions, RunRecord,
};
use hybridfl::federation::{
    party_rng, CryptoBackend, ParamVector, PartyData, PrivacyMode, QueryPayload, Session,
    SessionConfig,
};
use hybridfl::thpaillier::{
    combine, combine_unchecked, deal_keys, encrypt, partial_decrypt, sum, FixedPointCodec,
};
use hybridfl::trainers::mlp::{self, MlpHyper};
use hybridfl::trainers::svm::{self, SvmHyper};
use hybridfl::trainers::{dt_train, DtHyper, TreeNode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Ledgers gathered by the experiment criteria for the budget audit.
#[derive(Default)]
struct Audit {
    /// Configured epsilon and every party ledger of a DT run.
    dt: Vec<(f64, Vec<BudgetLedger>)>,
    /// Sigma, expected Gaussian releases per party, and party ledgers.
    gaussian: Vec<(u64, usize, Vec<BudgetLedger>)>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values.iter().copied());
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Mean micro-F1 of the records matching `keep`.
fn mean_f1(records: &[RunRecord], keep: impl Fn(&RunRecord) -> bool) -> f64 {
    mean(records.iter().filter(|r| keep(r)).map(|r| r.row.micro_f1))
}

fn run(cfg: &ExperimentConfig) -> Vec<RunRecord> {
    cfg.validate().expect("acceptance config is valid");
    run_records(cfg, &RunOptions::default()).expect("experiment runs")
}

fn any_failed(records: &[RunRecord]) -> Option<String> {
    let failed = records.iter().filter(|r| r.row.failed()).count();
    (failed > 0).then(|| format!("{failed} runs failed"))
}

// ---------------------------------------------------------------------------
// 1. threshold decryption at 512-bit keys

fn criterion_1(_: &mut Audit) -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut wrong = 0usize;
    let mut sub_recoveries = 0usize;
    let mut sub_trials = 0usize;
    for (k, &(n, threshold)) in [(3usize, 2usize), (5, 3), (10, 6)].iter().enumerate() {
        let (pk, shares) = deal_keys(512, n, threshold, 100 + k as u64).expect("keys");
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..1000 {
            let m = BigUint::from_bytes_le(&rng.random::<[u8; 63]>()) % pk.n();
            let c = encrypt(&pk, &m, &mut rng).expect("encrypt");
            indices.shuffle(&mut rng);
            let parts: Vec<_> = indices[..threshold]
                .iter()
                .map(|&i| partial_decrypt(&shares[i], &c))
                .collect();
            if combine(&pk, &parts).ok().as_ref() != Some(&m) {
                wrong += 1;
            }
            let size = rng.random_range(1..threshold);
            let subset = &parts[..size];
            sub_trials += 1;
            let quorum_refused = combine(&pk, subset).is_err();
            if !quorum_refused || combine_unchecked(&pk, subset).as_ref() == Some(&m) {
                sub_recoveries += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        wrong == 0 && sub_recoveries == 0 && secs < 60.0,
        format!(
            "3000 plaintexts, {wrong} wrong decryptions; sub-threshold recoveries {sub_recoveries}/{sub_trials}; {secs:.1} s (limit 60 s)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. homomorphic vector aggregation

fn criterion_2(_: &mut Audit) -> Outcome {
    const PARTIES: usize = 10;
    const LEN: usize = 50;
    let (pk, shares) = deal_keys(512, PARTIES, 6, 2).expect("keys");
    let codec = FixedPointCodec::new(&pk, 32, PARTIES).expect("codec");
    let tolerance = PARTIES as f64 * 2f64.powi(-32);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut integer_mismatches = 0usize;
    let mut worst_fixed = 0.0f64;
    let decrypt = |c: &hybridfl::thpaillier::Ciphertext| {
        let parts: Vec<_> = shares[..6].iter().map(|s| partial_decrypt(s, c)).collect();
        codec
            .decode(&combine(&pk, &parts).expect("quorum"), PARTIES)
            .expect("decode")
    };
    // 20 rounds of 10 party vectors: 200 vectors, alternating integer and real rounds.
    for round in 0..20 {
        let integers = round % 2 == 0;
        let vectors: Vec<Vec<f64>> = (0..PARTIES)
            .map(|_| {
                (0..LEN)
                    .map(|_| {
                        if integers {
                            rng.random_range(-1_000_000i64..1_000_000) as f64
                        } else {
                            rng.random_range(-1000.0..1000.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let encrypted: Vec<Vec<_>> = vectors
            .iter()
            .map(|v| {
                v.iter()
                    .map(|x| {
                        encrypt(&pk, &codec.encode(*x).expect("encode"), &mut rng).expect("encrypt")
                    })
                    .collect()
            })
            .collect();
        for j in 0..LEN {
            let folded = sum(&pk, encrypted.iter().map(|v| &v[j])).expect("non-empty");
            let got = decrypt(&folded);
            let want: f64 = vectors.iter().map(|v| v[j]).sum();
            if integers {
                integer_mismatches += usize::from(got != want);
            } else {
                worst_fixed = worst_fixed.max((got - want).abs());
            }
        }
    }
    outcome(
        integer_mismatches == 0 && worst_fixed <= tolerance,
        format!(
            "integer mismatches {integer_mismatches}/500; worst fixed-point error {worst_fixed:.3e} (limit {tolerance:.3e})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. noise variance contracts

fn criterion_3(_: &mut Audit) -> Outcome {
    const SAMPLES: usize = 100_000;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for &(n, t, sigma) in &[(10usize, 10usize, 8.0f64), (10, 4, 2.0), (50, 25, 4.0)] {
        let params = PrivacyParams::gaussian(sigma, 1.0).with_trust(t, n);
        let sums: Vec<f64> = (0..SAMPLES)
            .map(|_| {
                (0..n)
                    .map(|_| trust_scaled_gaussian(&params, &mut rng).unwrap().value)
                    .sum()
            })
            .collect();
        let expected = n as f64 * sigma * sigma / (t - 1) as f64;
        let rel = (sample_variance(&sums) / expected - 1.0).abs();
        worst = worst.max(rel);
        lines.push(format!("gauss n={n} t={t} {rel:.3}"));
    }
    for &(t, epsilon, sensitivity) in &[(2usize, 0.5f64, 1.0f64), (5, 0.5, 1.0), (10, 1.0, 2.0)] {
        let sums: Vec<f64> = (0..SAMPLES)
            .map(|_| {
                (0..t - 1)
                    .map(|_| {
                        gamma_share_noise(epsilon, sensitivity, t, &mut rng)
                            .unwrap()
                            .value
                    })
                    .sum()
            })
            .collect();
        let expected = 2.0 * (sensitivity / epsilon).powi(2);
        let rel = (sample_variance(&sums) / expected - 1.0).abs();
        worst = worst.max(rel);
        lines.push(format!("gamma t={t} {rel:.3}"));
    }
    outcome(
        worst <= 0.05,
        format!(
            "worst relative variance error {worst:.4} (limit 0.05): {}",
            lines.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. federation equals centralization without privacy

/// Reference ID3 over a centralized dataset with the same stopping and
/// tie-breaking rules as the federated trainer in mode `none`.
fn id3(
    data: &CategoricalDataset,
    rows: &[usize],
    features: &[usize],
    depth: usize,
    fallback: u32,
) -> TreeNode {
    let k = data.n_classes();
    let mut class_counts = vec![0usize; k];
    for &r in rows {
        class_counts[data.labels[r] as usize] += 1;
    }
    let majority = |counts: &[usize], fallback: u32| {
        let mut best = 0;
        for c in 1..counts.len() {
            if counts[c] > counts[best] {
                best = c;
            }
        }
        if counts[best] == 0 {
            fallback
        } else {
            best as u32
        }
    };
    if features.is_empty() || depth == 0 || rows.is_empty() {
        return TreeNode::Leaf {
            label: majority(&class_counts, fallback),
        };
    }
    let mut best: Option<(usize, f64)> = None;
    for &f in features {
        let vocab = data.vocabularies[f].len();
        let mut by_value = vec![vec![0usize; k]; vocab];
        for &r in rows {
            by_value[data.rows[r][f] as usize][data.labels[r] as usize] += 1;
        }
        let mut score = 0.0;
        for counts in &by_value {
            let total: usize = counts.iter().sum();
            for &c in counts.iter().filter(|&&c| c > 0) {
                score += c as f64 * (c as f64 / total as f64).ln();
            }
        }
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((f, score));
        }
    }
    let (feature, _) = best.expect("features is non-empty");
    let label = majority(&class_counts, fallback);
    let remaining: Vec<usize> = features.iter().copied().filter(|&f| f != feature).collect();
    let children = (0..data.vocabularies[feature].len())
        .map(|v| {
            let subset: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| data.rows[r][feature] == v as u32)
                .collect();
            id3(data, &subset, &remaining, depth - 1, label)
        })
        .collect();
    TreeNode::Split {
        feature,
        majority: label,
        children,
    }
}

fn exact_session(n: usize, shards: Vec<PartyData>) -> Session {
    let mut cfg = SessionConfig::new(n, n, PrivacyMode::None);
    cfg.backend = CryptoBackend::Paillier { key_bits: 256 };
    cfg.seed = 4;
    Session::in_proc(cfg, shards).expect("session")
}

fn numeric_shards(data: &NumericDataset, n: usize, seed: u64) -> Vec<NumericDataset> {
    partition(data.n_rows(), n, seed)
        .expect("partition")
        .shards
        .iter()
        .map(|rows| data.subset(rows))
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_4(_: &mut Audit) -> Outcome {
    const N: usize = 10;
    let tolerance = N as f64 * 2f64.powi(-32);

    let data = synth_categorical(&CategoricalSynthConfig {
        rows: 2000,
        seed: 4,
        ..Default::default()
    });
    let plan = partition(data.n_rows(), N, 4).expect("partition");
    let shards = plan
        .shards
        .iter()
        .map(|rows| PartyData::Categorical(data.subset(rows)))
        .collect();
    let mut session = exact_session(N, shards);
    let hyper = DtHyper::new(1.0);
    let federated = dt_train(&mut session, &data, &hyper).expect("dt");
    session.shutdown();
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let features: Vec<usize> = (0..data.n_features()).collect();
    let central = id3(&data, &all, &features, hyper.depth(data.n_features()), 0);
    let trees_equal = federated.root == central;

    let linear = synth_linear(
        &LinearSynthConfig {
            dim: 20,
            ..Default::default()
        },
        400,
        4,
    );
    let svm_shards = numeric_shards(&linear, N, 5);
    let svm_hyper = SvmHyper {
        epochs: 10,
        epochs_per_query: 10,
        ..SvmHyper::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let w0: Vec<f64> = (0..20).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut session = exact_session(
        N,
        svm_shards.iter().cloned().map(PartyData::Numeric).collect(),
    );
    let federated_svm = session
        .run_round(
            QueryPayload::TrainSvm {
                weights: ParamVector::new(w0.clone()),
                hyper: svm_hyper.clone(),
            },
            None,
            Vec::new(),
        )
        .expect("svm round");
    session.shutdown();
    let mut central_svm = vec![0.0; w0.len()];
    for shard in &svm_shards {
        let clipped = svm::clip_features(shard, svm_hyper.clip);
        let update = svm::local_steps(&w0, &clipped, &svm_hyper, None, &mut rng).expect("steps");
        central_svm
            .iter_mut()
            .zip(&update.params)
            .for_each(|(a, b)| *a += b);
    }
    let svm_err = max_abs_diff(&federated_svm, &central_svm);

    let protos = synth_prototypes(
        &PrototypeSynthConfig {
            dim: 12,
            n_classes: 3,
            ..Default::default()
        },
        300,
        4,
    );
    let layers = vec![12, 8, 3];
    let mlp_hyper = MlpHyper {
        batch_rate: 0.3,
        epochs: 1,
        ..MlpHyper::default()
    };
    let init = mlp::MlpModel::init(&layers, 4);
    let mlp_shards = numeric_shards(&protos, N, 6);
    let mut session = exact_session(
        N,
        mlp_shards.iter().cloned().map(PartyData::Numeric).collect(),
    );
    let seed = session.config().seed;
    let federated_mlp = session
        .run_round(
            QueryPayload::TrainMlp {
                layers: layers.clone(),
                params: init.params.clone(),
                hyper: mlp_hyper.clone(),
            },
            None,
            Vec::new(),
        )
        .expect("mlp round");
    session.shutdown();
    let mut central_mlp = vec![0.0; init.params.len()];
    for (i, shard) in mlp_shards.iter().enumerate() {
        // parties draw their batches from their own stream, indexed from 1
        let mut party = party_rng(seed, i + 1);
        let update = mlp::local_epoch(
            &layers,
            &init.params.values,
            shard,
            &mlp_hyper,
            None,
            &mut party,
        )
        .expect("epoch");
        central_mlp
            .iter_mut()
            .zip(&update.params)
            .for_each(|(a, b)| *a += b);
    }
    let mlp_err = max_abs_diff(&federated_mlp, &central_mlp);

    outcome(
        trees_equal && svm_err <= tolerance && mlp_err <= tolerance,
        format!(
            "tree identical: {trees_equal} ({} nodes); svm round error {svm_err:.2e}; mlp round error {mlp_err:.2e} (limit {tolerance:.2e})",
            federated.root.n_nodes()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. DT accuracy against budget

fn record_dt(audit: &mut Audit, records: &[RunRecord]) {
    for r in records {
        if let Some(eps) = r.point.epsilon {
            audit.dt.push((eps, r.ledgers.clone()));
        }
    }
}

fn criterion_5(audit: &mut Audit) -> Outcome {
    let started = Instant::now();
    let mut cfg = preset("dt-budget").expect("preset");
    cfg.modes = vec![PrivacyMode::Hybrid, PrivacyMode::Local];
    cfg.epsilons = vec![0.4, 0.5, 1.0, 2.0];
    cfg.key_bits = 256;
    let records = run(&cfg);
    record_dt(audit, &records);
    let secs = started.elapsed().as_secs_f64();
    if let Some(e) = any_failed(&records) {
        return outcome(false, e);
    }
    let mut pass = secs < 600.0;
    let mut cells = Vec::new();
    for &eps in &cfg.epsilons {
        let at = |mode: PrivacyMode| {
            mean_f1(&records, |r| {
                r.point.mode == mode && r.point.epsilon == Some(eps)
            })
        };
        let (hybrid, local) = (at(PrivacyMode::Hybrid), at(PrivacyMode::Local));
        pass &= hybrid > local && hybrid >= 0.75;
        cells.push(format!("eps {eps}: hybrid {hybrid:.3} local {local:.3}"));
    }
    outcome(
        pass,
        format!(
            "{} [{}]; {secs:.0} s (limit 600 s)",
            records[0].row.dataset,
            cells.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. DT party scaling

fn criterion_6(audit: &mut Audit) -> Outcome {
    let mut cfg = preset("dt-parties").expect("preset");
    cfg.n_parties = vec![10, 50];
    let records = run(&cfg);
    record_dt(audit, &records);
    if let Some(e) = any_failed(&records) {
        return outcome(false, e);
    }
    let at = |mode: PrivacyMode, n: usize| {
        mean_f1(&records, |r| r.point.mode == mode && r.point.n_parties == n)
    };
    let (h10, h50) = (at(PrivacyMode::Hybrid, 10), at(PrivacyMode::Hybrid, 50));
    let (l10, l50) = (at(PrivacyMode::Local, 10), at(PrivacyMode::Local, 50));
    outcome(
        (h50 - h10).abs() <= 0.05 && l10 - l50 >= 0.10,
        format!(
            "hybrid n=10 {h10:.3} n=50 {h50:.3} (|diff| {:.3} <= 0.05); local n=10 {l10:.3} n=50 {l50:.3} (drop {:.3} >= 0.10)",
            (h50 - h10).abs(),
            l10 - l50
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. trust sweep monotonicity

fn criterion_7(_: &mut Audit) -> Outcome {
    let mut violations = Vec::new();
    let mut checked = 0usize;
    let cases: Vec<(Mechanism, Mechanism, PrivacyParams)> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&s| {
            (
                Mechanism::Gaussian,
                Mechanism::Gaussian,
                PrivacyParams::gaussian(s, 4.0),
            )
        })
        .chain([0.1, 0.5, 2.0].iter().map(|&e| {
            (
                Mechanism::GammaShare,
                Mechanism::Laplace,
                PrivacyParams::laplace(e, 1.0),
            )
        }))
        .collect();
    for n in [2usize, 5, 10, 50] {
        for (hybrid_mech, local_mech, params) in &cases {
            let local = SessionConfig::new(n, n, PrivacyMode::Local)
                .noise(*local_mech, params.clone())
                .expect("local noise")
                .std_dev()
                .expect("std");
            let mut previous = f64::INFINITY;
            for t in 2..=n {
                let std = SessionConfig::new(n, t, PrivacyMode::Hybrid)
                    .noise(*hybrid_mech, params.clone())
                    .expect("hybrid noise")
                    .std_dev()
                    .expect("std");
                checked += 1;
                if std > previous {
                    violations.push(format!("{hybrid_mech:?} n={n} t={t} grows"));
                }
                if t == 2 && std != local {
                    violations.push(format!("{hybrid_mech:?} n={n} t=2 {std} != local {local}"));
                }
                previous = std;
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("{checked} (mechanism, n, t) points; violations: {violations:?}"),
    )
}

// ---------------------------------------------------------------------------
// 8. SVM

fn record_gaussian(audit: &mut Audit, records: &[RunRecord], sigma: f64, releases: usize) {
    for r in records {
        let expected = if r.point.mode == PrivacyMode::None {
            0
        } else {
            releases
        };
        audit
            .gaussian
            .push((sigma as u64, expected, r.ledgers.clone()));
    }
}

fn criterion_8(audit: &mut Audit) -> Outcome {
    let mut cfg = preset("svm-sigma4").expect("preset");
    cfg.key_bits = 256;
    let hyper = cfg.svm_hyper();
    let records = run(&cfg);
    record_gaussian(audit, &records, hyper.sigma, hyper.epochs);
    if let Some(e) = any_failed(&records) {
        return outcome(false, e);
    }
    let of = |mode: PrivacyMode| mean_f1(&records, |r| r.point.mode == mode);
    let none_min = records
        .iter()
        .filter(|r| r.point.mode == PrivacyMode::None)
        .map(|r| r.row.micro_f1)
        .fold(f64::INFINITY, f64::min);
    let (hybrid, local, central) = (
        of(PrivacyMode::Hybrid),
        of(PrivacyMode::Local),
        of(PrivacyMode::Central),
    );
    let rho = records
        .iter()
        .find(|r| r.point.mode == PrivacyMode::Hybrid)
        .and_then(|r| r.ledgers.first())
        .map(|l| l.total_rho())
        .unwrap_or(f64::NAN);
    let eps = records
        .iter()
        .find(|r| r.point.mode == PrivacyMode::Hybrid)
        .map(|r| r.row.ledger_eps)
        .unwrap_or(f64::NAN);
    outcome(
        none_min >= 0.95 && (hybrid - central).abs() <= 0.05 && hybrid > local,
        format!(
            "{} rounds; none min {none_min:.3} (>= 0.95); hybrid {hybrid:.3} central {central:.3} local {local:.3}; ledger rho {rho} -> eps {eps:.3} at delta {}",
            hyper.rounds(),
            cfg.delta
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. MLP

fn criterion_9(audit: &mut Audit) -> Outcome {
    let cfg = preset("cnn-sigma8").expect("preset");
    let hyper = cfg.mlp_hyper();
    let records = run(&cfg);
    record_gaussian(
        audit,
        &records,
        hyper.sigma,
        hyper.epochs * hyper.batches_per_epoch(),
    );
    if let Some(e) = any_failed(&records) {
        return outcome(false, e);
    }
    let of = |mode: PrivacyMode| mean_f1(&records, |r| r.point.mode == mode);
    let (none, hybrid, local) = (
        of(PrivacyMode::None),
        of(PrivacyMode::Hybrid),
        of(PrivacyMode::Local),
    );
    outcome(
        none >= 0.85 && hybrid - local >= 0.05,
        format!(
            "none {none:.3} (>= 0.85); hybrid {hybrid:.3} local {local:.3} (gap {:.3} >= 0.05)",
            hybrid - local
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. gradient checks

const FD_STEP: f64 = 1e-5;
const GRAD_FLOOR: f64 = 1e-4;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn mlp_instance(rng: &mut ChaCha20Rng) -> f64 {
    let depth = rng.random_range(1..=3);
    let mut layers = vec![rng.random_range(2..10)];
    for _ in 0..depth {
        layers.push(rng.random_range(2..12));
    }
    let classes = rng.random_range(2..6);
    *layers.last_mut().expect("non-empty") = classes;
    let rows = rng.random_range(1..20);
    let x = Array2::from_shape_fn((rows, layers[0]), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<i32> = (0..rows)
        .map(|_| rng.random_range(0..classes as i32))
        .collect();
    let mut params = mlp::MlpModel::init(&layers, rng.random()).params.values;
    params
        .iter_mut()
        .for_each(|p| *p += rng.random_range(-0.3..0.3));
    let (_, grad) = mlp::loss_and_gradient(&layers, &params, x.view(), &labels).expect("gradient");
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let i = rng.random_range(0..params.len());
        let mut p = params.clone();
        p[i] += FD_STEP;
        let up = mlp::loss(&layers, &p, x.view(), &labels).expect("loss");
        p[i] -= 2.0 * FD_STEP;
        let down = mlp::loss(&layers, &p, x.view(), &labels).expect("loss");
        worst = worst.max(relative_error(grad[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn svm_instance(rng: &mut ChaCha20Rng) -> f64 {
    let dim = rng.random_range(2..30);
    let rows = rng.random_range(1..40);
    let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<i32> = (0..rows)
        .map(|_| if rng.random() { 1 } else { -1 })
        .collect();
    let data = NumericDataset::new(x, labels);
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lambda = rng.random_range(1e-4..1.0);
    let grad = svm::subgradient(&w, &data, lambda).expect("subgradient");
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let i = rng.random_range(0..dim);
        let mut p = w.clone();
        p[i] += FD_STEP;
        let up = svm::objective(&p, &data, lambda).expect("objective");
        p[i] -= 2.0 * FD_STEP;
        let down = svm::objective(&p, &data, lambda).expect("objective");
        worst = worst.max(relative_error(grad[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn criterion_10(_: &mut Audit) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mlp_worst = (0..50).map(|_| mlp_instance(&mut rng)).fold(0.0, f64::max);
    let svm_worst = (0..50).map(|_| svm_instance(&mut rng)).fold(0.0, f64::max);
    outcome(
        mlp_worst <= 1e-5 && svm_worst <= 1e-5,
        format!("50 instances each; worst relative error mlp {mlp_worst:.2e}, svm {svm_worst:.2e} (limit 1e-5)"),
    )
}

// ---------------------------------------------------------------------------
// 11. budget audit

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn criterion_11(audit: &mut Audit) -> Outcome {
    if audit.dt.is_empty() {
        let mut cfg = preset("dt-budget").expect("preset");
        cfg.modes = vec![PrivacyMode::Hybrid, PrivacyMode::Local];
        cfg.epsilons = vec![0.05, 0.5, 2.0];
        cfg.seeds = vec![0];
        cfg.backend = hybridfl::experiment::BackendKind::Plaintext;
        let records = run(&cfg);
        record_dt(audit, &records);
    }
    if audit.gaussian.is_empty() {
        let mut cfg = preset("svm-sigma4").expect("preset");
        cfg.backend = hybridfl::experiment::BackendKind::Plaintext;
        cfg.seeds = vec![0];
        if let hybridfl::experiment::DatasetSpec::LinearSynth {
            train_rows,
            test_rows,
            generator,
        } = &mut cfg.dataset
        {
            *train_rows = 600;
            *test_rows = 100;
            generator.dim = 20;
        }
        let hyper = cfg.svm_hyper();
        let records = run(&cfg);
        record_gaussian(audit, &records, hyper.sigma, hyper.epochs);
    }
    let mut dt_violations = 0usize;
    let mut dt_ledgers = 0usize;
    let mut tightest = f64::INFINITY;
    for (eps, ledgers) in &audit.dt {
        for ledger in ledgers {
            dt_ledgers += 1;
            let spent = ledger.total_epsilon_exact();
            if spent > exact(*eps) || spent == BigRational::from_integer(0.into()) {
                dt_violations += 1;
            }
            tightest = tightest.min(eps - ledger.total_epsilon());
        }
    }
    let mut rho_mismatches = 0usize;
    let mut gaussian_ledgers = 0usize;
    for (sigma, releases, ledgers) in &audit.gaussian {
        let per_release = BigRational::new(1.into(), (2 * sigma * sigma).into());
        let expected = per_release * BigRational::from_integer((*releases).into());
        for ledger in ledgers {
            gaussian_ledgers += 1;
            if ledger.total_rho_exact() != expected {
                rho_mismatches += 1;
            }
        }
    }
    outcome(
        dt_ledgers > 0 && gaussian_ledgers > 0 && dt_violations == 0 && rho_mismatches == 0,
        format!(
            "{dt_ledgers} DT party ledgers, {dt_violations} over budget (smallest slack {tightest:.2e}); {gaussian_ledgers} Gaussian ledgers, {rho_mismatches} with rho != releases/(2 sigma^2)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 12. determinism

fn determinism_configs() -> Vec<ExperimentConfig> {
    let dt = ExperimentConfig::from_toml(
        r#"
name = "determinism-dt"
algorithm = "dt"
modes = ["hybrid", "local"]
epsilons = [0.5]
n_parties = [5]
trust = [3]
seeds = [0, 1]
backend = "paillier"
key_bits = 256
deterministic = true

[dataset]
kind = "categorical_synth"
rows = 1000
"#,
    )
    .expect("dt config");
    let mut svm = preset("svm-sigma4").expect("preset");
    svm.key_bits = 256;
    svm.seeds = vec![3];
    svm.deterministic = true;
    if let hybridfl::experiment::DatasetSpec::LinearSynth {
        train_rows,
        test_rows,
        generator,
    } = &mut svm.dataset
    {
        *train_rows = 500;
        *test_rows = 100;
        generator.dim = 20;
    }
    if let Some(h) = svm.svm.as_mut() {
        h.epochs = 20;
    }
    vec![dt, svm]
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let rows: Vec<_> = run(cfg).into_iter().map(|r| r.row).collect();
    let mut out = Vec::new();
    write_csv(&mut out, &rows).expect("csv");
    out
}

fn criterion_12(_: &mut Audit) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for cfg in determinism_configs() {
        let first = csv_bytes(&cfg);
        let second = csv_bytes(&cfg);
        let same = first == second;
        pass &= same;
        details.push(format!(
            "{}: {} bytes, identical {same}",
            cfg.name,
            first.len()
        ));
    }
    outcome(pass, details.join("; "))
}

// ---------------------------------------------------------------------------

type Criterion = fn(&mut Audit) -> Outcome;

fn main() {
    let criteria: [(usize, Criterion); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let selected: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut audit = Audit::default();
    let mut results = BTreeMap::new();
    for (id, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let result = check(&mut audit);
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2}: {verdict}  {} [{:.1} s]",
            result.detail,
            started.elapsed().as_secs_f64()
        );
        results.insert(id, result.pass);
    }
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, &p)| !p)
        .map(|(&id, _)| id)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
