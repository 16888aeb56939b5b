use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use hybridfl::data::{
    partition, synth_categorical, CategoricalDataset, CategoricalSchema, CategoricalSynthConfig,
};
use hybridfl::experiment::{read_csv_file, CSV_HEADER};
use hybridfl::federation::{CryptoBackend, PartyData, PrivacyMode, Session, SessionConfig};
use hybridfl::thpaillier::{combine, encrypt, partial_decrypt, KeyShare, PublicKey};
use hybridfl::trainers::{dt_train, load_model, DtHyper, SavedModel};
use num_bigint::BigUint;
use rand::SeedableRng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridfl"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn hybridfl");
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn to_csv(ds: &CategoricalDataset) -> String {
    let mut out = String::new();
    for (row, &label) in ds.rows.iter().zip(&ds.labels) {
        for (f, &v) in row.iter().enumerate() {
            out.push_str(&ds.vocabularies[f][v as usize]);
            out.push(',');
        }
        out.push_str(&ds.classes[label as usize]);
        out.push('\n');
    }
    out
}

fn schema_of(ds: &CategoricalDataset) -> CategoricalSchema {
    CategoricalSchema {
        has_header: false,
        class_column: None,
        feature_names: Some(ds.feature_names.clone()),
        vocabularies: Some(ds.vocabularies.clone()),
        classes: Some(ds.classes.clone()),
    }
}

#[test]
fn keygen_writes_one_public_file_and_a_share_per_party() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .args([
                "keygen",
                "--parties",
                "5",
                "--trust",
                "3",
                "--bits",
                "256",
                "--seed",
                "1",
                "--out",
            ])
            .arg(dir.path()),
    );
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "public.key",
            "share-1.key",
            "share-2.key",
            "share-3.key",
            "share-4.key",
            "share-5.key"
        ]
    );
    let pk = PublicKey::from_bytes(&std::fs::read(dir.path().join("public.key")).unwrap()).unwrap();
    let shares: Vec<KeyShare> = (1..=5)
        .map(|i| {
            KeyShare::from_bytes(&std::fs::read(dir.path().join(format!("share-{i}.key"))).unwrap())
                .unwrap()
        })
        .collect();
    assert_eq!(pk.threshold(), 3);
    let m = BigUint::from(424_242u32);
    let c = encrypt(&pk, &m, &mut rand_chacha::ChaCha20Rng::seed_from_u64(0)).unwrap();
    for a in 0..5 {
        for b in a + 1..5 {
            for d in b + 1..5 {
                let parts: Vec<_> = [a, b, d]
                    .iter()
                    .map(|&i| partial_decrypt(&shares[i], &c))
                    .collect();
                assert_eq!(combine(&pk, &parts).unwrap(), m, "subset {a} {b} {d}");
            }
            let pair: Vec<_> = [a, b]
                .iter()
                .map(|&i| partial_decrypt(&shares[i], &c))
                .collect();
            assert!(combine(&pk, &pair).is_err());
        }
    }
}

const SMALL_DT: &str = r#"
name = "cli-dt"
algorithm = "dt"
modes = ["hybrid", "none"]
epsilons = [1.0]
n_parties = [4]
seeds = [0, 1]
backend = "plaintext"
deterministic = true

[dataset]
kind = "categorical_synth"
rows = 800
"#;

#[test]
fn run_writes_the_metrics_csv_and_report_summarizes_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(&dir.path().join("dt.toml"), SMALL_DT);
    let csv = dir.path().join("out.csv");
    let models = dir.path().join("models");
    run_ok(
        bin()
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&csv)
            .arg("--model-dir")
            .arg(&models),
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv_file(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.micro_f1)));
    assert_eq!(std::fs::read_dir(&models).unwrap().count(), 4);

    let json = dir.path().join("summary.json");
    let out = run_ok(bin().arg("report").arg(&csv).arg("--json").arg(&json));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("hybrid") && text.contains("none"), "{text}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(summary.is_object() || summary.is_array());

    // stdout output is the same bytes as the file for a deterministic config
    let out = run_ok(bin().arg("run").arg("--config").arg(&config));
    assert_eq!(out.stdout, std::fs::read(&csv).unwrap());
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_trust = write(
        &dir.path().join("bad.toml"),
        &SMALL_DT.replace("n_parties = [4]", "n_parties = [4]\ntrust = [1]"),
    );
    let unknown_key = write(
        &dir.path().join("unknown.toml"),
        &format!("colour = 3\n{SMALL_DT}"),
    );
    for args in [
        vec![
            "run".to_string(),
            "--config".into(),
            bad_trust.display().to_string(),
        ],
        vec![
            "run".to_string(),
            "--config".into(),
            unknown_key.display().to_string(),
        ],
        vec![
            "run".to_string(),
            "--config".into(),
            dir.path().join("missing.toml").display().to_string(),
        ],
        vec![
            "run".to_string(),
            "--preset".into(),
            "no-such-preset".into(),
        ],
        vec![
            "keygen".to_string(),
            "--parties".into(),
            "3".into(),
            "--trust".into(),
            "4".into(),
            "--out".into(),
            dir.path().display().to_string(),
        ],
        vec!["frobnicate".to_string()],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn an_aggregator_without_parties_fails_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        &dir.path().join("svm.toml"),
        r#"
algorithm = "svm"
modes = ["none"]
sigmas = [4.0]
n_parties = [2]
seeds = [0]

[dataset]
kind = "linear_synth"
train_rows = 100
test_rows = 10
dim = 5
"#,
    );
    let out = bin()
        .args([
            "aggregate",
            "--dim",
            "5",
            "--accept-timeout",
            "1",
            "--listen",
        ])
        .arg(format!("127.0.0.1:{}", free_port()))
        .arg("--config")
        .arg(&config)
        .arg("--model-out")
        .arg(dir.path().join("m.model"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bench_crypto_reports_per_element_latencies() {
    let out = run_ok(bin().args(["bench-crypto", "--bits", "256", "--samples", "4", "--json"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in [
        "encrypt_ms",
        "partial_decrypt_ms",
        "combine_ms",
        "keygen_ms",
    ] {
        assert!(v[key].as_f64().unwrap() >= 0.0, "{key}");
    }
    assert_eq!(v["threshold"], 2);
}

#[test]
fn socket_deployment_matches_in_process_training_and_predict_round_trips() {
    const N: usize = 3;
    let dir = tempfile::tempdir().unwrap();
    let data = synth_categorical(&CategoricalSynthConfig {
        rows: 600,
        seed: 9,
        ..Default::default()
    });
    let schema_path = write(
        &dir.path().join("schema.json"),
        &serde_json::to_string(&schema_of(&data)).unwrap(),
    );
    let full = write(&dir.path().join("all.csv"), &to_csv(&data));
    let plan = partition(data.n_rows(), N, 2).unwrap();
    let shard_files: Vec<PathBuf> = plan
        .shards
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            write(
                &dir.path().join(format!("shard-{}.csv", i + 1)),
                &to_csv(&data.subset(rows)),
            )
        })
        .collect();
    let keys = dir.path().join("keys");
    run_ok(
        bin()
            .args([
                "keygen",
                "--parties",
                "3",
                "--trust",
                "2",
                "--bits",
                "256",
                "--seed",
                "5",
                "--out",
            ])
            .arg(&keys),
    );
    let config = write(
        &dir.path().join("deploy.toml"),
        r#"
algorithm = "dt"
modes = ["none"]
epsilons = [1.0]
n_parties = [3]
trust = [2]
seeds = [0]

[dataset]
kind = "categorical_synth"
"#,
    );
    let address = format!("127.0.0.1:{}", free_port());
    let model = dir.path().join("tree.model");
    let aggregator = bin()
        .arg("aggregate")
        .arg("--config")
        .arg(&config)
        .arg("--listen")
        .arg(&address)
        .arg("--public")
        .arg(keys.join("public.key"))
        .arg("--schema")
        .arg(&schema_path)
        .arg("--model-out")
        .arg(&model)
        .args(["--accept-timeout", "60"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let parties: Vec<_> = shard_files
        .iter()
        .enumerate()
        .map(|(i, shard)| {
            bin()
                .arg("party")
                .arg("--index")
                .arg((i + 1).to_string())
                .arg("--connect")
                .arg(&address)
                .arg("--share")
                .arg(keys.join(format!("share-{}.key", i + 1)))
                .arg("--data")
                .arg(shard)
                .arg("--schema")
                .arg(&schema_path)
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    let agg = aggregator.wait_with_output().unwrap();
    assert!(
        agg.status.success(),
        "aggregator: {}",
        String::from_utf8_lossy(&agg.stderr)
    );
    for p in parties {
        let out = p.wait_with_output().unwrap();
        assert!(
            out.status.success(),
            "party: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stderr).contains("encryptions"));
    }

    let (saved, _, ledger) = load_model(&model).unwrap();
    let SavedModel::Tree(tree) = saved else {
        panic!("expected a tree")
    };
    assert_eq!(ledger.epsilon, 0.0);

    let shards = plan
        .shards
        .iter()
        .map(|rows| PartyData::Categorical(data.subset(rows)))
        .collect();
    let mut cfg = SessionConfig::new(N, 2, PrivacyMode::None);
    cfg.backend = CryptoBackend::Plaintext;
    let mut session = Session::in_proc(cfg, shards).unwrap();
    let local = dt_train(&mut session, &data, &DtHyper::new(1.0)).unwrap();
    session.shutdown();
    assert_eq!(tree.root, local.root);

    let preds = dir.path().join("preds.csv");
    let out = run_ok(
        bin()
            .arg("predict")
            .arg("--model")
            .arg(&model)
            .arg("--data")
            .arg(&full)
            .arg("--out")
            .arg(&preds),
    );
    let predicted = local.predict_all(&data);
    let expected = predicted
        .iter()
        .zip(&data.labels)
        .filter(|(a, b)| a == b)
        .count() as f64
        / data.n_rows() as f64;
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains(&format!("accuracy {expected:.6}")),
        "{stderr} vs {expected}"
    );
    let lines: Vec<String> = std::fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(lines[0], "row,label,prediction");
    assert_eq!(lines.len(), data.n_rows() + 1);
    assert_eq!(
        lines[1],
        format!(
            "0,{},{}",
            data.classes[data.labels[0] as usize], data.classes[predicted[0] as usize]
        )
    );
}
