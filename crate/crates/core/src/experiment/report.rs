use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::{read_csv_file, MetricRow};
use super::ExperimentError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

/// Rows sharing every coordinate except the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub algorithm: String,
    pub mode: String,
    pub dataset: String,
    pub n_parties: usize,
    pub trust_t: usize,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub micro_f1: Stat,
    pub macro_f1: Stat,
    pub accuracy: Stat,
    pub ledger_eps: Stat,
    pub ledger_delta: f64,
    pub time_ms: Stat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

type GroupKey = (String, String, String, usize, usize, String, String);

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn key(r: &MetricRow) -> GroupKey {
    (
        r.algorithm.clone(),
        r.dataset.clone(),
        r.mode.clone(),
        r.n_parties,
        r.trust_t,
        fmt_opt(r.epsilon),
        fmt_opt(r.sigma),
    )
}

impl Summary {
    pub fn from_rows(rows: &[MetricRow]) -> Self {
        let mut groups: BTreeMap<GroupKey, Vec<&MetricRow>> = BTreeMap::new();
        for r in rows {
            groups.entry(key(r)).or_default().push(r);
        }
        let groups = groups
            .into_values()
            .map(|members| {
                let ok: Vec<&&MetricRow> = members.iter().filter(|r| !r.failed()).collect();
                let col = |f: fn(&MetricRow) -> f64| {
                    Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                let first = members[0];
                GroupSummary {
                    algorithm: first.algorithm.clone(),
                    mode: first.mode.clone(),
                    dataset: first.dataset.clone(),
                    n_parties: first.n_parties,
                    trust_t: first.trust_t,
                    epsilon: first.epsilon,
                    sigma: first.sigma,
                    runs: members.len(),
                    failures: members.len() - ok.len(),
                    micro_f1: col(|r| r.micro_f1),
                    macro_f1: col(|r| r.macro_f1),
                    accuracy: col(|r| r.accuracy),
                    ledger_eps: col(|r| r.ledger_eps),
                    ledger_delta: ok.iter().map(|r| r.ledger_delta).fold(0.0, f64::max),
                    time_ms: col(|r| {
                        r.t_compute_ms + r.t_encrypt_ms + r.t_aggregate_ms + r.t_decrypt_ms
                    }),
                }
            })
            .collect();
        Summary { groups }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// A per-group table followed by a mode comparison of mean micro-F1.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<18} {:<8} {:>4} {:>4} {:>7} {:>6} {:>5} {:>17} {:>17} {:>10} {:>12}",
            "algo",
            "dataset",
            "mode",
            "n",
            "t",
            "eps",
            "sigma",
            "runs",
            "micro_f1",
            "macro_f1",
            "ledger_eps",
            "time_ms"
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{:<8} {:<18} {:<8} {:>4} {:>4} {:>7} {:>6} {:>5} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4} {:>10.4} {:>12.1}{}",
                g.algorithm,
                g.dataset,
                g.mode,
                g.n_parties,
                g.trust_t,
                fmt_opt(g.epsilon),
                fmt_opt(g.sigma),
                g.runs,
                g.micro_f1.mean,
                g.micro_f1.std,
                g.macro_f1.mean,
                g.macro_f1.std,
                g.ledger_eps.mean,
                g.time_ms.mean,
                if g.failures > 0 {
                    format!("  ({} failed)", g.failures)
                } else {
                    String::new()
                }
            );
        }
        let modes = ["hybrid", "local", "central", "none"];
        let mut table: BTreeMap<(String, String, String, String), BTreeMap<&str, f64>> =
            BTreeMap::new();
        for g in &self.groups {
            if let Some(m) = modes.iter().find(|m| **m == g.mode) {
                let coord = if g.mode == "central" {
                    "-".to_string()
                } else {
                    format!("n={} t={}", g.n_parties, g.trust_t)
                };
                table
                    .entry((
                        g.algorithm.clone(),
                        g.dataset.clone(),
                        fmt_opt(g.epsilon.or(g.sigma)),
                        coord,
                    ))
                    .or_default()
                    .insert(m, g.micro_f1.mean);
            }
        }
        if !table.is_empty() {
            let _ = writeln!(out, "\nmean micro-F1 by mode");
            let _ = writeln!(
                out,
                "{:<8} {:<18} {:>7} {:<12} {:>8} {:>8} {:>8} {:>8}",
                "algo", "dataset", "budget", "parties", "hybrid", "local", "central", "none"
            );
            for ((algo, dataset, budget, coord), by_mode) in &table {
                let cell = |m: &str| {
                    by_mode
                        .get(m)
                        .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
                };
                let _ = writeln!(
                    out,
                    "{:<8} {:<18} {:>7} {:<12} {:>8} {:>8} {:>8} {:>8}",
                    algo,
                    dataset,
                    budget,
                    coord,
                    cell("hybrid"),
                    cell("local"),
                    cell("central"),
                    cell("none")
                );
            }
        }
        out
    }
}

pub fn report(paths: &[&Path]) -> Result<Summary, ExperimentError> {
    if paths.is_empty() {
        return Err(ExperimentError::Config(
            "report needs at least one CSV".into(),
        ));
    }
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_csv_file(p)?);
    }
    Ok(Summary::from_rows(&rows))
}
