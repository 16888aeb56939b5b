use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, DataError};

/// Rows of categorical value indices plus a class index per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    pub feature_names: Vec<String>,
    pub vocabularies: Vec<Vec<String>>,
    pub classes: Vec<String>,
    pub rows: Vec<Vec<u32>>,
    pub labels: Vec<u32>,
}

/// How to read a categorical CSV. With `vocabularies` set, parsing is strict
/// and unseen values are errors; otherwise vocabularies grow in
/// first-occurrence order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSchema {
    pub has_header: bool,
    /// Class column; the last column when unset.
    pub class_column: Option<usize>,
    pub feature_names: Option<Vec<String>>,
    pub vocabularies: Option<Vec<Vec<String>>>,
    pub classes: Option<Vec<String>>,
}

impl CategoricalDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.vocabularies.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        CategoricalDataset {
            feature_names: self.feature_names.clone(),
            vocabularies: self.vocabularies.clone(),
            classes: self.classes.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn class_distribution(&self) -> Vec<f64> {
        let n = self.n_rows().max(1) as f64;
        self.class_counts()
            .into_iter()
            .map(|c| c as f64 / n)
            .collect()
    }
}

struct Vocab {
    values: Vec<String>,
    frozen: bool,
}

impl Vocab {
    fn index(&mut self, value: &str) -> Option<u32> {
        if let Some(i) = self.values.iter().position(|v| v == value) {
            return Some(i as u32);
        }
        if self.frozen {
            return None;
        }
        self.values.push(value.to_string());
        Some(self.values.len() as u32 - 1)
    }
}

fn vocab(values: Option<&Vec<String>>) -> Vocab {
    match values {
        Some(v) => Vocab {
            values: v.clone(),
            frozen: true,
        },
        None => Vocab {
            values: Vec::new(),
            frozen: false,
        },
    }
}

pub fn load_csv_categorical(
    path: &Path,
    schema: &CategoricalSchema,
) -> Result<CategoricalDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv_categorical(&text, schema)
}

pub(crate) fn parse_csv_categorical(
    text: &str,
    schema: &CategoricalSchema,
) -> Result<CategoricalDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records().enumerate().peekable();
    let mut header: Option<Vec<String>> = None;
    if schema.has_header {
        if let Some((_, rec)) = records.next() {
            header = Some(rec?.iter().map(str::to_string).collect());
        }
    }
    let mut width = header.as_ref().map(Vec::len);
    let mut feature_vocabs: Vec<Vocab> = Vec::new();
    let mut class_vocab = vocab(schema.classes.as_ref());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut class_col = 0;

    for (i, rec) in records {
        let rec = rec?;
        let line = i + 1;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DataError::RaggedRow {
                line,
                expected,
                found: rec.len(),
            });
        }
        if feature_vocabs.is_empty() {
            class_col = schema.class_column.unwrap_or(expected - 1);
            feature_vocabs = (0..expected - 1)
                .map(|f| vocab(schema.vocabularies.as_ref().and_then(|v| v.get(f))))
                .collect();
        }
        let mut row = Vec::with_capacity(expected - 1);
        for (column, value) in rec.iter().enumerate() {
            if column == class_col {
                continue;
            }
            let f = row.len();
            let idx = feature_vocabs[f]
                .index(value)
                .ok_or_else(|| DataError::UnknownValue {
                    line,
                    column,
                    value: value.to_string(),
                })?;
            row.push(idx);
        }
        let label = class_vocab
            .index(&rec[class_col])
            .ok_or_else(|| DataError::UnknownValue {
                line,
                column: class_col,
                value: rec[class_col].to_string(),
            })?;
        rows.push(row);
        labels.push(label);
    }

    let n_features = feature_vocabs.len();
    let feature_names = schema
        .feature_names
        .clone()
        .unwrap_or_else(|| match &header {
            Some(h) => h
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != class_col)
                .map(|(_, n)| n.clone())
                .collect(),
            None => (0..n_features).map(|f| format!("f{f}")).collect(),
        });
    Ok(CategoricalDataset {
        feature_names,
        vocabularies: feature_vocabs.into_iter().map(|v| v.values).collect(),
        classes: class_vocab.values,
        rows,
        labels,
    })
}
