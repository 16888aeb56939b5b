use std::path::Path;

use ndarray::Array2;

use super::{io_err, DataError, NumericDataset};

/// Loads `label idx:val ...` text with 1-based indices. Binary labels map to
/// `-1/+1` (`0` is read as `-1`). Without `dim`, the largest index seen sets
/// the dimension.
pub fn load_libsvm(path: &Path, dim: Option<usize>) -> Result<NumericDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_libsvm(&text, dim)
}

pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<NumericDataset, DataError> {
    let mut labels = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            log::warn!("libsvm line {line}: empty, skipped");
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_text = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_text.parse().map_err(|_| DataError::Parse {
            line,
            message: format!("bad label {label_text:?}"),
        })?;
        labels.push(if label > 0.0 { 1 } else { -1 });
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| DataError::Parse {
                line,
                message: format!("expected idx:val, found {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("bad index {idx:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("bad value {val:?}"),
            })?;
            if idx == 0 || !val.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("index must be 1-based and value finite: {tok:?}"),
                });
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(DataError::IndexOutOfDeclaredRange {
                        line,
                        index: idx,
                        dim: d,
                    });
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        entries.push(row);
    }
    let dim = dim.unwrap_or(max_index);
    let mut features = Array2::zeros((entries.len(), dim));
    for (r, row) in entries.iter().enumerate() {
        for &(c, v) in row {
            features[[r, c]] = v;
        }
    }
    Ok(NumericDataset::new(features, labels))
}
