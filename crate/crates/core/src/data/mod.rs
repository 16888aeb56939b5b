//! Dataset loaders, horizontal partitioning and seed-deterministic
//! synthetic generators.

mod categorical;
mod idx;
mod libsvm;
mod manifest;
mod partition;
mod synth;

use std::path::PathBuf;

pub use categorical::{load_csv_categorical, CategoricalDataset, CategoricalSchema};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, load_idx_bytes};
pub use libsvm::{load_libsvm, parse_libsvm};
pub use manifest::{sha256_file, DatasetManifest, ManifestEntry};
pub use partition::{partition, train_test_split, PartitionPlan};
pub use synth::{
    nursery_schema, synth_categorical, synth_linear, synth_nursery, synth_prototypes,
    CategoricalSynthConfig, LinearSynthConfig, PrototypeSynthConfig, NURSERY_CLASSES,
};

use ndarray::{Array2, Axis};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: value {value:?} is not in the vocabulary of column {column}")]
    UnknownValue {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("line {line}: feature index {index} outside declared dimension {dim}")]
    IndexOutOfDeclaredRange {
        line: usize,
        index: usize,
        dim: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot split {rows} rows among {parties} parties")]
    TooManyParties { rows: usize, parties: usize },
    #[error("dataset {0:?} is not in the manifest")]
    UnknownDataset(String),
    #[error("checksum mismatch for {path:?}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("truncated input: {0}")]
    Truncated(&'static str),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dense real-valued features with integer labels (class index, or `-1/+1`
/// for binary tasks).
#[derive(Clone, Debug, PartialEq)]
pub struct NumericDataset {
    pub features: Array2<f64>,
    pub labels: Vec<i32>,
}

impl NumericDataset {
    pub fn new(features: Array2<f64>, labels: Vec<i32>) -> Self {
        assert_eq!(features.nrows(), labels.len(), "one label per row");
        NumericDataset { features, labels }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        NumericDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Number of classes for non-negative integer labels.
    pub fn n_classes(&self) -> usize {
        self.labels
            .iter()
            .map(|&l| l.max(0) as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Divides each column by its maximum absolute value (columns of zeros
    /// are left alone).
    pub fn scale_by_column_max(&mut self) {
        for mut col in self.features.columns_mut() {
            let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max > 0.0 {
                col.mapv_inplace(|v| v / max);
            }
        }
    }
}
