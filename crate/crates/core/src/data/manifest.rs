use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, DataError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Lower-case hex SHA-256 of the file; unchecked when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

/// Maps logical dataset names to files. Relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub datasets: BTreeMap<String, ManifestEntry>,
    #[serde(skip)]
    base: PathBuf,
}

pub fn sha256_file(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
        manifest.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.datasets.contains_key(name)
    }

    /// Path of `name` after verifying its checksum.
    pub fn resolve(&self, name: &str) -> Result<PathBuf, DataError> {
        let entry = self
            .datasets
            .get(name)
            .ok_or_else(|| DataError::UnknownDataset(name.to_string()))?;
        let path = self.base.join(&entry.path);
        if let Some(expected) = &entry.sha256 {
            let actual = sha256_file(&path)?;
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(DataError::ChecksumMismatch {
                    path,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        Ok(path)
    }
}
