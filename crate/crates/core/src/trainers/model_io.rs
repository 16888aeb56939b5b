//! Versioned model files: magic, version byte, little-endian header length,
//! JSON header, then a little-endian `f64` parameter block.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpModel, SvmModel, TrainerError, TreeModel};
use crate::dpcore::BudgetLedger;
use crate::federation::ParamVector;

pub const MODEL_MAGIC: &[u8; 4] = b"HFLM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Tree(TreeModel),
    Mlp(MlpModel),
    Svm(SvmModel),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
}

impl From<&BudgetLedger> for LedgerSummary {
    fn from(l: &BudgetLedger) -> Self {
        LedgerSummary {
            epsilon: l.total_epsilon(),
            delta: l.total_delta(),
            rho: l.total_rho(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<TreeModel>,
    n_params: usize,
    #[serde(default)]
    hyper: serde_json::Value,
    #[serde(default)]
    ledger: LedgerSummary,
}

fn fmt_err(msg: impl Into<String>) -> TrainerError {
    TrainerError::Format(msg.into())
}

/// Serialises `model` with its hyperparameters and ledger summary.
pub fn to_bytes(model: &SavedModel, hyper: serde_json::Value, ledger: LedgerSummary) -> Vec<u8> {
    let (kind, layers, tree, params): (&str, _, _, &[f64]) = match model {
        SavedModel::Tree(t) => ("dt", None, Some(t.clone()), &[]),
        SavedModel::Mlp(m) => ("mlp", Some(m.layers.clone()), None, &m.params.values),
        SavedModel::Svm(s) => ("svm", None, None, &s.weights.values),
    };
    let header = Header {
        kind: kind.into(),
        layers,
        tree,
        n_params: params.len(),
        hyper,
        ledger,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + 8 * params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Parses a model file, returning the model, hyperparameters and ledger.
pub fn from_bytes(
    bytes: &[u8],
) -> Result<(SavedModel, serde_json::Value, LedgerSummary), TrainerError> {
    if bytes.len() < 9 || &bytes[..4] != MODEL_MAGIC {
        return Err(fmt_err("not a model file"));
    }
    if bytes[4] != MODEL_VERSION {
        return Err(fmt_err(format!("unsupported model version {}", bytes[4])));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body = &bytes[9..];
    if body.len() < header_len {
        return Err(fmt_err("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| fmt_err(e.to_string()))?;
    let block = &body[header_len..];
    if block.len() != 8 * header.n_params {
        return Err(fmt_err(format!(
            "expected {} parameters, found {} bytes",
            header.n_params,
            block.len()
        )));
    }
    let params: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = match header.kind.as_str() {
        "dt" => SavedModel::Tree(
            header
                .tree
                .ok_or_else(|| fmt_err("tree model without a tree"))?,
        ),
        "mlp" => {
            let model = MlpModel {
                layers: header
                    .layers
                    .ok_or_else(|| fmt_err("mlp model without layers"))?,
                params: ParamVector::new(params),
            };
            model.check()?;
            SavedModel::Mlp(model)
        }
        "svm" => SavedModel::Svm(SvmModel {
            weights: ParamVector::new(params),
        }),
        other => return Err(fmt_err(format!("unknown model kind {other:?}"))),
    };
    Ok((model, header.hyper, header.ledger))
}

pub fn save_model(
    path: &Path,
    model: &SavedModel,
    hyper: serde_json::Value,
    ledger: LedgerSummary,
) -> Result<(), TrainerError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&to_bytes(model, hyper, ledger))?;
    Ok(())
}

pub fn load_model(
    path: &Path,
) -> Result<(SavedModel, serde_json::Value, LedgerSummary), TrainerError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::TreeNode;

    #[test]
    fn round_trips_every_kind() {
        let tree = TreeModel {
            root: TreeNode::Split {
                feature: 0,
                majority: 1,
                children: vec![TreeNode::Leaf { label: 0 }, TreeNode::Leaf { label: 1 }],
            },
            depth_bound: 2,
            feature_names: vec!["a".into()],
            vocabularies: vec![vec!["x".into(), "y".into()]],
            classes: vec!["n".into(), "p".into()],
        };
        let ledger = LedgerSummary {
            epsilon: 0.5,
            delta: 0.0,
            rho: 0.0,
        };
        for model in [
            SavedModel::Tree(tree),
            SavedModel::Mlp(MlpModel::init(&[3, 2, 2], 1)),
            SavedModel::Svm(SvmModel {
                weights: ParamVector::new(vec![1.5, -0.0, f64::MIN_POSITIVE]),
            }),
        ] {
            let bytes = to_bytes(&model, serde_json::json!({"k": 1}), ledger.clone());
            let (back, hyper, l) = from_bytes(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(hyper["k"], 1);
            assert_eq!(l, ledger);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(
            &SavedModel::Svm(SvmModel::zeros(4)),
            serde_json::Value::Null,
            LedgerSummary::default(),
        );
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(from_bytes(&bad).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = SavedModel::Svm(SvmModel::zeros(3));
        save_model(
            &path,
            &model,
            serde_json::Value::Null,
            LedgerSummary::default(),
        )
        .unwrap();
        assert_eq!(load_model(&path).unwrap().0, model);
    }
}
