use serde::{Deserialize, Serialize};

use crate::dpcore::{Charge, NoiseSpec};
use crate::thpaillier::{Ciphertext, PartialDecryption};
use crate::trainers::{MlpHyper, SvmHyper};

/// A conjunction of `feature == value` predicates selecting rows.
pub type SplitSet = Vec<(usize, u32)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Counts,
    ClassCounts,
    TrainMlp,
    TrainSvm,
    PartialDecrypt,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Counts => "counts",
            QueryKind::ClassCounts => "class_counts",
            QueryKind::TrainMlp => "train_mlp",
            QueryKind::TrainSvm => "train_svm",
            QueryKind::PartialDecrypt => "partial_decrypt",
        }
    }

    pub fn parse(kind: &str) -> Option<Self> {
        [
            QueryKind::Counts,
            QueryKind::ClassCounts,
            QueryKind::TrainMlp,
            QueryKind::TrainSvm,
            QueryKind::PartialDecrypt,
        ]
        .into_iter()
        .find(|k| k.as_str() == kind)
    }
}

/// Flat model parameters. Serialized as base64 of little-endian f64 bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    #[serde(with = "f64_base64")]
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) mod f64_base64 {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn to_bytes(values: &[f64]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Vec<f64>> {
        if !bytes.len().is_multiple_of(8) {
            return None;
        }
        Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )
    }

    pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        serializer
            .serialize_str(&base64::engine::general_purpose::STANDARD.encode(to_bytes(values)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)?;
        from_bytes(&bytes).ok_or_else(|| serde::de::Error::custom("length is not a multiple of 8"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueryPayload {
    /// One count per split set.
    Counts {
        splits: Vec<SplitSet>,
    },
    /// `n_classes` counts per split set, split-major.
    ClassCounts {
        splits: Vec<SplitSet>,
        n_classes: usize,
    },
    TrainMlp {
        layers: Vec<usize>,
        params: ParamVector,
        hyper: MlpHyper,
    },
    TrainSvm {
        weights: ParamVector,
        hyper: SvmHyper,
    },
    PartialDecrypt {
        ciphertexts: Vec<Ciphertext>,
    },
}

impl QueryPayload {
    pub fn kind(&self) -> QueryKind {
        match self {
            QueryPayload::Counts { .. } => QueryKind::Counts,
            QueryPayload::ClassCounts { .. } => QueryKind::ClassCounts,
            QueryPayload::TrainMlp { .. } => QueryKind::TrainMlp,
            QueryPayload::TrainSvm { .. } => QueryKind::TrainSvm,
            QueryPayload::PartialDecrypt { .. } => QueryKind::PartialDecrypt,
        }
    }

    /// Number of elements every response must carry.
    pub fn response_arity(&self) -> usize {
        match self {
            QueryPayload::Counts { splits } => splits.len(),
            QueryPayload::ClassCounts { splits, n_classes } => splits.len() * n_classes,
            QueryPayload::TrainMlp { params, hyper, .. } => {
                params.len() + usize::from(hyper.weighted_average)
            }
            QueryPayload::TrainSvm { weights, .. } => weights.len(),
            QueryPayload::PartialDecrypt { ciphertexts } => ciphertexts.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: u64,
    pub payload: QueryPayload,
    /// Noise each party adds; `None` releases exact statistics.
    pub noise: Option<NoiseSpec>,
    /// Privacy charges the parties record for answering.
    pub charges: Vec<Charge>,
}

impl Query {
    pub fn kind(&self) -> QueryKind {
        self.payload.kind()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "items", rename_all = "snake_case")]
pub enum ResponseBody {
    Ciphertexts(Vec<Ciphertext>),
    Partials(Vec<PartialDecryption>),
    /// Unencrypted values, used when the encryption layer is bypassed.
    Plain(#[serde(with = "f64_base64")] Vec<f64>),
}

impl ResponseBody {
    pub fn len(&self) -> usize {
        match self {
            ResponseBody::Ciphertexts(v) => v.len(),
            ResponseBody::Partials(v) => v.len(),
            ResponseBody::Plain(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartyTiming {
    pub compute_ms: f64,
    pub encrypt_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query_id: u64,
    pub party_index: usize,
    pub body: ResponseBody,
    pub timing: PartyTiming,
    /// Charges this party recorded for the query.
    pub charges: Vec<Charge>,
    pub encryptions: u64,
}
