use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hybridfl::data::{
    load_csv_categorical, load_idx, load_libsvm, nursery_schema, CategoricalDataset,
    CategoricalSchema,
};
use hybridfl::federation::PartyData;

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// Comma-separated categorical rows, class in the last column unless set by the schema.
    Csv,
    /// Sparse `label index:value ...` lines.
    Libsvm,
    /// IDX image file; pair with `--labels`.
    Idx,
}

/// A data file and how to parse it.
#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: DataFormat,
    /// Categorical schema as JSON (`has_header`, `class_column`,
    /// `feature_names`, `vocabularies`, `classes`).
    #[arg(long, conflicts_with = "nursery")]
    pub schema: Option<PathBuf>,
    /// Use the built-in Nursery vocabularies.
    #[arg(long)]
    pub nursery: bool,
    /// Feature count for libsvm files; inferred when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    /// IDX label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// The categorical schema every party and the aggregator must share.
pub fn categorical_schema(
    schema: Option<&Path>,
    nursery: bool,
) -> CliResult<Option<CategoricalSchema>> {
    if nursery {
        let (names, vocabularies, classes) = nursery_schema();
        return Ok(Some(CategoricalSchema {
            has_header: false,
            class_column: None,
            feature_names: Some(names),
            vocabularies: Some(vocabularies),
            classes: Some(classes),
        }));
    }
    match schema {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map(Some)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
        None => Ok(None),
    }
}

/// An empty dataset carrying only a schema's vocabularies, for training.
pub fn schema_dataset(schema: &CategoricalSchema) -> CliResult<CategoricalDataset> {
    let (Some(vocabularies), Some(classes)) = (&schema.vocabularies, &schema.classes) else {
        return Err(CliError::config(
            "a training schema needs vocabularies and classes",
        ));
    };
    let feature_names = schema
        .feature_names
        .clone()
        .unwrap_or_else(|| (0..vocabularies.len()).map(|f| format!("f{f}")).collect());
    Ok(CategoricalDataset {
        feature_names,
        vocabularies: vocabularies.clone(),
        classes: classes.clone(),
        rows: Vec::new(),
        labels: Vec::new(),
    })
}

pub fn load_categorical(path: &Path, schema: &CategoricalSchema) -> CliResult<CategoricalDataset> {
    load_csv_categorical(path, schema)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl DataArgs {
    /// Loads the file as a party shard.
    pub fn load(&self) -> CliResult<PartyData> {
        let data = &self.data;
        let bad =
            |e: hybridfl::data::DataError| CliError::config(format!("{}: {e}", data.display()));
        match self.format {
            DataFormat::Csv => {
                let schema = categorical_schema(self.schema.as_deref(), self.nursery)?.ok_or_else(|| {
                    CliError::config("categorical data needs --schema or --nursery so every party shares one encoding")
                })?;
                if schema.vocabularies.is_none() || schema.classes.is_none() {
                    return Err(CliError::config(
                        "the schema must list vocabularies and classes",
                    ));
                }
                Ok(PartyData::Categorical(load_categorical(data, &schema)?))
            }
            DataFormat::Libsvm => Ok(PartyData::Numeric(
                load_libsvm(data, self.dim).map_err(bad)?,
            )),
            DataFormat::Idx => {
                let labels = self
                    .labels
                    .as_ref()
                    .ok_or_else(|| CliError::config("IDX data needs --labels"))?;
                Ok(PartyData::Numeric(load_idx(data, labels).map_err(bad)?))
            }
        }
    }
}
