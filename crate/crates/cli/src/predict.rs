use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hybridfl::data::{load_idx, load_libsvm, CategoricalSchema};
use hybridfl::trainers::mlp::predict_dataset;
use hybridfl::trainers::{load_model, SavedModel, Scores};

use crate::input::load_categorical;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NumericFormat {
    Libsvm,
    Idx,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Model file written by `aggregate` or `run --model-dir`.
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to predict. Categorical CSV for trees; libsvm or IDX otherwise.
    #[arg(long)]
    pub data: PathBuf,
    /// The CSV starts with a header row (trees only).
    #[arg(long)]
    pub has_header: bool,
    /// Class column of the CSV; the last column when omitted (trees only).
    #[arg(long)]
    pub class_column: Option<usize>,
    #[arg(long, value_enum, default_value = "libsvm")]
    pub numeric_format: NumericFormat,
    /// IDX label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output CSV of `row,label,prediction`; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn predict(args: PredictArgs) -> CliResult {
    let (model, _, _) = load_model(&args.model)
        .map_err(|e| CliError::config(format!("{}: {e}", args.model.display())))?;
    // labels and predictions as display strings plus integer codes for scoring
    let (labels, predictions): (Vec<String>, Vec<String>) = match &model {
        SavedModel::Tree(tree) => {
            let schema = CategoricalSchema {
                has_header: args.has_header,
                class_column: args.class_column,
                feature_names: Some(tree.feature_names.clone()),
                vocabularies: Some(tree.vocabularies.clone()),
                classes: Some(tree.classes.clone()),
            };
            let data = load_categorical(&args.data, &schema)?;
            let predicted = tree.predict_all(&data);
            let name = |c: u32| tree.classes[c as usize].clone();
            (
                data.labels.iter().map(|&c| name(c)).collect(),
                predicted.into_iter().map(name).collect(),
            )
        }
        SavedModel::Svm(_) | SavedModel::Mlp(_) => {
            let dim = match &model {
                SavedModel::Svm(s) => s.weights.len(),
                SavedModel::Mlp(m) => m.layers[0],
                SavedModel::Tree(_) => unreachable!(),
            };
            let bad = |e: hybridfl::data::DataError| {
                CliError::config(format!("{}: {e}", args.data.display()))
            };
            let data = match args.numeric_format {
                NumericFormat::Libsvm => load_libsvm(&args.data, Some(dim)).map_err(bad)?,
                NumericFormat::Idx => {
                    let labels = args
                        .labels
                        .as_ref()
                        .ok_or_else(|| CliError::config("IDX data needs --labels"))?;
                    load_idx(&args.data, labels).map_err(bad)?
                }
            };
            if data.n_features() != dim {
                return Err(CliError::config(format!(
                    "the model expects {dim} features, the data has {}",
                    data.n_features()
                )));
            }
            let predicted = match &model {
                SavedModel::Svm(s) => s.predict(&data),
                SavedModel::Mlp(m) => predict_dataset(m, &data),
                SavedModel::Tree(_) => unreachable!(),
            };
            (
                data.labels.iter().map(i32::to_string).collect(),
                predicted.iter().map(i32::to_string).collect(),
            )
        }
    };

    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    writer
        .write_record(["row", "label", "prediction"])
        .map_err(CliError::runtime)?;
    for (i, (l, p)) in labels.iter().zip(&predictions).enumerate() {
        writer
            .write_record([i.to_string().as_str(), l, p])
            .map_err(CliError::runtime)?;
    }
    writer.flush().map_err(CliError::runtime)?;

    let mut codes = std::collections::BTreeMap::new();
    let mut code = |s: &String| {
        let next = codes.len() as u32;
        *codes.entry(s.clone()).or_insert(next)
    };
    let truth: Vec<u32> = labels.iter().map(&mut code).collect();
    let guess: Vec<u32> = predictions.iter().map(&mut code).collect();
    let scores = Scores::compute(&truth, &guess);
    eprintln!(
        "{} rows; accuracy {:.6} micro-F1 {:.6} macro-F1 {:.6}",
        labels.len(),
        scores.accuracy,
        scores.micro_f1,
        scores.macro_f1
    );
    Ok(())
}
