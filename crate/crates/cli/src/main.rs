mod bench;
mod deploy;
mod input;
mod keygen;
mod predict;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridfl::experiment::{
    preset, report, run_experiment_with, write_csv, ExperimentConfig, ExperimentError, RunOptions,
    Summary,
};

/// Failure classes, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files: exit code 2.
    Config(String),
    /// Everything else that stops a command: exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "hybridfl",
    version,
    about = "Federated training with threshold-encrypted differentially private aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deal a threshold Paillier key: one public file and one share per party.
    Keygen(keygen::KeygenArgs),
    /// Run a data party that serves an aggregator over TCP.
    Party(deploy::PartyArgs),
    /// Accept party connections and train one model over TCP.
    Aggregate(deploy::AggregateArgs),
    /// Predict with a saved model and write the predictions as CSV.
    Predict(predict::PredictArgs),
    /// Time encryption, partial decryption and combination per element.
    BenchCrypto(bench::BenchArgs),
    /// Run an experiment sweep in process and write the metrics CSV.
    Run(RunArgs),
    /// Summarize one or more metrics CSVs.
    Report(ReportArgs),
}

/// Either a named preset or a TOML file.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    pub fn load(&self) -> CliResult<ExperimentConfig> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(CliError::config("give --config or --preset")),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run grid points concurrently.
    #[arg(long)]
    parallel: bool,
    /// Save every trained model into this directory.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Print a summary table to standard error after the sweep.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics CSV files written by `run`.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    /// Also write the summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn run(args: RunArgs) -> CliResult {
    let mut cfg = args.source.load()?;
    cfg.parallel |= args.parallel;
    if let Some(dir) = &args.model_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    }
    let options = RunOptions {
        model_dir: args.model_dir.clone(),
    };
    let rows = run_experiment_with(&cfg, &options)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            write_csv(file, &rows)?;
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(stdout.lock(), &rows)?;
        }
    }
    if args.summary {
        eprint!("{}", Summary::from_rows(&rows).to_text());
    }
    let failed = rows.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(CliError::runtime(format!(
            "{failed} of {} runs failed",
            rows.len()
        )));
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> CliResult {
    let paths: Vec<&std::path::Path> = args.csv.iter().map(PathBuf::as_path).collect();
    let summary = report(&paths)?;
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", summary.to_text()).map_err(CliError::runtime)?;
    if let Some(path) = &args.json {
        std::fs::write(path, summary.to_json())
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(a) => keygen::keygen(a),
        Command::Party(a) => deploy::party(a),
        Command::Aggregate(a) => deploy::aggregate(a),
        Command::Predict(a) => predict::predict(a),
        Command::BenchCrypto(a) => bench::bench_crypto(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hybridfl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
