use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use hybridfl::experiment::{grid, Algorithm};
use hybridfl::federation::{
    serve, CryptoBackend, PartyState, PrivacyMode, Session, SessionConfig, SocketEndpoint,
    SocketTransport,
};
use hybridfl::thpaillier::FixedPointCodec;
use hybridfl::trainers::mlp::mlp_train;
use hybridfl::trainers::model_io::LedgerSummary;
use hybridfl::trainers::svm::svm_train;
use hybridfl::trainers::{dt_train, save_model, DtHyper, MlpModel, SavedModel};

use crate::input::{categorical_schema, schema_dataset, DataArgs};
use crate::keygen::{read_public_key, read_share};
use crate::{CliError, CliResult, ConfigSource};

const DEFAULT_SESSION: &str = "hybridfl";
const DEFAULT_TOKEN: &str = "hybridfl";

#[derive(Args)]
pub struct PartyArgs {
    /// This party's index, 1-based.
    #[arg(long)]
    pub index: usize,
    /// Aggregator address, `host:port`.
    #[arg(long)]
    pub connect: String,
    /// Key share from `keygen`; responses are sent unencrypted without it.
    #[arg(long)]
    pub share: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Seed of this party's noise stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = DEFAULT_SESSION)]
    pub session: String,
    /// Pre-shared token presented to the aggregator.
    #[arg(long, default_value = DEFAULT_TOKEN)]
    pub token: String,
    #[arg(long, default_value_t = FixedPointCodec::DEFAULT_FRAC_BITS)]
    pub frac_bits: u32,
    /// Seconds to keep retrying the connection.
    #[arg(long, default_value_t = 30)]
    pub patience: u64,
    /// Write this party's privacy ledger as JSON on exit.
    #[arg(long)]
    pub ledger_out: Option<PathBuf>,
}

pub fn party(args: PartyArgs) -> CliResult {
    if args.index == 0 {
        return Err(CliError::config("party indices start at 1"));
    }
    let mut state = PartyState::new(args.index, args.data.load()?, args.seed);
    if let Some(path) = &args.share {
        let share = read_share(path)?;
        if share.party_index() != args.index {
            return Err(CliError::config(format!(
                "{} belongs to party {}, not {}",
                path.display(),
                share.party_index(),
                args.index
            )));
        }
        state = state
            .with_share(share, args.frac_bits)
            .map_err(CliError::config)?;
    }
    let mut endpoint = SocketEndpoint::connect_with_retry(
        args.connect.as_str(),
        args.index,
        &args.token,
        Duration::from_secs(args.patience),
    )
    .map_err(CliError::runtime)?;
    log::info!("party {} connected to {}", args.index, args.connect);
    serve(&mut state, &mut endpoint, &args.session, None).map_err(CliError::runtime)?;
    if let Some(path) = &args.ledger_out {
        std::fs::write(path, state.ledger().to_json())
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    }
    eprintln!(
        "party {}: {} encryptions, ledger epsilon {} rho {}",
        args.index,
        state.encryptions(),
        state.ledger().total_epsilon(),
        state.ledger().total_rho()
    );
    Ok(())
}

#[derive(Args)]
pub struct AggregateArgs {
    /// Training settings; the first grid point is used.
    #[command(flatten)]
    pub source: ConfigSource,
    /// Listen address, `host:port`.
    #[arg(long)]
    pub listen: String,
    /// Public key from `keygen`; responses travel unencrypted without it.
    #[arg(long)]
    pub public: Option<PathBuf>,
    /// Where to save the trained model.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Categorical schema JSON, needed for decision trees.
    #[arg(long, conflicts_with = "nursery")]
    pub schema: Option<PathBuf>,
    /// Use the built-in Nursery vocabularies for decision trees.
    #[arg(long)]
    pub nursery: bool,
    /// Feature count, needed for the SVM and the MLP.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of classes for the MLP.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value = DEFAULT_SESSION)]
    pub session: String,
    #[arg(long, default_value = DEFAULT_TOKEN)]
    pub token: String,
    /// Seconds to wait for every party to connect.
    #[arg(long, default_value_t = 120)]
    pub accept_timeout: u64,
}

pub fn aggregate(args: AggregateArgs) -> CliResult {
    let cfg = args.source.load()?;
    if cfg.algorithm.is_baseline() {
        return Err(CliError::config("baselines do not train over a federation"));
    }
    let point = *grid(&cfg)
        .first()
        .ok_or_else(|| CliError::config("the configuration has an empty grid"))?;
    if point.mode == PrivacyMode::Central {
        return Err(CliError::config("central mode runs in process; use `run`"));
    }
    let public_key = args.public.as_deref().map(read_public_key).transpose()?;
    let mut session_cfg = SessionConfig::new(point.n_parties, point.trust_t, point.mode);
    session_cfg.session_id = args.session.clone();
    session_cfg.seed = point.seed;
    session_cfg.round_timeout = cfg.round_timeout();
    session_cfg.backend = match &public_key {
        Some(pk) => CryptoBackend::Paillier {
            key_bits: pk.bit_length() as usize,
        },
        None => {
            if point.mode == PrivacyMode::Hybrid {
                log::warn!("no public key given: party responses travel unencrypted");
            }
            CryptoBackend::Plaintext
        }
    };
    session_cfg.validate().map_err(CliError::config)?;

    let schema = match cfg.algorithm {
        Algorithm::Dt => {
            let schema = categorical_schema(args.schema.as_deref(), args.nursery)?
                .ok_or_else(|| CliError::config("decision trees need --schema or --nursery"))?;
            Some(schema_dataset(&schema)?)
        }
        _ => None,
    };
    let dim = match cfg.algorithm {
        Algorithm::Dt => 0,
        _ => args
            .dim
            .ok_or_else(|| CliError::config("the SVM and the MLP need --dim"))?,
    };

    let listener = TcpListener::bind(&args.listen)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.listen)))?;
    eprintln!(
        "listening on {} for {} parties",
        listener.local_addr().map_err(CliError::runtime)?,
        point.n_parties
    );
    let transport = SocketTransport::accept(
        &listener,
        point.n_parties,
        &args.session,
        &args.token,
        Duration::from_secs(args.accept_timeout),
    )
    .map_err(CliError::runtime)?;
    let mut session = Session::over_transport(session_cfg, Box::new(transport), public_key)
        .map_err(CliError::config)?;

    let (model, hyper) = match cfg.algorithm {
        Algorithm::Dt => {
            let hyper = DtHyper {
                epsilon: point
                    .epsilon
                    .ok_or_else(|| CliError::config("decision trees need an epsilon"))?,
                max_depth: cfg.dt.max_depth,
            };
            let schema = schema.as_ref().expect("schema loaded for trees");
            let tree = dt_train(&mut session, schema, &hyper).map_err(CliError::runtime)?;
            (
                SavedModel::Tree(tree),
                serde_json::to_value(&hyper).unwrap_or_default(),
            )
        }
        Algorithm::Svm => {
            let mut hyper = cfg.svm_hyper();
            if let Some(sigma) = point.sigma {
                hyper.sigma = sigma;
            }
            let model = svm_train(&mut session, dim, &hyper, |round, _| {
                log::info!("round {round} done")
            })
            .map_err(CliError::runtime)?;
            (
                SavedModel::Svm(model),
                serde_json::to_value(&hyper).unwrap_or_default(),
            )
        }
        Algorithm::Mlp => {
            let mut hyper = cfg.mlp_hyper();
            if let Some(sigma) = point.sigma {
                hyper.sigma = sigma;
            }
            let classes = args
                .classes
                .ok_or_else(|| CliError::config("the MLP needs --classes"))?;
            let initial = MlpModel::init(&[dim, 60, 1000, classes], point.seed);
            let model = mlp_train(&mut session, initial, &hyper, |epoch, _| {
                log::info!("epoch {epoch} done")
            })
            .map_err(CliError::runtime)?;
            (
                SavedModel::Mlp(model),
                serde_json::to_value(&hyper).unwrap_or_default(),
            )
        }
        Algorithm::Uniform | Algorithm::Random => unreachable!("rejected above"),
    };
    let ledger = LedgerSummary::from(session.ledger());
    let rounds = session.rounds_completed();
    session.shutdown();
    save_model(&args.model_out, &model, hyper, ledger.clone())
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.model_out.display())))?;
    println!(
        "{} rounds; ledger epsilon {} delta {} rho {}; model saved to {}",
        rounds,
        ledger.epsilon,
        ledger.delta,
        ledger.rho,
        args.model_out.display()
    );
    Ok(())
}
