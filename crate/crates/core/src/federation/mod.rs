//! The aggregator/party protocol: every statistic a trainer needs is a
//! query answered by all parties with noisy, encrypted values, summed
//! homomorphically and decrypted jointly by `t̄` parties.

mod message;
mod party;
mod session;
mod transport;
pub mod wire;

pub use message::{
    ParamVector, PartyTiming, Query, QueryKind, QueryPayload, QueryResponse, ResponseBody, SplitSet,
};
pub use party::{party_handle, party_rng, serve, PartyData, PartyState};
pub use session::{
    aggregate_encrypted, CryptoBackend, InProcOptions, PartyStatus, PhaseTimings, PrivacyMode,
    RoundTranscript, Session, SessionCheckpoint, SessionConfig,
};
pub use transport::{
    ChannelEndpoint, InProcTransport, PartyEndpoint, SocketEndpoint, SocketTransport, Transport,
};

use crate::dpcore::DpError;
use crate::thpaillier::CryptoError;

#[derive(Debug, thiserror::Error)]
pub enum FederationError {
    #[error("party {party} did not answer the round")]
    RoundTimeout { party: usize },
    #[error("connection to party {0} lost")]
    ConnectionLost(usize),
    #[error("party {party} sent {got} elements, expected {expected}")]
    ArityMismatch {
        party: usize,
        expected: usize,
        got: usize,
    },
    #[error("response for query {got} while aggregating query {expected}")]
    MixedQueryIds { expected: u64, got: u64 },
    #[error("unknown query kind {0:?}")]
    UnknownQueryKind(String),
    #[error("cannot decode message: {0}")]
    Deserialize(String),
    #[error("party {0} holds no key share")]
    NoKeyShare(usize),
    #[error("query needs a {0} shard")]
    WrongData(&'static str),
    #[error("party {party} failed: {message}")]
    PartyFailed { party: usize, message: String },
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("local training failed: {0}")]
    Trainer(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl FederationError {
    pub(crate) fn io(e: std::io::Error) -> Self {
        FederationError::Io(e)
    }
}
