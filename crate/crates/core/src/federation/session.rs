use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::message::{Query, QueryPayload, QueryResponse, ResponseBody};
use super::party::{serve, PartyData, PartyState};
use super::transport::{InProcTransport, Transport};
use super::wire::{self, Message};
use super::FederationError;
use crate::dpcore::{
    BudgetGuard, BudgetLedger, Charge, Mechanism, NoiseScaling, NoiseSpec, PrivacyParams,
};
use crate::thpaillier::{self, Ciphertext, FixedPointCodec, PartialDecryption, PublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyMode {
    /// Trust-scaled noise, aggregated under threshold encryption.
    Hybrid,
    /// Full noise at every party, no encryption.
    Local,
    /// One party holding all data, full noise.
    Central,
    /// Exact statistics.
    None,
}

impl PrivacyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyMode::Hybrid => "hybrid",
            PrivacyMode::Local => "local",
            PrivacyMode::Central => "central",
            PrivacyMode::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CryptoBackend {
    Paillier {
        key_bits: usize,
    },
    /// Responses travel unencrypted; noise and aggregation are unchanged.
    Plaintext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub n_parties: usize,
    pub trust_t: usize,
    pub mode: PrivacyMode,
    pub backend: CryptoBackend,
    #[serde(with = "duration_secs")]
    pub round_timeout: Duration,
    pub frac_bits: u32,
    pub seed: u64,
    /// Keep a transcript of every round in memory.
    pub record_transcripts: bool,
    pub guard: Option<BudgetGuard>,
    /// Written after every completed round when set.
    pub checkpoint_path: Option<PathBuf>,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl SessionConfig {
    pub fn new(n_parties: usize, trust_t: usize, mode: PrivacyMode) -> Self {
        SessionConfig {
            session_id: "session".to_string(),
            n_parties,
            trust_t,
            mode,
            backend: match mode {
                PrivacyMode::Hybrid => CryptoBackend::Paillier {
                    key_bits: thpaillier::RECOMMENDED_KEY_BITS,
                },
                _ => CryptoBackend::Plaintext,
            },
            round_timeout: Duration::from_secs(600),
            frac_bits: FixedPointCodec::DEFAULT_FRAC_BITS,
            seed: 0,
            record_transcripts: false,
            guard: None,
            checkpoint_path: None,
        }
    }

    /// `n - t + 1` partial decryptions are needed to decrypt.
    pub fn threshold(&self) -> usize {
        self.n_parties + 1 - self.trust_t.clamp(1, self.n_parties.max(1))
    }

    pub fn validate(&self) -> Result<(), FederationError> {
        if self.n_parties == 0 {
            return Err(FederationError::Config(
                "at least one party is required".into(),
            ));
        }
        if self.mode == PrivacyMode::Hybrid
            && !(2 <= self.trust_t && self.trust_t <= self.n_parties)
        {
            return Err(FederationError::Config(format!(
                "hybrid mode needs 2 <= t <= n, got t = {} with n = {}",
                self.trust_t, self.n_parties
            )));
        }
        if self.mode == PrivacyMode::Central && self.n_parties != 1 {
            return Err(FederationError::Config(
                "central mode runs with a single party".into(),
            ));
        }
        if self.trust_t == 0 || self.trust_t > self.n_parties {
            return Err(FederationError::Config(format!(
                "trust t = {} must lie in 1..={}",
                self.trust_t, self.n_parties
            )));
        }
        Ok(())
    }

    /// The noise parties add to a release with `params`, or `None` when the
    /// mode adds none.
    pub fn noise(&self, mechanism: Mechanism, params: PrivacyParams) -> Option<NoiseSpec> {
        let params = params.with_trust(self.trust_t, self.n_parties);
        let scaling = match self.mode {
            PrivacyMode::None => return None,
            PrivacyMode::Hybrid => NoiseScaling::TrustScaled,
            PrivacyMode::Local | PrivacyMode::Central => NoiseScaling::Full,
        };
        Some(NoiseSpec {
            mechanism,
            params,
            scaling,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub compute_ms: f64,
    pub encrypt_ms: f64,
    pub aggregate_ms: f64,
    pub decrypt_ms: f64,
}

impl PhaseTimings {
    fn accumulate(&mut self, other: &PhaseTimings) {
        self.compute_ms += other.compute_ms;
        self.encrypt_ms += other.encrypt_ms;
        self.aggregate_ms += other.aggregate_ms;
        self.decrypt_ms += other.decrypt_ms;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyStatus {
    pub party_index: usize,
    pub responded: bool,
    pub elements: usize,
    pub encryptions: u64,
}

/// What the aggregator saw and did in one round. In encrypted sessions the
/// per-party entries hold no response values at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub query: Query,
    pub parties: Vec<PartyStatus>,
    pub aggregated: Option<Vec<Ciphertext>>,
    pub decryptors: Vec<usize>,
    pub decrypted: Option<Vec<f64>>,
    pub timings: PhaseTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionCheckpoint {
    pub session_id: String,
    pub next_query_id: u64,
    pub rounds_completed: u64,
    pub party_charges: Vec<Vec<Charge>>,
    /// Trainer-specific state, such as the current model.
    pub state: serde_json::Value,
}

pub struct Session {
    config: SessionConfig,
    transport: Box<dyn Transport>,
    public_key: Option<PublicKey>,
    codec: Option<FixedPointCodec>,
    next_query_id: u64,
    rounds_completed: u64,
    ledgers: Vec<BudgetLedger>,
    timings: PhaseTimings,
    transcripts: Vec<RoundTranscript>,
}

/// Options for in-process sessions.
#[derive(Clone, Debug, Default)]
pub struct InProcOptions {
    /// `(party index, n)`: that party disconnects after answering `n` queries.
    pub drop_after: Vec<(usize, usize)>,
}

impl Session {
    /// Starts one thread per shard, dealing keys when the backend encrypts.
    pub fn in_proc(config: SessionConfig, shards: Vec<PartyData>) -> Result<Self, FederationError> {
        Self::in_proc_with(config, shards, InProcOptions::default())
    }

    pub fn in_proc_with(
        config: SessionConfig,
        shards: Vec<PartyData>,
        options: InProcOptions,
    ) -> Result<Self, FederationError> {
        config.validate()?;
        if shards.len() != config.n_parties {
            return Err(FederationError::Config(format!(
                "{} shards for {} parties",
                shards.len(),
                config.n_parties
            )));
        }
        let mut parties: Vec<PartyState> = shards
            .into_iter()
            .enumerate()
            .map(|(i, data)| PartyState::new(i + 1, data, config.seed))
            .collect();
        let mut public_key = None;
        if let CryptoBackend::Paillier { key_bits } = config.backend {
            let (pk, shares) = thpaillier::deal_keys(
                key_bits,
                config.n_parties,
                config.threshold(),
                config.seed ^ 0x6b65_7973,
            )?;
            parties = parties
                .into_iter()
                .zip(shares)
                .map(|(p, share)| p.with_share(share, config.frac_bits))
                .collect::<Result<_, _>>()?;
            public_key = Some(pk);
        }
        if let Some(guard) = config.guard {
            parties = parties.into_iter().map(|p| p.with_guard(guard)).collect();
        }
        let session_id = config.session_id.clone();
        let slots: Vec<std::sync::Mutex<Option<PartyState>>> = parties
            .into_iter()
            .map(|p| std::sync::Mutex::new(Some(p)))
            .collect();
        let slots = std::sync::Arc::new(slots);
        let drops = options.drop_after.clone();
        let transport = InProcTransport::spawn(config.n_parties, move |index, mut endpoint| {
            let mut party = slots[index - 1]
                .lock()
                .expect("party slot")
                .take()
                .expect("party taken once");
            let drop_after = drops.iter().find(|(p, _)| *p == index).map(|&(_, n)| n);
            if let Err(e) = serve(&mut party, &mut endpoint, &session_id, drop_after) {
                log::warn!("party {index} stopped: {e}");
            }
        });
        Self::over_transport(config, Box::new(transport), public_key)
    }

    /// Drives parties reachable through `transport`.
    pub fn over_transport(
        config: SessionConfig,
        transport: Box<dyn Transport>,
        public_key: Option<PublicKey>,
    ) -> Result<Self, FederationError> {
        config.validate()?;
        if transport.n_parties() != config.n_parties {
            return Err(FederationError::Config(
                "transport and config disagree on party count".into(),
            ));
        }
        let codec = match &public_key {
            Some(pk) => {
                if pk.n_parties() != config.n_parties || pk.threshold() != config.threshold() {
                    return Err(FederationError::Config(format!(
                        "key was dealt for {} parties with threshold {}, session needs {} and {}",
                        pk.n_parties(),
                        pk.threshold(),
                        config.n_parties,
                        config.threshold()
                    )));
                }
                Some(FixedPointCodec::new(
                    pk,
                    config.frac_bits,
                    config.n_parties,
                )?)
            }
            None => None,
        };
        Ok(Session {
            ledgers: vec![BudgetLedger::new(); config.n_parties],
            config,
            transport,
            public_key,
            codec,
            next_query_id: 1,
            rounds_completed: 0,
            timings: PhaseTimings::default(),
            transcripts: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn public_key(&self) -> Option<&PublicKey> {
        self.public_key.as_ref()
    }

    pub fn timings(&self) -> &PhaseTimings {
        &self.timings
    }

    pub fn transcripts(&self) -> &[RoundTranscript] {
        &self.transcripts
    }

    pub fn rounds_completed(&self) -> u64 {
        self.rounds_completed
    }

    pub fn party_ledgers(&self) -> &[BudgetLedger] {
        &self.ledgers
    }

    /// The ledger of the party that has spent the most.
    pub fn ledger(&self) -> &BudgetLedger {
        self.ledgers
            .iter()
            .max_by(|a, b| {
                a.total_epsilon_exact()
                    .cmp(&b.total_epsilon_exact())
                    .then(a.total_rho_exact().cmp(&b.total_rho_exact()))
            })
            .expect("at least one party")
    }

    pub fn noise(&self, mechanism: Mechanism, params: PrivacyParams) -> Option<NoiseSpec> {
        self.config.noise(mechanism, params)
    }

    fn take_query_id(&mut self) -> u64 {
        let id = self.next_query_id;
        self.next_query_id += 1;
        id
    }

    /// The `t̄` consecutive parties starting at `query_id mod n`.
    pub fn decryptors_for(&self, query_id: u64) -> Vec<usize> {
        let n = self.config.n_parties;
        let start = (query_id % n as u64) as usize;
        (0..self.config.threshold())
            .map(|k| (start + k) % n + 1)
            .collect()
    }

    fn exchange(
        &mut self,
        query: &Query,
        parties: &[usize],
    ) -> Result<Vec<QueryResponse>, FederationError> {
        let frame = wire::encode(&self.config.session_id, &Message::Query(query.clone()));
        for &p in parties {
            self.transport
                .send(p, frame.clone())
                .map_err(|_| FederationError::RoundTimeout { party: p })?;
        }
        let arity = query.payload.response_arity();
        let mut responses = Vec::with_capacity(parties.len());
        for &p in parties {
            let reply = self
                .transport
                .recv(p, self.config.round_timeout)
                .map_err(|e| match e {
                    FederationError::ConnectionLost(_) | FederationError::RoundTimeout { .. } => {
                        FederationError::RoundTimeout { party: p }
                    }
                    other => other,
                })?;
            match wire::decode(&reply)?.1 {
                Message::Response(r) => {
                    if r.query_id != query.query_id {
                        return Err(FederationError::MixedQueryIds {
                            expected: query.query_id,
                            got: r.query_id,
                        });
                    }
                    if r.body.len() != arity {
                        return Err(FederationError::ArityMismatch {
                            party: p,
                            expected: arity,
                            got: r.body.len(),
                        });
                    }
                    responses.push(r);
                }
                Message::Failure(f) => {
                    return Err(FederationError::PartyFailed {
                        party: f.party_index,
                        message: f.message,
                    })
                }
                other => {
                    return Err(FederationError::Deserialize(format!(
                        "unexpected reply {other:?}"
                    )))
                }
            }
        }
        Ok(responses)
    }

    /// Broadcasts a data query, aggregates the answers and, for encrypted
    /// sessions, runs the decryption round. Returns the element-wise sum of
    /// all parties' (noisy) answers.
    pub fn run_round(
        &mut self,
        payload: QueryPayload,
        noise: Option<NoiseSpec>,
        charges: Vec<Charge>,
    ) -> Result<Vec<f64>, FederationError> {
        if payload.kind() == super::QueryKind::PartialDecrypt {
            return Err(FederationError::Config(
                "decryption rounds are issued by the session".into(),
            ));
        }
        let query = Query {
            query_id: self.take_query_id(),
            payload,
            noise,
            charges,
        };
        let all: Vec<usize> = (1..=self.config.n_parties).collect();
        let responses = self.exchange(&query, &all)?;
        let mut timings = PhaseTimings {
            compute_ms: responses
                .iter()
                .map(|r| r.timing.compute_ms)
                .fold(0.0, f64::max),
            encrypt_ms: responses
                .iter()
                .map(|r| r.timing.encrypt_ms)
                .fold(0.0, f64::max),
            ..Default::default()
        };
        for r in &responses {
            for c in &r.charges {
                self.ledgers[r.party_index - 1].charge(c.clone());
            }
        }
        let statuses = responses
            .iter()
            .map(|r| PartyStatus {
                party_index: r.party_index,
                responded: true,
                elements: r.body.len(),
                encryptions: r.encryptions,
            })
            .collect();

        let agg_started = Instant::now();
        let arity = query.payload.response_arity();
        let (values, aggregated, decryptors) = match responses.first().map(|r| &r.body) {
            Some(ResponseBody::Ciphertexts(_)) => {
                let pk = self
                    .public_key
                    .clone()
                    .ok_or(FederationError::NoKeyShare(0))?;
                let folded = aggregate_encrypted(&responses, &pk)?;
                timings.aggregate_ms = agg_started.elapsed().as_secs_f64() * 1e3;
                let dec_started = Instant::now();
                let (values, decryptors) = self.decrypt(&folded)?;
                timings.decrypt_ms = dec_started.elapsed().as_secs_f64() * 1e3;
                (values, Some(folded), decryptors)
            }
            _ => {
                let mut sum = vec![0.0; arity];
                for r in &responses {
                    match &r.body {
                        ResponseBody::Plain(v) => {
                            for (s, x) in sum.iter_mut().zip(v) {
                                *s += x;
                            }
                        }
                        _ => {
                            return Err(FederationError::Deserialize(
                                "parties disagree on response encoding".into(),
                            ))
                        }
                    }
                }
                timings.aggregate_ms = agg_started.elapsed().as_secs_f64() * 1e3;
                (sum, None, Vec::new())
            }
        };
        self.timings.accumulate(&timings);
        self.rounds_completed += 1;
        if self.config.record_transcripts {
            self.transcripts.push(RoundTranscript {
                query,
                parties: statuses,
                aggregated,
                decryptors,
                decrypted: Some(values.clone()),
                timings,
            });
        }
        Ok(values)
    }

    fn decrypt(
        &mut self,
        folded: &[Ciphertext],
    ) -> Result<(Vec<f64>, Vec<usize>), FederationError> {
        let query = Query {
            query_id: self.take_query_id(),
            payload: QueryPayload::PartialDecrypt {
                ciphertexts: folded.to_vec(),
            },
            noise: None,
            charges: Vec::new(),
        };
        let decryptors = self.decryptors_for(query.query_id);
        let responses = self.exchange(&query, &decryptors)?;
        let pk = self
            .public_key
            .as_ref()
            .expect("encrypted session has a key");
        let codec = self.codec.as_ref().expect("encrypted session has a codec");
        let per_party: Vec<&Vec<PartialDecryption>> = responses
            .iter()
            .map(|r| match &r.body {
                ResponseBody::Partials(p) => Ok(p),
                _ => Err(FederationError::Deserialize(
                    "expected partial decryptions".into(),
                )),
            })
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(folded.len());
        for k in 0..folded.len() {
            let parts: Vec<PartialDecryption> = per_party.iter().map(|p| p[k].clone()).collect();
            let m: BigUint = thpaillier::combine(pk, &parts)?;
            values.push(codec.decode(&m, self.config.n_parties)?);
        }
        Ok((values, decryptors))
    }

    pub fn checkpoint(&self, state: serde_json::Value) -> SessionCheckpoint {
        SessionCheckpoint {
            session_id: self.config.session_id.clone(),
            next_query_id: self.next_query_id,
            rounds_completed: self.rounds_completed,
            party_charges: self.ledgers.iter().map(|l| l.entries().to_vec()).collect(),
            state,
        }
    }

    /// Writes a checkpoint to the configured path, if any.
    pub fn save_checkpoint(&self, state: serde_json::Value) -> Result<(), FederationError> {
        if let Some(path) = &self.config.checkpoint_path {
            let json =
                serde_json::to_vec_pretty(&self.checkpoint(state)).expect("checkpoint serializes");
            std::fs::write(path, json).map_err(FederationError::io)?;
        }
        Ok(())
    }

    /// Resumes query numbering and ledgers from a checkpoint.
    pub fn restore(&mut self, checkpoint: &SessionCheckpoint) -> Result<(), FederationError> {
        if checkpoint.session_id != self.config.session_id
            || checkpoint.party_charges.len() != self.config.n_parties
        {
            return Err(FederationError::Config(
                "checkpoint belongs to a different session".into(),
            ));
        }
        self.next_query_id = checkpoint.next_query_id;
        self.rounds_completed = checkpoint.rounds_completed;
        self.ledgers = checkpoint
            .party_charges
            .iter()
            .map(|charges| {
                let mut l = BudgetLedger::new();
                for c in charges {
                    l.charge(c.clone());
                }
                l
            })
            .collect();
        Ok(())
    }

    pub fn shutdown(mut self) {
        self.transport.close();
    }
}

/// Element-wise homomorphic sum of the parties' ciphertext vectors.
pub fn aggregate_encrypted(
    responses: &[QueryResponse],
    pk: &PublicKey,
) -> Result<Vec<Ciphertext>, FederationError> {
    let first = responses.first().ok_or(FederationError::ArityMismatch {
        party: 0,
        expected: 1,
        got: 0,
    })?;
    let mut acc: Vec<Ciphertext> = Vec::new();
    for (i, r) in responses.iter().enumerate() {
        if r.query_id != first.query_id {
            return Err(FederationError::MixedQueryIds {
                expected: first.query_id,
                got: r.query_id,
            });
        }
        let ResponseBody::Ciphertexts(cs) = &r.body else {
            return Err(FederationError::Deserialize("expected ciphertexts".into()));
        };
        if cs.iter().any(|c| !c.is_in_range(pk)) {
            return Err(thpaillier::CryptoError::InvalidCiphertext.into());
        }
        if i == 0 {
            acc = cs.clone();
            continue;
        }
        if cs.len() != acc.len() {
            return Err(FederationError::ArityMismatch {
                party: r.party_index,
                expected: acc.len(),
                got: cs.len(),
            });
        }
        for (a, c) in acc.iter_mut().zip(cs) {
            *a = thpaillier::add(pk, a, c);
        }
    }
    Ok(acc)
}
