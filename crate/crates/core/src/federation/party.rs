use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::message::{PartyTiming, Query, QueryPayload, QueryResponse, ResponseBody, SplitSet};
use super::transport::PartyEndpoint;
use super::wire::{self, Message, PartyFailure};
use super::FederationError;
use crate::data::{CategoricalDataset, NumericDataset};
use crate::dpcore::{BudgetGuard, BudgetLedger, Charge, NoiseSpec};
use crate::thpaillier::{encrypt, partial_decrypt, CryptoError, FixedPointCodec, KeyShare};
use crate::trainers::{mlp, svm};

/// A party's horizontal slice of the training data.
#[derive(Clone, Debug, PartialEq)]
pub enum PartyData {
    Categorical(CategoricalDataset),
    Numeric(NumericDataset),
}

struct Keys {
    share: KeyShare,
    codec: FixedPointCodec,
}

/// Everything one data party holds: its shard, key share, randomness and
/// its own privacy ledger.
pub struct PartyState {
    index: usize,
    data: PartyData,
    keys: Option<Keys>,
    rng: ChaCha20Rng,
    /// Encryption randomness, kept apart so noise does not depend on the backend.
    crypto_rng: ChaCha20Rng,
    ledger: BudgetLedger,
    guard: Option<BudgetGuard>,
    encryptions: u64,
    clipped: Option<(f64, NumericDataset)>,
}

/// Party randomness: one ChaCha stream per party index under the session seed.
pub fn party_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl PartyState {
    pub fn new(index: usize, data: PartyData, seed: u64) -> Self {
        PartyState {
            index,
            data,
            keys: None,
            rng: party_rng(seed, index),
            crypto_rng: party_rng(seed, index + (1 << 32)),
            ledger: BudgetLedger::new(),
            guard: None,
            encryptions: 0,
            clipped: None,
        }
    }

    /// Enables encrypted responses under `share`'s public key.
    pub fn with_share(mut self, share: KeyShare, frac_bits: u32) -> Result<Self, CryptoError> {
        let pk = share.public_key();
        let codec = FixedPointCodec::new(pk, frac_bits, pk.n_parties())?;
        self.keys = Some(Keys { share, codec });
        Ok(self)
    }

    pub fn with_guard(mut self, guard: BudgetGuard) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn encryptions(&self) -> u64 {
        self.encryptions
    }

    fn categorical(&self) -> Result<&CategoricalDataset, FederationError> {
        match &self.data {
            PartyData::Categorical(d) => Ok(d),
            PartyData::Numeric(_) => Err(FederationError::WrongData("categorical")),
        }
    }

    fn numeric(&self) -> Result<&NumericDataset, FederationError> {
        match &self.data {
            PartyData::Numeric(d) => Ok(d),
            PartyData::Categorical(_) => Err(FederationError::WrongData("numeric")),
        }
    }

    fn charge(&mut self, charge: Charge) -> Result<(), FederationError> {
        match &self.guard {
            Some(guard) => Ok(self.ledger.charge_guarded(charge, guard)?),
            None => {
                self.ledger.charge(charge);
                Ok(())
            }
        }
    }

    fn clipped_shard(&mut self, clip: f64) -> Result<&NumericDataset, FederationError> {
        let stale = !matches!(&self.clipped, Some((c, _)) if *c == clip);
        if stale {
            let clipped = svm::clip_features(self.numeric()?, clip);
            self.clipped = Some((clip, clipped));
        }
        Ok(&self.clipped.as_ref().expect("just filled").1)
    }

    fn perturb(
        &mut self,
        values: &mut [f64],
        noise: Option<&NoiseSpec>,
    ) -> Result<(), FederationError> {
        if let Some(spec) = noise {
            spec.perturb(values, &mut self.rng)?;
        }
        Ok(())
    }
}

fn matches(row: &[u32], split: &SplitSet) -> bool {
    split.iter().all(|&(f, v)| row[f] == v)
}

fn counts(data: &CategoricalDataset, splits: &[SplitSet]) -> Vec<f64> {
    splits
        .iter()
        .map(|s| data.rows.iter().filter(|r| matches(r, s)).count() as f64)
        .collect()
}

fn class_counts(data: &CategoricalDataset, splits: &[SplitSet], n_classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; splits.len() * n_classes];
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        for (i, s) in splits.iter().enumerate() {
            if matches(row, s) && (label as usize) < n_classes {
                out[i * n_classes + label as usize] += 1.0;
            }
        }
    }
    out
}

/// Answers one query: computes the local statistic, adds the requested
/// noise, and encrypts each element when the party holds a key share.
pub fn party_handle(
    party: &mut PartyState,
    query: &Query,
) -> Result<QueryResponse, FederationError> {
    let started = Instant::now();
    let qid = query.query_id;
    if let QueryPayload::PartialDecrypt { ciphertexts } = &query.payload {
        let keys = party
            .keys
            .as_ref()
            .ok_or(FederationError::NoKeyShare(party.index))?;
        let pk = keys.share.public_key();
        if let Some(bad) = ciphertexts.iter().position(|c| !c.is_in_range(pk)) {
            log::warn!(
                "party {}: ciphertext {bad} of query {qid} is invalid",
                party.index
            );
            return Err(CryptoError::InvalidCiphertext.into());
        }
        let partials = ciphertexts
            .iter()
            .map(|c| partial_decrypt(&keys.share, c))
            .collect();
        return Ok(QueryResponse {
            query_id: qid,
            party_index: party.index,
            body: ResponseBody::Partials(partials),
            timing: PartyTiming {
                compute_ms: started.elapsed().as_secs_f64() * 1e3,
                encrypt_ms: 0.0,
            },
            charges: Vec::new(),
            encryptions: 0,
        });
    }

    for charge in &query.charges {
        party.charge(charge.clone())?;
    }
    let mut charges = query.charges.clone();
    let noise = query.noise.as_ref();
    let values = match &query.payload {
        QueryPayload::Counts { splits } => {
            let mut v = counts(party.categorical()?, splits);
            party.perturb(&mut v, noise)?;
            v
        }
        QueryPayload::ClassCounts { splits, n_classes } => {
            let mut v = class_counts(party.categorical()?, splits, *n_classes);
            party.perturb(&mut v, noise)?;
            v
        }
        QueryPayload::TrainMlp {
            layers,
            params,
            hyper,
        } => {
            let data = match &party.data {
                PartyData::Numeric(d) => d,
                PartyData::Categorical(_) => return Err(FederationError::WrongData("numeric")),
            };
            let update =
                mlp::local_epoch(layers, &params.values, data, hyper, noise, &mut party.rng)?;
            for step in 0..update.noised_steps {
                let c = Charge::gaussian(format!("q{qid}/batch{step}"), hyper.sigma);
                party.charge(c.clone())?;
                charges.push(c);
            }
            update.params
        }
        QueryPayload::TrainSvm { weights, hyper } => {
            party.clipped_shard(hyper.clip)?;
            let shard = &party.clipped.as_ref().expect("clipped above").1;
            let update = svm::local_steps(&weights.values, shard, hyper, noise, &mut party.rng)?;
            for step in 0..update.noised_steps {
                let c = Charge::gaussian(format!("q{qid}/step{step}"), hyper.sigma);
                party.charge(c.clone())?;
                charges.push(c);
            }
            update.params
        }
        QueryPayload::PartialDecrypt { .. } => unreachable!("handled above"),
    };
    let compute_ms = started.elapsed().as_secs_f64() * 1e3;

    let encrypt_started = Instant::now();
    let body = match &party.keys {
        Some(keys) => {
            let pk = keys.share.public_key();
            let mut ciphertexts = Vec::with_capacity(values.len());
            for v in &values {
                let m = keys.codec.encode(*v)?;
                ciphertexts.push(encrypt(pk, &m, &mut party.crypto_rng)?);
            }
            party.encryptions += ciphertexts.len() as u64;
            ResponseBody::Ciphertexts(ciphertexts)
        }
        None => ResponseBody::Plain(values),
    };
    let encryptions = match &body {
        ResponseBody::Ciphertexts(c) => c.len() as u64,
        _ => 0,
    };
    Ok(QueryResponse {
        query_id: qid,
        party_index: party.index,
        body,
        timing: PartyTiming {
            compute_ms,
            encrypt_ms: encrypt_started.elapsed().as_secs_f64() * 1e3,
        },
        charges,
        encryptions,
    })
}

/// Serves queries until the aggregator shuts down or disconnects.
///
/// `drop_after` makes the party vanish after answering that many queries,
/// for failure-injection tests.
pub fn serve<E: PartyEndpoint>(
    party: &mut PartyState,
    endpoint: &mut E,
    session: &str,
    drop_after: Option<usize>,
) -> Result<(), FederationError> {
    let mut handled = 0usize;
    while let Some(frame) = endpoint.recv() {
        if drop_after.is_some_and(|limit| handled >= limit) {
            log::info!("party {} dropping off after {handled} queries", party.index);
            return Ok(());
        }
        let reply = match wire::decode(&frame) {
            Ok((_, Message::Shutdown)) => return Ok(()),
            Ok((s, Message::Query(q))) if s == session => match party_handle(party, &q) {
                Ok(resp) => Message::Response(resp),
                Err(e) => Message::Failure(PartyFailure {
                    party_index: party.index,
                    message: e.to_string(),
                }),
            },
            Ok((s, Message::Query(_))) => Message::Failure(PartyFailure {
                party_index: party.index,
                message: format!("unknown session {s:?}"),
            }),
            Ok((_, other)) => Message::Failure(PartyFailure {
                party_index: party.index,
                message: format!("unexpected message {other:?}"),
            }),
            Err(e) => Message::Failure(PartyFailure {
                party_index: party.index,
                message: e.to_string(),
            }),
        };
        handled += 1;
        endpoint.send(wire::encode(session, &reply))?;
    }
    Ok(())
}
