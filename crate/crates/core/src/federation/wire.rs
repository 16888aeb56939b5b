//! Length-prefixed JSON envelopes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::message::{Query, QueryResponse};
use super::FederationError;

pub const WIRE_VERSION: u32 = 1;
/// Upper bound on a single frame, to reject corrupt length prefixes.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub session: String,
    pub query_id: u64,
    pub kind: String,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct QueryBody {
    payload: super::message::QueryPayload,
    noise: Option<crate::dpcore::NoiseSpec>,
    charges: Vec<crate::dpcore::Charge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub party_index: usize,
    pub token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyFailure {
    pub party_index: usize,
    pub message: String,
}

/// Decoded message of either direction.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Query(Query),
    Response(QueryResponse),
    Failure(PartyFailure),
    Hello(Hello),
    Welcome,
    Shutdown,
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("protocol types serialize")
}

fn from_value<T: serde::de::DeserializeOwned>(
    value: serde_json::Value,
) -> Result<T, FederationError> {
    serde_json::from_value(value).map_err(|e| FederationError::Deserialize(e.to_string()))
}

pub fn encode(session: &str, message: &Message) -> Vec<u8> {
    let (query_id, kind, payload) = match message {
        Message::Query(q) => (
            q.query_id,
            q.kind().as_str().to_string(),
            to_value(&QueryBody {
                payload: q.payload.clone(),
                noise: q.noise.clone(),
                charges: q.charges.clone(),
            }),
        ),
        Message::Response(r) => (r.query_id, "response".to_string(), to_value(r)),
        Message::Failure(f) => (0, "error".to_string(), to_value(f)),
        Message::Hello(h) => (0, "hello".to_string(), to_value(h)),
        Message::Welcome => (0, "welcome".to_string(), serde_json::Value::Null),
        Message::Shutdown => (0, "shutdown".to_string(), serde_json::Value::Null),
    };
    let envelope = Envelope {
        v: WIRE_VERSION,
        session: session.to_string(),
        query_id,
        kind,
        payload,
    };
    serde_json::to_vec(&envelope).expect("envelope serializes")
}

pub fn decode(bytes: &[u8]) -> Result<(String, Message), FederationError> {
    let envelope: Envelope =
        serde_json::from_slice(bytes).map_err(|e| FederationError::Deserialize(e.to_string()))?;
    if envelope.v != WIRE_VERSION {
        return Err(FederationError::Deserialize(format!(
            "unsupported wire version {}",
            envelope.v
        )));
    }
    let message = match envelope.kind.as_str() {
        "response" => Message::Response(from_value(envelope.payload)?),
        "error" => Message::Failure(from_value(envelope.payload)?),
        "hello" => Message::Hello(from_value(envelope.payload)?),
        "welcome" => Message::Welcome,
        "shutdown" => Message::Shutdown,
        other => {
            let kind = super::message::QueryKind::parse(other)
                .ok_or_else(|| FederationError::UnknownQueryKind(other.to_string()))?;
            let body: QueryBody = from_value(envelope.payload)?;
            if body.payload.kind() != kind {
                return Err(FederationError::Deserialize(format!(
                    "envelope kind {other} does not match payload"
                )));
            }
            Message::Query(Query {
                query_id: envelope.query_id,
                payload: body.payload,
                noise: body.noise,
                charges: body.charges,
            })
        }
    };
    Ok((envelope.session, message))
}

/// Writes a 4-byte big-endian length followed by `bytes`.
pub fn write_frame<W: Write>(writer: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(bytes.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame too large"))?;
    writer.write_all(&len.to_be_bytes())?;
    writer.write_all(bytes)?;
    writer.flush()
}

pub fn read_frame<R: Read>(reader: &mut R) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf)?;
    Ok(buf)
}
