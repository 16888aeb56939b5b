//! Canonical byte form: a version byte followed by big-endian magnitudes,
//! each with a 4-byte big-endian length prefix.

use num_bigint::BigUint;

use super::{Ciphertext, CryptoError, KeyShare, PartialDecryption, PublicKey};

pub const FORMAT_VERSION: u8 = 0x01;

fn put_uint(buf: &mut Vec<u8>, value: &BigUint) {
    let bytes = if value == &BigUint::ZERO {
        Vec::new()
    } else {
        value.to_bytes_be()
    };
    buf.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(&bytes);
}

fn put_usize(buf: &mut Vec<u8>, value: usize) {
    put_uint(buf, &BigUint::from(value));
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self, CryptoError> {
        match bytes.split_first() {
            Some((&FORMAT_VERSION, rest)) => Ok(Reader { bytes: rest }),
            Some((v, _)) => Err(CryptoError::Malformed(format!(
                "unsupported format version {v:#04x}"
            ))),
            None => Err(CryptoError::Malformed("empty input".into())),
        }
    }

    fn uint(&mut self) -> Result<BigUint, CryptoError> {
        if self.bytes.len() < 4 {
            return Err(CryptoError::Malformed("truncated length prefix".into()));
        }
        let (len, rest) = self.bytes.split_at(4);
        let len = u32::from_be_bytes(len.try_into().expect("4 bytes")) as usize;
        if rest.len() < len {
            return Err(CryptoError::Malformed("truncated integer".into()));
        }
        let (value, rest) = rest.split_at(len);
        self.bytes = rest;
        Ok(BigUint::from_bytes_be(value))
    }

    fn usize(&mut self) -> Result<usize, CryptoError> {
        let value = self.uint()?;
        usize::try_from(&value)
            .map_err(|_| CryptoError::Malformed("integer field too large".into()))
    }

    fn finish(self) -> Result<(), CryptoError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(CryptoError::Malformed(format!(
                "{} trailing bytes",
                self.bytes.len()
            )))
        }
    }
}

fn put_public(buf: &mut Vec<u8>, pk: &PublicKey) {
    put_uint(buf, pk.n());
    put_usize(buf, pk.n_parties());
    put_usize(buf, pk.threshold());
}

fn read_public(reader: &mut Reader<'_>) -> Result<PublicKey, CryptoError> {
    let n = reader.uint()?;
    let n_parties = reader.usize()?;
    let threshold = reader.usize()?;
    PublicKey::from_modulus(n, n_parties, threshold)
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = vec![FORMAT_VERSION];
        put_public(&mut buf, self);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut reader = Reader::new(bytes)?;
        let pk = read_public(&mut reader)?;
        reader.finish()?;
        Ok(pk)
    }
}

impl KeyShare {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = vec![FORMAT_VERSION];
        put_usize(&mut buf, self.party_index());
        put_uint(&mut buf, self.share_value());
        put_public(&mut buf, self.public_key());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut reader = Reader::new(bytes)?;
        let party_index = reader.usize()?;
        let share_value = reader.uint()?;
        let public = read_public(&mut reader)?;
        reader.finish()?;
        KeyShare::from_parts(party_index, share_value, public)
    }
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = vec![FORMAT_VERSION];
        put_uint(&mut buf, self.value());
        buf
    }

    /// Parses without a key; range-check with [`Ciphertext::is_in_range`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut reader = Reader::new(bytes)?;
        let value = reader.uint()?;
        reader.finish()?;
        Ok(Ciphertext::from_value_unchecked(value))
    }
}

impl PartialDecryption {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = vec![FORMAT_VERSION];
        put_usize(&mut buf, self.party_index());
        put_uint(&mut buf, self.value());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut reader = Reader::new(bytes)?;
        let party_index = reader.usize()?;
        let value = reader.uint()?;
        reader.finish()?;
        Ok(PartialDecryption::from_parts(party_index, value))
    }
}

macro_rules! base64_serde {
    ($ty:ty) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                use base64::Engine as _;
                serializer.serialize_str(
                    &base64::engine::general_purpose::STANDARD.encode(self.to_bytes()),
                )
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                use base64::Engine as _;
                let text =
                    <std::borrow::Cow<'de, str> as serde::Deserialize>::deserialize(deserializer)?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(text.as_bytes())
                    .map_err(serde::de::Error::custom)?;
                <$ty>::from_bytes(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}

base64_serde!(Ciphertext);
base64_serde!(PartialDecryption);
base64_serde!(PublicKey);
base64_serde!(KeyShare);
