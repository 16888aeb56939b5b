//! Threshold Paillier cryptosystem (Damgard-Jurik with `s = 1`) and a
//! fixed-point codec for encrypting reals.
//!
//! A trusted dealer shares the decryption exponent among `n_parties` with
//! threshold `t̄`: any `t̄` partial decryptions recover a plaintext, fewer
//! reveal nothing about it. Only additive homomorphism is provided.

mod codec;
mod encoding;
mod keys;
mod primes;

pub use codec::FixedPointCodec;
pub use encoding::FORMAT_VERSION;
pub use keys::{
    add, combine, combine_unchecked, deal_keys, deal_keys_with_rng, encrypt, partial_decrypt, sum,
    Ciphertext, KeyShare, PartialDecryption, PublicKey, MIN_KEY_BITS, RECOMMENDED_KEY_BITS,
};
pub use primes::{is_probable_prime, safe_prime};

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("threshold {threshold} must lie between 1 and the number of parties ({n_parties})")]
    InvalidThreshold { threshold: usize, n_parties: usize },
    #[error("key size of {0} bits is unsupported (even, at least 256)")]
    KeyTooSmall(usize),
    #[error("prime generation gave up after {0} candidates")]
    PrimeGenerationTimeout(u64),
    #[error("plaintext outside Z_n")]
    PlaintextOutOfRange,
    #[error("need {needed} partial decryptions, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("duplicate partial decryption from party {0}")]
    DuplicateShare(usize),
    #[error("no key share was issued to party {0}")]
    UnknownShare(usize),
    #[error("ciphertext is not a unit modulo n^2")]
    InvalidCiphertext,
    #[error("|{value}| exceeds the encodable magnitude {max}")]
    MagnitudeOverflow { value: f64, max: f64 },
    #[error("{got} summands exceed the codec budget of {budget}")]
    TooManySummands { got: usize, budget: usize },
    #[error("partial decryptions do not combine to a plaintext")]
    CombineFailed,
    #[error("malformed key material: {0}")]
    Malformed(String),
}
