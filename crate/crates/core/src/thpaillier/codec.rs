//! Fixed-point mapping of signed reals into `Z_n`.
//!
//! A real `x` is encoded as `round(x * 2^f)`; negatives wrap to the upper
//! half of the ring, so `decode` treats anything above `n/2` as negative.
//! Sums of up to `max_summands` encodings stay unambiguous as long as
//! `max_summands * 2^f * max_magnitude < n/2`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive, Zero};

use super::{CryptoError, PublicKey};

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointCodec {
    frac_bits: u32,
    modulus: BigUint,
    half: BigUint,
    max_summands: usize,
    max_magnitude: f64,
}

impl FixedPointCodec {
    pub const DEFAULT_FRAC_BITS: u32 = 32;

    pub fn new(pk: &PublicKey, frac_bits: u32, max_summands: usize) -> Result<Self, CryptoError> {
        Self::for_modulus(pk.n().clone(), frac_bits, max_summands)
    }

    pub fn for_modulus(
        modulus: BigUint,
        frac_bits: u32,
        max_summands: usize,
    ) -> Result<Self, CryptoError> {
        let max_summands = max_summands.max(1);
        let half = &modulus >> 1u32;
        let budget = (BigUint::from(max_summands) << frac_bits) + 1u32;
        let limit = &half / &budget;
        if limit.is_zero() {
            return Err(CryptoError::Malformed(format!(
                "modulus too small for {frac_bits} fractional bits over {max_summands} summands"
            )));
        }
        let max_magnitude = limit.to_f64().filter(|m| m.is_finite()).unwrap_or(f64::MAX);
        Ok(FixedPointCodec {
            frac_bits,
            modulus,
            half,
            max_summands,
            max_magnitude,
        })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn max_magnitude(&self) -> f64 {
        self.max_magnitude
    }

    pub fn max_summands(&self) -> usize {
        self.max_summands
    }

    /// Worst-case decode error of one encoding: `2^-f`.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn encode(&self, x: f64) -> Result<BigUint, CryptoError> {
        if !x.is_finite() || x.abs() > self.max_magnitude {
            return Err(CryptoError::MagnitudeOverflow {
                value: x,
                max: self.max_magnitude,
            });
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round();
        let signed = BigInt::from_f64(scaled).expect("finite value converts");
        Ok(match signed.sign() {
            Sign::Minus => &self.modulus - signed.magnitude(),
            _ => signed.magnitude().clone(),
        })
    }

    /// Decodes a sum of at most `n_summands` encodings.
    pub fn decode(&self, m: &BigUint, n_summands: usize) -> Result<f64, CryptoError> {
        if n_summands > self.max_summands {
            return Err(CryptoError::TooManySummands {
                got: n_summands,
                budget: self.max_summands,
            });
        }
        if m >= &self.modulus {
            return Err(CryptoError::PlaintextOutOfRange);
        }
        let magnitude = if m > &self.half {
            -(&self.modulus - m).to_f64().unwrap_or(f64::INFINITY)
        } else {
            m.to_f64().unwrap_or(f64::INFINITY)
        };
        Ok(magnitude / (self.frac_bits as f64).exp2())
    }
}
