use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::primes::{random_below, random_unit, safe_prime};
use super::CryptoError;

/// Smallest modulus accepted by [`deal_keys`].
pub const MIN_KEY_BITS: usize = 256;
/// Modulus size for deployments.
pub const RECOMMENDED_KEY_BITS: usize = 2048;

const PRIME_CANDIDATE_BUDGET: u64 = 50_000_000;

/// Public half of a threshold Paillier key with generator `g = n + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    g: BigUint,
    combine_delta: BigUint,
    /// (4 * delta^2)^-1 mod n, applied when combining partial decryptions.
    combine_factor_inv: BigUint,
    n_parties: usize,
    threshold: usize,
}

impl PublicKey {
    pub fn from_modulus(
        n: BigUint,
        n_parties: usize,
        threshold: usize,
    ) -> Result<Self, CryptoError> {
        if threshold == 0 || threshold > n_parties {
            return Err(CryptoError::InvalidThreshold {
                threshold,
                n_parties,
            });
        }
        if n.bits() < 16 || n.is_even() {
            return Err(CryptoError::Malformed("modulus must be odd".into()));
        }
        let n_squared = &n * &n;
        let g = &n + 1u32;
        let combine_delta = factorial(n_parties);
        let factor = (BigUint::from(4u32) * &combine_delta * &combine_delta) % &n;
        let combine_factor_inv = factor.modinv(&n).ok_or_else(|| {
            CryptoError::Malformed("modulus shares a factor with n_parties!".into())
        })?;
        Ok(PublicKey {
            n,
            n_squared,
            g,
            combine_delta,
            combine_factor_inv,
            n_parties,
            threshold,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn combine_delta(&self) -> &BigUint {
        &self.combine_delta
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    /// Minimum number of partial decryptions needed to decrypt.
    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn bit_length(&self) -> u64 {
        self.n.bits()
    }
}

/// One party's Shamir share of the decryption exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyShare {
    party_index: usize,
    share_value: BigUint,
    public: PublicKey,
}

impl KeyShare {
    pub(crate) fn from_parts(
        party_index: usize,
        share_value: BigUint,
        public: PublicKey,
    ) -> Result<Self, CryptoError> {
        if party_index == 0 || party_index > public.n_parties {
            return Err(CryptoError::UnknownShare(party_index));
        }
        Ok(KeyShare {
            party_index,
            share_value,
            public,
        })
    }

    /// 1-based.
    pub fn party_index(&self) -> usize {
        self.party_index
    }

    pub fn share_value(&self) -> &BigUint {
        &self.share_value
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    value: BigUint,
}

impl Ciphertext {
    /// Wraps a raw group element after checking `0 < value < n^2` and
    /// `gcd(value, n) = 1`.
    pub fn from_value(pk: &PublicKey, value: BigUint) -> Result<Self, CryptoError> {
        if value.is_zero() || value >= pk.n_squared || !value.gcd(&pk.n).is_one() {
            return Err(CryptoError::InvalidCiphertext);
        }
        Ok(Ciphertext { value })
    }

    pub(crate) fn from_value_unchecked(value: BigUint) -> Self {
        Ciphertext { value }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Range check only; skips the gcd.
    pub fn is_in_range(&self, pk: &PublicKey) -> bool {
        !self.value.is_zero() && self.value < pk.n_squared
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialDecryption {
    party_index: usize,
    value: BigUint,
}

impl PartialDecryption {
    pub(crate) fn from_parts(party_index: usize, value: BigUint) -> Self {
        PartialDecryption { party_index, value }
    }

    pub fn party_index(&self) -> usize {
        self.party_index
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }
}

fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Trusted-dealer key generation from a seed.
pub fn deal_keys(
    bit_length: usize,
    n_parties: usize,
    threshold: usize,
    rng_seed: u64,
) -> Result<(PublicKey, Vec<KeyShare>), CryptoError> {
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    deal_keys_with_rng(bit_length, n_parties, threshold, &mut rng)
}

/// Trusted-dealer key generation: safe primes `p = 2p'+1`, `q = 2q'+1`,
/// decryption exponent `d = 0 mod p'q'`, `d = 1 mod n`, shared with a
/// degree `threshold - 1` polynomial over `Z_{n p' q'}`.
pub fn deal_keys_with_rng<R: RngCore + ?Sized>(
    bit_length: usize,
    n_parties: usize,
    threshold: usize,
    rng: &mut R,
) -> Result<(PublicKey, Vec<KeyShare>), CryptoError> {
    if bit_length < MIN_KEY_BITS || !bit_length.is_multiple_of(2) {
        return Err(CryptoError::KeyTooSmall(bit_length));
    }
    if threshold == 0 || threshold > n_parties {
        return Err(CryptoError::InvalidThreshold {
            threshold,
            n_parties,
        });
    }
    let half = (bit_length / 2) as u64;
    let (p, p_sophie) = safe_prime(half, rng, PRIME_CANDIDATE_BUDGET)?;
    let (q, q_sophie) = loop {
        let candidate = safe_prime(half, rng, PRIME_CANDIDATE_BUDGET)?;
        if candidate.0 != p {
            break candidate;
        }
    };
    let n = &p * &q;
    debug_assert_eq!(n.bits() as usize, bit_length);
    let m = &p_sophie * &q_sophie;
    let n_m = &n * &m;

    // d = m * (m^-1 mod n): d = 0 mod m and d = 1 mod n
    let m_inv = m
        .modinv(&n)
        .ok_or_else(|| CryptoError::Malformed("p'q' not invertible mod n".into()))?;
    let d = (&m * m_inv) % &n_m;

    let public = PublicKey::from_modulus(n, n_parties, threshold)?;

    let coefficients: Vec<BigUint> = std::iter::once(d)
        .chain((1..threshold).map(|_| random_below(rng, &n_m)))
        .collect();
    let shares = (1..=n_parties)
        .map(|i| {
            let x = BigUint::from(i);
            // Horner evaluation mod n*m
            let value = coefficients
                .iter()
                .rev()
                .fold(BigUint::zero(), |acc, a| (acc * &x + a) % &n_m);
            KeyShare::from_parts(i, value, public.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((public, shares))
}

/// `Enc(m) = (1 + m n) r^n mod n^2` with fresh `r` from `rng`.
pub fn encrypt<R: RngCore + ?Sized>(
    pk: &PublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, CryptoError> {
    if m >= &pk.n {
        return Err(CryptoError::PlaintextOutOfRange);
    }
    let r = random_unit(rng, &pk.n);
    let gm = (BigUint::one() + m * &pk.n) % &pk.n_squared;
    let rn = r.modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext::from_value_unchecked((gm * rn) % &pk.n_squared))
}

/// Homomorphic addition: decrypts to `(m_a + m_b) mod n`.
pub fn add(pk: &PublicKey, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext::from_value_unchecked((&a.value * &b.value) % &pk.n_squared)
}

/// Folds [`add`] over a non-empty slice.
pub fn sum<'a, I>(pk: &PublicKey, ciphertexts: I) -> Option<Ciphertext>
where
    I: IntoIterator<Item = &'a Ciphertext>,
{
    let mut iter = ciphertexts.into_iter();
    let first = iter.next()?.clone();
    Some(iter.fold(first, |acc, c| add(pk, &acc, c)))
}

/// `c^(2 delta s_i) mod n^2`.
pub fn partial_decrypt(share: &KeyShare, c: &Ciphertext) -> PartialDecryption {
    let pk = &share.public;
    let exponent = BigUint::from(2u32) * &pk.combine_delta * &share.share_value;
    PartialDecryption {
        party_index: share.party_index,
        value: c.value.modpow(&exponent, &pk.n_squared),
    }
}

/// Recovers the plaintext from at least `threshold` partial decryptions of
/// the same ciphertext.
pub fn combine(pk: &PublicKey, parts: &[PartialDecryption]) -> Result<BigUint, CryptoError> {
    let mut seen = BTreeSet::new();
    for part in parts {
        if part.party_index == 0 || part.party_index > pk.n_parties {
            return Err(CryptoError::UnknownShare(part.party_index));
        }
        if !seen.insert(part.party_index) {
            return Err(CryptoError::DuplicateShare(part.party_index));
        }
    }
    if parts.len() < pk.threshold {
        return Err(CryptoError::InsufficientShares {
            needed: pk.threshold,
            got: parts.len(),
        });
    }
    interpolate(pk, parts).ok_or(CryptoError::CombineFailed)
}

/// Lagrange interpolation in the exponent over whatever parts are given,
/// without the quorum check. Returns `None` when the result is not of the
/// form `1 + k n`. Used to measure what a sub-threshold coalition learns.
pub fn combine_unchecked(pk: &PublicKey, parts: &[PartialDecryption]) -> Option<BigUint> {
    if parts.is_empty() {
        return None;
    }
    interpolate(pk, parts)
}

fn interpolate(pk: &PublicKey, parts: &[PartialDecryption]) -> Option<BigUint> {
    let delta = BigInt::from_biguint(Sign::Plus, pk.combine_delta.clone());
    let mut acc = BigUint::one();
    for part in parts {
        let i = part.party_index as i64;
        let mut numerator = delta.clone();
        let mut denominator = BigInt::one();
        for other in parts {
            let j = other.party_index as i64;
            if j != i {
                numerator *= j;
                denominator *= j - i;
            }
        }
        let (mu, rem) = numerator.div_rem(&denominator);
        debug_assert!(
            rem.is_zero(),
            "delta-scaled Lagrange coefficient must be integral"
        );
        let exponent = (mu.abs() * 2u32).to_biguint()?;
        let base = if mu.is_negative() {
            part.value.modinv(&pk.n_squared)?
        } else {
            part.value.clone()
        };
        acc = (acc * base.modpow(&exponent, &pk.n_squared)) % &pk.n_squared;
    }
    if acc.is_zero() {
        return None;
    }
    let shifted = acc - 1u32;
    let (l_value, rem) = shifted.div_rem(&pk.n);
    if !rem.is_zero() {
        return None;
    }
    Some((l_value * &pk.combine_factor_inv) % &pk.n)
}
