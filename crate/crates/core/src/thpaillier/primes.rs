//! Prime and randomness helpers for key dealing.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

use super::CryptoError;

const SIEVE_LIMIT: usize = 8192;
const MILLER_RABIN_ROUNDS: usize = 32;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT];
        let mut primes = Vec::new();
        for i in 2..SIEVE_LIMIT {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j < SIEVE_LIMIT {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Uniform integer with exactly `bits` bits (top bit set).
pub(crate) fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    assert!(bits > 0);
    let n_bytes = bits.div_ceil(8) as usize;
    let mut bytes = vec![0u8; n_bytes];
    rng.fill_bytes(&mut bytes);
    let excess = (n_bytes as u64) * 8 - bits;
    bytes[0] &= 0xffu8 >> excess;
    let mut value = BigUint::from_bytes_be(&bytes);
    value.set_bit(bits - 1, true);
    value
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub(crate) fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    let n_bytes = bits.div_ceil(8) as usize;
    let excess = (n_bytes as u64) * 8 - bits;
    let mut bytes = vec![0u8; n_bytes];
    loop {
        rng.fill_bytes(&mut bytes);
        bytes[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&bytes);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform unit of `Z_n`.
pub(crate) fn random_unit<R: RngCore + ?Sized>(rng: &mut R, n: &BigUint) -> BigUint {
    loop {
        let r = random_below(rng, n);
        if !r.is_zero() && r.gcd(n).is_one() {
            return r;
        }
    }
}

/// Miller-Rabin with random bases, preceded by trial division.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, MILLER_RABIN_ROUNDS, rng)
}

fn miller_rabin<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let base_bound = n - BigUint::from(3u32);
    'witness: for _ in 0..rounds {
        let a = random_below(rng, &base_bound) + 2u32;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Safe prime `p = 2p' + 1` with exactly `bits` bits and the top two bits
/// set, so that the product of two such primes has exactly `2 * bits` bits.
/// Returns `(p, p')`.
pub fn safe_prime<R: RngCore + ?Sized>(
    bits: u64,
    rng: &mut R,
    max_candidates: u64,
) -> Result<(BigUint, BigUint), CryptoError> {
    assert!(bits >= 16, "safe primes below 16 bits are not supported");
    let primes = small_primes();
    let lower = BigUint::from(3u32) << (bits - 3);
    let upper = BigUint::one() << (bits - 1);
    let two = BigUint::from(2u32);
    let mut tried = 0u64;

    while tried < max_candidates {
        // p' with bits-1 bits and its top two bits set
        let mut sophie = random_bits(rng, bits - 1);
        sophie.set_bit(bits - 3, true);
        sophie.set_bit(0, true);
        let mut residues: Vec<u32> = primes
            .iter()
            .map(|&q| (&sophie % q).to_u32().expect("residue below u32"))
            .collect();

        while sophie < upper && tried < max_candidates {
            tried += 1;
            // p' not divisible by q, and 2p'+1 not divisible by q
            let survives = primes
                .iter()
                .zip(&residues)
                .skip(1)
                .all(|(&q, &r)| r != 0 && (2 * r + 1) % q != 0);
            if survives && sophie >= lower {
                let p = &sophie * &two + 1u32;
                // cheap Fermat filter on p before the expensive checks
                if two.modpow(&(&p - 1u32), &p).is_one()
                    && miller_rabin(&sophie, MILLER_RABIN_ROUNDS, rng)
                    && miller_rabin(&p, MILLER_RABIN_ROUNDS, rng)
                {
                    return Ok((p, sophie));
                }
            }
            sophie += 2u32;
            for (r, &q) in residues.iter_mut().zip(primes) {
                *r = (*r + 2) % q;
            }
        }
    }
    Err(CryptoError::PrimeGenerationTimeout(tried))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn classifies_small_numbers() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let primes: Vec<u32> = (0..200u32)
            .filter(|&k| is_probable_prime(&BigUint::from(k), &mut rng))
            .collect();
        let expected: Vec<u32> = small_primes()
            .iter()
            .copied()
            .take_while(|&p| p < 200)
            .collect();
        assert_eq!(primes, expected);
    }

    #[test]
    fn rejects_carmichael_and_known_composite() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        // 561 and a product of two 64-bit primes
        assert!(!is_probable_prime(&BigUint::from(561u32), &mut rng));
        let p = BigUint::from(18446744073709551557u64);
        let q = BigUint::from(18446744073709551533u64);
        assert!(is_probable_prime(&p, &mut rng));
        assert!(!is_probable_prime(&(&p * &q), &mut rng));
    }

    #[test]
    fn safe_prime_has_requested_shape() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (p, sophie) = safe_prime(128, &mut rng, 10_000_000).unwrap();
        assert_eq!(p.bits(), 128);
        assert!(p.bit(126));
        assert_eq!(p, &sophie * 2u32 + 1u32);
        assert!(is_probable_prime(&sophie, &mut rng));
        assert!(is_probable_prime(&p, &mut rng));
    }

    #[test]
    fn random_below_stays_in_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let bound = BigUint::from(1000u32);
        for _ in 0..500 {
            assert!(random_below(&mut rng, &bound) < bound);
        }
    }
}
