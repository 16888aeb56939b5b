//! Shared fixtures for the criterion benches.

use hybridfl::thpaillier::{
    deal_keys, encrypt, partial_decrypt, Ciphertext, FixedPointCodec, KeyShare, PartialDecryption,
    PublicKey,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Key sizes to benchmark: `HYBRIDFL_BENCH_BITS` as a comma-separated
/// list, 512 and 1024 by default.
pub fn bench_bits() -> Vec<usize> {
    std::env::var("HYBRIDFL_BENCH_BITS")
        .ok()
        .map(|v| v.split(',').filter_map(|b| b.trim().parse().ok()).collect())
        .filter(|v: &Vec<usize>| !v.is_empty())
        .unwrap_or_else(|| vec![512, 1024])
}

/// A dealt key with one encrypted value and a quorum of its partials.
pub struct Fixture {
    pub pk: PublicKey,
    pub shares: Vec<KeyShare>,
    pub codec: FixedPointCodec,
    pub ciphertext: Ciphertext,
    pub partials: Vec<PartialDecryption>,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(bits: usize, n_parties: usize, threshold: usize) -> Self {
        let (pk, shares) = deal_keys(bits, n_parties, threshold, bits as u64).expect("key dealing");
        let codec = FixedPointCodec::new(&pk, FixedPointCodec::DEFAULT_FRAC_BITS, n_parties)
            .expect("codec");
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let ciphertext =
            encrypt(&pk, &codec.encode(3.25).expect("encode"), &mut rng).expect("encrypt");
        let partials = shares[..threshold]
            .iter()
            .map(|s| partial_decrypt(s, &ciphertext))
            .collect();
        Fixture {
            pk,
            shares,
            codec,
            ciphertext,
            partials,
            rng,
        }
    }
}
