use std::time::Instant;

use clap::Args;
use hybridfl::thpaillier::{
    combine, deal_keys, encrypt, partial_decrypt, FixedPointCodec, RECOMMENDED_KEY_BITS,
};
use rand::{Rng, SeedableRng};

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct BenchArgs {
    /// Modulus size in bits.
    #[arg(long, default_value_t = RECOMMENDED_KEY_BITS)]
    pub bits: usize,
    #[arg(long, default_value_t = 3)]
    pub parties: usize,
    #[arg(long, default_value_t = 2)]
    pub trust: usize,
    /// Elements timed per operation.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the timings as one JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

pub fn bench_crypto(args: BenchArgs) -> CliResult {
    if args.trust == 0 || args.trust > args.parties || args.samples == 0 {
        return Err(CliError::config(
            "need 1 <= trust <= parties and samples > 0",
        ));
    }
    let threshold = args.parties - args.trust + 1;
    let started = Instant::now();
    let (pk, shares) =
        deal_keys(args.bits, args.parties, threshold, args.seed).map_err(CliError::config)?;
    let keygen_ms = started.elapsed().as_secs_f64() * 1e3;
    let codec = FixedPointCodec::new(&pk, FixedPointCodec::DEFAULT_FRAC_BITS, args.parties)
        .map_err(CliError::runtime)?;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(args.seed);
    let values: Vec<f64> = (0..args.samples)
        .map(|_| rng.random_range(-100.0..100.0))
        .collect();

    let started = Instant::now();
    let ciphertexts = values
        .iter()
        .map(|v| encrypt(&pk, &codec.encode(*v)?, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::runtime)?;
    let encrypt_ms = started.elapsed().as_secs_f64() * 1e3 / args.samples as f64;

    let started = Instant::now();
    let partials: Vec<Vec<_>> = ciphertexts
        .iter()
        .map(|c| {
            shares[..threshold]
                .iter()
                .map(|s| partial_decrypt(s, c))
                .collect()
        })
        .collect();
    let partial_ms = started.elapsed().as_secs_f64() * 1e3 / (args.samples * threshold) as f64;

    let started = Instant::now();
    for (parts, v) in partials.iter().zip(&values) {
        let m = combine(&pk, parts).map_err(CliError::runtime)?;
        let back = codec.decode(&m, 1).map_err(CliError::runtime)?;
        if (back - v).abs() > codec.resolution() {
            return Err(CliError::runtime(format!(
                "round trip of {v} returned {back}"
            )));
        }
    }
    let combine_ms = started.elapsed().as_secs_f64() * 1e3 / args.samples as f64;

    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "bits": pk.bit_length(),
                "parties": args.parties,
                "threshold": threshold,
                "samples": args.samples,
                "keygen_ms": keygen_ms,
                "encrypt_ms": encrypt_ms,
                "partial_decrypt_ms": partial_ms,
                "combine_ms": combine_ms,
            })
        );
    } else {
        println!(
            "{}-bit key, {} parties, threshold {threshold}, {} samples",
            pk.bit_length(),
            args.parties,
            args.samples
        );
        println!("keygen           {keygen_ms:>12.3} ms");
        println!("encrypt          {encrypt_ms:>12.3} ms per element");
        println!("partial decrypt  {partial_ms:>12.3} ms per element and share");
        println!("combine          {combine_ms:>12.3} ms per element");
    }
    Ok(())
}
