use std::path::{Path, PathBuf};

use clap::Args;
use hybridfl::thpaillier::{
    deal_keys, deal_keys_with_rng, KeyShare, PublicKey, RECOMMENDED_KEY_BITS,
};

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct KeygenArgs {
    /// Number of parties n.
    #[arg(long)]
    pub parties: usize,
    /// Trust parameter t; decryption needs n - t + 1 shares.
    #[arg(long)]
    pub trust: usize,
    /// Modulus size in bits.
    #[arg(long, default_value_t = RECOMMENDED_KEY_BITS)]
    pub bits: usize,
    /// Output directory for `public.key` and `share-<i>.key`.
    #[arg(long)]
    pub out: PathBuf,
    /// Deterministic dealing for tests; operating-system randomness otherwise.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn public_key_path(dir: &Path) -> PathBuf {
    dir.join("public.key")
}

pub fn share_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("share-{index}.key"))
}

pub fn read_public_key(path: &Path) -> CliResult<PublicKey> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    PublicKey::from_bytes(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn read_share(path: &Path) -> CliResult<KeyShare> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    KeyShare::from_bytes(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn keygen(args: KeygenArgs) -> CliResult {
    let n = args.parties;
    if args.trust == 0 || args.trust > n {
        return Err(CliError::config(format!(
            "trust t = {} is outside 1..={n}",
            args.trust
        )));
    }
    let threshold = n - args.trust + 1;
    let dealt = match args.seed {
        Some(seed) => deal_keys(args.bits, n, threshold, seed),
        None => deal_keys_with_rng(args.bits, n, threshold, &mut rand::rng()),
    };
    let (pk, shares) = dealt.map_err(CliError::config)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out.display())))?;
    let write = |path: PathBuf, bytes: Vec<u8>| {
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    };
    write(public_key_path(&args.out), pk.to_bytes())?;
    for share in &shares {
        write(share_path(&args.out, share.party_index()), share.to_bytes())?;
    }
    println!(
        "dealt a {}-bit key for {n} parties; any {threshold} of them decrypt; files in {}",
        pk.bit_length(),
        args.out.display()
    );
    Ok(())
}
