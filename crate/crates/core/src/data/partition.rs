use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Disjoint, exhaustive assignment of row indices to parties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub n_parties: usize,
    pub shards: Vec<Vec<usize>>,
}

/// Shuffles `0..n_rows` and deals equal shards; the first `n_rows % n`
/// shards receive one extra row.
pub fn partition(n_rows: usize, n_parties: usize, seed: u64) -> Result<PartitionPlan, DataError> {
    if n_parties == 0 || n_parties > n_rows {
        return Err(DataError::TooManyParties {
            rows: n_rows,
            parties: n_parties,
        });
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let base = n_rows / n_parties;
    let extra = n_rows % n_parties;
    let mut shards = Vec::with_capacity(n_parties);
    let mut start = 0;
    for p in 0..n_parties {
        let len = base + usize::from(p < extra);
        shards.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(PartitionPlan { n_parties, shards })
}

/// Seeded split into `(train, test)` row indices.
pub fn train_test_split(n_rows: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let n_test = ((n_rows as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
    let test = order.split_off(n_rows - n_test);
    (order, test)
}
