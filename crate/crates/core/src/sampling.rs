//! Seeded, shard-stable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples per Monte Carlo shard. Fixed so results do not depend on thread count.
pub const SHARD_SIZE: usize = 4096;

/// Generator for one shard: the master seed with the shard index as stream id.
pub fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    rng
}

/// `(shard index, samples in shard)` for a total sample count.
pub fn shards(samples: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..samples.div_ceil(SHARD_SIZE)).map(move |k| (k, SHARD_SIZE.min(samples - k * SHARD_SIZE)))
}

/// Sample mean and its standard error from running sums.
pub fn mean_and_se(sum: f64, sum_sq: f64, count: usize) -> (f64, f64) {
    let n = count as f64;
    let mean = sum / n;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}
