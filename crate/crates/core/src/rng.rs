//! Seeded random streams.
//!
//! Every replicate `i` of a run draws from `ChaCha8(master_seed)` on stream
//! `i`, so results do not depend on how replicates are spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f` for replicates `0..n` in parallel on the current rayon pool and
/// returns the results in replicate order.
pub fn replicates<T, F>(master_seed: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Derives an independent master seed for a sub-experiment.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
