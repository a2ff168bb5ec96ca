//! Deterministic seed splitting.
//!
//! Every random draw in the crate comes from a ChaCha8 generator addressed by
//! `(seed, stream)`: the 64-bit seed keys the generator and the stream index
//! selects one of 2^64 disjoint keystreams. Index `j` of a training set, trial
//! `t` of an experiment and batch `b` of a Monte Carlo estimate each get their
//! own stream, so work can be scheduled in any order and still reproduce the
//! same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for stream `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of keys, e.g.
/// `derive(master, &[m, trial])`.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(seed), |acc, &k| mix64(acc ^ mix64(k)))
}
