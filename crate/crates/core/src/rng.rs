//! Reproducible, order-independent random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the user seed and positioned
//! on a stream id mixed from a domain tag and an index, so replicate `b`
//! draws the same numbers regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_MULTIPLIERS: u64 = 0x6d75_6c74;
pub(crate) const DOMAIN_DATASET: u64 = 0x6461_7461;
pub(crate) const DOMAIN_MIXTURE: u64 = 0x6d69_7874;
pub(crate) const DOMAIN_PAIRS: u64 = 0x7061_6972;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(domain ^ splitmix64(index)));
    rng
}

/// Derive a child seed, for nesting (dataset `r` gets its own bootstrap seed).
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain.wrapping_add(splitmix64(index))))
}
