//! Seed streams for embarrassingly parallel replication.
//!
//! Each replication gets its own generator seeded through a mixing
//! function, so results do not depend on scheduling and disjoint stream
//! indices give unrelated draws.

/// SplitMix64 finalizer; bijective on u64 with strong avalanche.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of the generator family rooted at `base`.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base.wrapping_add(splitmix64(stream)))
}
