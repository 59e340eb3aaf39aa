//! Deterministic RNG stream derivation.
//!
//! Every particle, repetition, and grid cell draws from its own ChaCha
//! stream derived from the master seed by a counter-based scheme, so results
//! never depend on scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates structured counter inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed for a tagged component of a run.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag.rotate_left(32)).wrapping_add(index))
}

/// Generator for one unit of work (`stream` is typically a particle index).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Component tags for [`derive_seed`].
pub mod tags {
    pub const IMPULSE: u64 = 0x01;
    pub const SEQUENCE: u64 = 0x02;
    pub const COEFFS: u64 = 0x03;
    pub const FIT_TRACE: u64 = 0x04;
    pub const RATE_SAMPLE: u64 = 0x05;
    pub const FIRST_PASSAGE: u64 = 0x06;
    pub const BITS: u64 = 0x07;
}
