//! Counter-based random streams.
//!
//! Every variate is a pure function of `(seed, stream, position)`: the seed
//! keys a ChaCha8 block cipher, the stream id selects one of 2^64 independent
//! keystreams and the position is the word counter inside that keystream.
//! Realization `i` of an ensemble always reads stream `i`, and cells are
//! consumed in row-major order, so output never depends on thread count or
//! scheduling.
//!
//! The generator is fixed for the 0.x series: `ChaCha8Rng::seed_from_u64`
//! from `rand_chacha` 0.9, normals from `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Keystream `stream` under `seed`, positioned at word 0.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed for an independent purpose (e.g. grain seeds vs.
/// orientations) with a splitmix64 finalizer over `seed ^ tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
