//! Seeded randomness.
//!
//! Every random stream is a ChaCha8 generator (`rand_chacha`), whose output is
//! fixed by its algorithm and therefore identical on all platforms. A single
//! master seed fans out into independent sub-seeds with [`derive_seed`]:
//!
//! ```text
//! sub_seed(master, stream) = splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! Streams are numbered by the caller (repeat index, phase index, ...), so the
//! seed each piece of work receives never depends on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` from `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// The generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
