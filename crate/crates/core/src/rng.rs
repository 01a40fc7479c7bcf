//! Seeded, counter-based random number generation.
//!
//! Every trial owns a ChaCha8 stream whose seed is derived from a master
//! seed and the trial's coordinates, so grid cells are independent and
//! reproducible in any execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MrfaRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> MrfaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of keys into a trial seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(master), |h, &k| splitmix64(h ^ splitmix64(k)))
}
