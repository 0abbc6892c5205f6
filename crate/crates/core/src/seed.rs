//! Named seed derivation.
//!
//! Every random stream in the crate is derived from a global seed, a
//! component label and an index, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `(seed, label, index)`.
pub fn derive(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// RNG for the stream `(seed, label, index)`.
pub fn rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, index))
}

/// Hashes integer lattice coordinates into a uniform value in `(0, 1)`.
pub(crate) fn lattice_uniform(seed: u64, ix: i64, iy: i64, salt: u64) -> f64 {
    let h = splitmix64(
        splitmix64(seed ^ splitmix64(ix as u64)) ^ splitmix64((iy as u64).wrapping_mul(31).wrapping_add(salt)),
    );
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}
