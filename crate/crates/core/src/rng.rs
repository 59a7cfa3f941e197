//! Named, independent random streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: &str, idx: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for b in tag.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &i in idx {
        h = splitmix(h ^ splitmix(i));
    }
    h
}

/// A ChaCha stream keyed by `(seed, tag, idx)`. Streams with different
/// tags or indices are statistically independent.
pub fn stream(seed: u64, tag: &str, idx: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, idx))
}
