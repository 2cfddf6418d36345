//! Deterministic seed streams.
//!
//! Every random job (bootstrap replicate, fold split, synthetic sample) gets
//! its own seed derived from a parent seed and a path of integer tags, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `parent` at the given tag path.
pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(parent), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Tag namespaces keep unrelated streams apart.
pub mod tag {
    pub const BOOTSTRAP: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const PRIOR: u64 = 3;
    pub const THRESHOLD: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const TUNING: u64 = 6;
    pub const SAMPLE: u64 = 7;
    pub const ENSEMBLE: u64 = 8;
}
