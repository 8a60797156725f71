//! Seed derivation and the crate's reproducible RNG.
//!
//! Every source of randomness (weight init, channel draws, trial streams,
//! data shuffling) is a `ChaCha12Rng` seeded through [`derive_seed`] from one
//! top-level experiment seed plus a stream name, so runs are reproducible and
//! parallel trials get independent streams without sharing state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derives a child seed from `base` and a stream `label` (splitmix64 over the
/// label bytes; stable across platforms and releases).
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &b in label.as_bytes() {
        state = splitmix64(state ^ u64::from(b));
    }
    splitmix64(state)
}

/// Derives a child seed from `base`, a stream `label`, and an index
/// (per-trial / per-frame streams).
pub fn derive_seed_indexed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(base, label) ^ splitmix64(index.wrapping_add(1)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The crate's RNG, seeded from a derived seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// RNG for the named stream of an experiment.
pub fn stream_rng(base: u64, label: &str) -> ChaCha12Rng {
    rng_from_seed(derive_seed(base, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive_seed(7, "train"), derive_seed(7, "train"));
        assert_ne!(derive_seed(7, "train"), derive_seed(7, "channel"));
        assert_ne!(derive_seed(7, "train"), derive_seed(8, "train"));
        assert_ne!(
            derive_seed_indexed(7, "trial", 0),
            derive_seed_indexed(7, "trial", 1)
        );
    }

    #[test]
    fn streams_reproduce_bit_exactly() {
        let mut r1 = stream_rng(3, "x");
        let mut r2 = stream_rng(3, "x");
        let a: Vec<u64> = (0..16).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..16).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }
}
