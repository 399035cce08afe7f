//! Seed derivation.
//!
//! All randomness comes from ChaCha20 streams (`rand_chacha` 0.9) seeded with
//! `seed_from_u64`. Independent streams are derived from one master seed with
//! [`mix`], a SplitMix64 finalizer applied to the master seed offset by the
//! golden-ratio increment times `index + 1`. Echo `l` of an ensemble uses
//! `base.wrapping_add(l)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const GENERATOR: &str = "chacha20/rand_chacha-0.9/seed_from_u64";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `index` from `master`.
pub fn mix(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_separates_indices() {
        let a = mix(7, 0);
        let b = mix(7, 1);
        let c = mix(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix(7, 0));
    }
}
