//! Deterministic sub-seed derivation.
//!
//! Every random stream in the pipeline hangs off one global seed. Each stage
//! mixes its own label into that seed so streams never alias each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for a named stage.
pub fn derive(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the label, then mixed with the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Derive the seed for the `index`-th sub-stream of a stage.
pub fn derive_indexed(seed: u64, stage: &str, index: u64) -> u64 {
    splitmix64(derive(seed, stage) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_do_not_alias() {
        assert_ne!(derive(7, "synth"), derive(7, "train"));
        assert_ne!(derive_indexed(7, "class", 1), derive_indexed(7, "class", 2));
        assert_eq!(derive(7, "synth"), derive(7, "synth"));
    }
}
