//! Seed derivation. Every random draw in the pipeline comes from a ChaCha8
//! stream whose seed is derived from one root seed and a component name via
//! SplitMix64, so components never share or perturb each other's streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// One SplitMix64 step; returns the next output and advances `state`.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed for `component` from `root`.
pub fn derive_seed(root: u64, component: &str) -> u64 {
    // FNV-1a of the name, folded into the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut state = root ^ h;
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// ChaCha8 generator for a named component of a seeded run.
pub fn stream(root: u64, component: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, component))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs for seed 0 of the canonical SplitMix64.
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn named_streams_are_distinct_and_stable() {
        let a: u64 = stream(7, "blobs").gen();
        let b: u64 = stream(7, "blobs").gen();
        let c: u64 = stream(7, "split").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, "x"), derive_seed(2, "x"));
    }
}
