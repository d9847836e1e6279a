//! Seed derivation and counter-based random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `purpose`, stable across platforms and releases: FNV-1a
/// over the root seed and purpose bytes, then mixed. Adding a new purpose
/// never perturbs existing streams.
pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in root.to_le_bytes().iter().chain(purpose.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(h)
}

pub fn rng_for(root: u64, purpose: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, purpose))
}

/// Uniform in `[0, 1)` as a pure function of `(seed, counter)`.
pub fn counter_uniform(seed: u64, counter: u64) -> f64 {
    let bits = mix64(seed ^ mix64(counter));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "init"), derive_seed(7, "data"));
        assert_ne!(derive_seed(7, "init"), derive_seed(8, "init"));
    }

    #[test]
    fn counter_uniform_in_unit_interval() {
        let mean: f64 = (0..10_000).map(|i| counter_uniform(3, i)).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
        assert!((0..1000).all(|i| (0.0..1.0).contains(&counter_uniform(9, i))));
    }
}
