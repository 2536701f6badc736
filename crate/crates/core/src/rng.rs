//! Reproducible, counter-based random streams.
//!
//! Trial `i` of a seeded experiment draws from stream `(seed, i)`, so
//! per-trial results are identical whether trials run sequentially or in
//! parallel, and independent of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Root stream for a seed.
pub fn root_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for trial `i` under `seed`.
pub fn trial_rng(seed: u64, i: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = trial_rng(7, 0);
        let mut b = trial_rng(7, 0);
        let mut c = trial_rng(7, 1);
        let xa: f64 = a.random();
        let xb: f64 = b.random();
        let xc: f64 = c.random();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }
}
