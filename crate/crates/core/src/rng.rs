//! Seeded randomness shared by every stochastic step.
//!
//! All generators are ChaCha8 streams seeded through `seed_from_u64`, and
//! shuffling uses a fixed Fisher–Yates variant so permutations do not depend
//! on the sampling internals of any particular `rand` release.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..bound` via the high half of a 64×64-bit product.
#[inline]
pub fn index(rng: &mut Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Fisher–Yates: for `i` from `len-1` down to 1, swap `i` with `index(rng, i+1)`.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Uniform draw from `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
