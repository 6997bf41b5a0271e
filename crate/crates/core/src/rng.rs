//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose 256-bit
//! key is `(seed, purpose, a, b)`. Streams for different subsets, rows or
//! repetitions are therefore independent of evaluation order and of the number
//! of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinguishes the places that draw randomness from the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Joint = 1,
    Outer = 2,
    Inner = 3,
    Permutations = 4,
    TieBreak = 5,
    Subsample = 6,
    Repetition = 7,
    Dataset = 8,
}

pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed, used to give each repetition of an experiment its
/// own seed.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, Purpose::Repetition, index, 0).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_keyed() {
        let a = stream(7, Purpose::Outer, 3, 0).next_u64();
        let b = stream(7, Purpose::Outer, 3, 0).next_u64();
        let c = stream(7, Purpose::Outer, 3, 1).next_u64();
        let e = stream(7, Purpose::Inner, 3, 0).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, e);
    }
}
