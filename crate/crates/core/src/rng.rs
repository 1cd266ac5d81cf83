//! Portable seeded sampling.
//!
//! Every random choice in the crate (splits, subsamples, estimator
//! subsamples) goes through [`Sampler`]. The algorithm is pinned so that a
//! seed produces the same rows on every platform and toolchain:
//!
//! 1. The generator is ChaCha8 seeded with `ChaCha8Rng::seed_from_u64(seed)`.
//! 2. A bounded draw `below(b)` takes 64-bit outputs `r` and rejects any
//!    `r >= u64::MAX - (u64::MAX % b)`; the first accepted `r` yields `r % b`.
//! 3. Selecting `n` of `N` indices is a forward partial Fisher-Yates shuffle
//!    of `0..N`: for `i in 0..n`, swap slot `i` with slot `i + below(N - i)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform integer in `0..bound`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let r = self.rng.next_u64();
            if r < zone {
                return r % bound;
            }
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// First `n` entries of a partial Fisher-Yates shuffle of `0..total`.
    pub fn choose(&mut self, total: usize, n: usize) -> Vec<usize> {
        assert!(n <= total);
        let mut slots: Vec<usize> = (0..total).collect();
        for i in 0..n {
            let j = i + self.below((total - i) as u64) as usize;
            slots.swap(i, j);
        }
        slots.truncate(n);
        slots
    }

    /// A full uniform permutation of `0..total`.
    pub fn permutation(&mut self, total: usize) -> Vec<usize> {
        self.choose(total, total)
    }
}

/// `n` distinct indices out of `0..total`, in draw order.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    Sampler::new(seed).choose(total, n)
}
