//! Deterministic random number generation.
//!
//! Every stochastic decision in this crate (vector initialization,
//! subsampling, window draws, noise draws, seed sampling, synthetic
//! corpus generation) runs off [`DeterministicRng`], a 64-bit linear
//! congruential generator stepping with
//!
//! ```text
//! state' = state * 25214903917 + 11   (mod 2^64)
//! ```
//!
//! Separate concerns draw from separate sub-streams derived from
//! `(seed, tag)`, so disabling one step (e.g. subsampling off) never
//! shifts the draws of another.

/// Stream tags. One per randomness source, so streams stay independent.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SUBSAMPLE: u64 = 2;
    pub const WINDOW: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const SEED_SAMPLE: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
    pub const SELECTION: u64 = 7;
}

const MULTIPLIER: u64 = 25214903917;
const INCREMENT: u64 = 11;

/// splitmix64 finalizer, used only to spread `(seed, tag)` pairs over
/// the LCG state space before stepping begins.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub struct DeterministicRng {
    state: u64,
}

impl DeterministicRng {
    pub fn new(seed: u64) -> Self {
        DeterministicRng { state: seed }
    }

    /// Sub-stream for one randomness source. `worker` separates the
    /// streams of concurrent training workers (worker 0 in
    /// single-worker mode).
    pub fn for_stream(seed: u64, tag: u64, worker: usize) -> Self {
        let mixed = seed
            ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (worker as u64).wrapping_mul(0xD134_2543_DE82_EF95);
        DeterministicRng { state: splitmix64(mixed) }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        self.state
    }

    /// Uniform in [0, 1), from the top 53 bits (the strong bits of an LCG).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in 0..n via 128-bit widening multiply. Keeps the high
    /// bits dominant and the bias below n / 2^64.
    #[inline]
    pub fn next_range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}
