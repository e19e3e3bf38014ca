//! Seed streams.
//!
//! Every random draw in a run comes from a ChaCha20 keystream. The 256-bit key
//! is the run seed as a little-endian `u64` in bytes 0..8 followed by 24 zero
//! bytes; the 64-bit ChaCha stream id selects the purpose of the draws:
//!
//! | stream | purpose                                  |
//! |--------|------------------------------------------|
//! | 1      | per-agent ε values                       |
//! | 2      | taskset generation                       |
//! | 3      | task selection during the run            |
//!
//! Output words are consumed as little-endian `u64`s from block counter 0.
//! Derived quantities:
//!
//! * `below(n)`: draw `x`, reject while `x < 2^64 mod n`, return `x mod n`.
//! * `unit_open()`: `((x >> 11) + 0.5) / 2^53`, strictly inside (0, 1).
//!
//! Any ChaCha20 implementation that follows RFC 7539 block layout with a
//! 64-bit counter and 64-bit stream id reproduces the same draws.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub const STREAM_EPSILON: u64 = 1;
pub const STREAM_TASKSET: u64 = 2;
pub const STREAM_SELECTION: u64 = 3;

#[derive(Clone, Debug)]
pub struct SeedStream {
    inner: ChaCha20Rng,
}

impl SeedStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        SeedStream { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Uniform real in the open interval (0, 1).
    pub fn unit_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Bernoulli draw with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.unit_open() < p
    }
}
