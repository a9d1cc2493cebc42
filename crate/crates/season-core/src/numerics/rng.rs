//! Portable seeded random number generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit state
//! advanced by the golden-gamma constant and finalized with two xor-shift
//! multiplies. It is fixed here by value, not by dependency, so the stream
//! for a given seed is identical on every platform and toolchain.
//!
//! Gaussian samples come from the Box-Muller transform applied to two
//! uniform draws, using `libm` for ln/sqrt/cos so the transform itself is
//! also platform-independent. Each Gaussian sample consumes exactly two
//! uniforms; no spare is cached.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Identifier of the fixed generator algorithm, recorded in traces.
pub const RNG_ALGORITHM: &str = "splitmix64/box-muller";

/// Deterministic, portable PRNG. Single-owner: not for concurrent sharing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { state: seed }
    }

    /// Derive an independent child stream. Used to give sub-systems
    /// (noise, shuffling, sampling) distinct streams from one master seed.
    pub fn derive(&self, stream: u64) -> SeededRng {
        let mut probe = SeededRng::new(self.state ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        SeededRng::new(probe.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Two uniforms per sample.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        r * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Rejection sampling to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Seeded uniform permutation of 0..n (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below((i + 1) as u64) as usize;
            p.swap(i, j);
        }
        p
    }
}

/// I.i.d. samples from N(0, sigma^2). `sigma = 0` yields exact zeros.
pub fn gaussian_noise(rng: &mut SeededRng, count: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "gaussian noise sigma must be a finite non-negative real, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; count]);
    }
    Ok((0..count).map(|_| sigma * rng.next_gaussian()).collect())
}
