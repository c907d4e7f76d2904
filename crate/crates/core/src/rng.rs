//! Portable seeded random streams.
//!
//! The simulator must reproduce byte-identical scenes across platforms and
//! across reimplementations in other languages, so the generator is spelled
//! out here rather than borrowed from a crate whose algorithm may change
//! between releases:
//!
//! - state seeding: SplitMix64 applied to the caller's seed
//! - generator: xorshift64* (shifts 12, 25, 27; multiplier `0x2545F4914F6CDD1D`)
//! - uniform `f64`: top 53 bits of the output scaled by 2^-53, in `[0, 1)`
//! - standard normal: Box-Muller, one variate per two uniforms (cosine branch)
//!
//! Independent substreams are derived with [`Xorshift64Star::substream`], which
//! mixes a stream tag into the seed through SplitMix64 before seeding.

use std::f64::consts::TAU;

const XORSHIFT_MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

/// One step of SplitMix64. Used for seeding and stream derivation only.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            // xorshift has an all-zero fixed point
            state = 0x9E37_79B9_7F4A_7C15;
        }
        Self { state }
    }

    /// Stream `tag` of the generator family identified by `seed`.
    pub fn substream(seed: u64, tag: u64) -> Self {
        Self::new(seed ^ splitmix64(tag ^ 0xD1B5_4A32_D192_ED03))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(XORSHIFT_MULTIPLIER)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal variate.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.next_gaussian()
    }
}
