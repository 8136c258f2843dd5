//! Counter-based pseudo-random generator for reproducible fixtures.
//!
//! The generator is fully specified here so that fixtures can be
//! regenerated bit-exactly from any language:
//!
//! * `mix64` is the SplitMix64 output mixer:
//!   `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
//!    z *= 0x94D049BB133111EB; z ^= z >> 31` (all u64, wrapping).
//! * A stream is addressed by `(seed, stream_id)`. Its state starts at
//!   `mix64(seed) XOR mix64(stream_id XOR 0x6A09E667F3BCC909)` and draw
//!   `j` is `mix64(state + (j + 1) * 0x9E3779B97F4A7C15)` (wrapping),
//!   i.e. plain SplitMix64 on a per-stream base.
//! * Uniform doubles map a u64 `x` to `((x >> 11) + 0.5) * 2^-53`,
//!   which lies strictly inside `(0, 1)`.
//! * Standard normals come from Box-Muller on consecutive uniform
//!   pairs `(u1, u2)`: `sqrt(-2 ln u1) * (cos, sin)(2 pi u2)`. Normals
//!   are produced in pairs; the second of each pair is buffered and
//!   returned by the next call.

const GAMMA: u64 = 0x9E3779B97F4A7C15;
const STREAM_SALT: u64 = 0x6A09E667F3BCC909;

/// SplitMix64 output mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One substream of the counter-based generator.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
    normal_buffer: Option<f64>,
}

impl Stream {
    /// Substream `stream_id` under `seed`. Distinct ids give
    /// decorrelated sequences and may be consumed in parallel.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Stream {
            state: mix64(seed) ^ mix64(stream_id ^ STREAM_SALT),
            normal_buffer: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in the open interval (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53)
    }

    /// Uniform integer in `[0, bound)` by rejection on the top range.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Standard normal via Box-Muller, pair-buffered.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.normal_buffer.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.normal_buffer = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `n` standard normals in draw order.
    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }
}
