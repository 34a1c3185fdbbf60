//! Counter-addressed Gaussian stream.
//!
//! Every value is a pure function of `(seed, stream, index)`: ChaCha8 is a
//! counter-mode generator, each pair of normals consumes exactly two 64-bit
//! words (Box–Muller), so the value at `index` can be produced by seeking
//! instead of replaying the sequence.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

#[inline]
fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let r = (-2.0 * unit_open(a).ln()).sqrt();
    let theta = 2.0 * PI * unit_open(b);
    (r * theta.cos(), r * theta.sin())
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Fills `out` with the values at indices `0..out.len()`.
    pub fn fill(&mut self, out: &mut [f64]) {
        self.rng.set_word_pos(0);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            pair[0] = z0;
            pair[1] = z1;
        }
        if let [last] = chunks.into_remainder() {
            *last = box_muller(self.rng.next_u64(), self.rng.next_u64()).0;
        }
    }

    /// Value at a single index, obtained by seeking.
    pub fn at(&mut self, index: u64) -> f64 {
        let pair = index / 2;
        self.rng.set_word_pos(pair as u128 * 4);
        let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        if index % 2 == 0 {
            z0
        } else {
            z1
        }
    }

    /// Uniform draw in `(0, 1)` continuing from the current position.
    pub fn next_uniform(&mut self) -> f64 {
        unit_open(self.rng.next_u64())
    }

    pub fn next_normal(&mut self) -> f64 {
        box_muller(self.rng.next_u64(), self.rng.next_u64()).0
    }
}
