//! Gaussian increments keyed by `(seed, path, step)`.
//!
//! Each path owns a ChaCha8 stream selected by its index; step `k` draws
//! from the Box–Muller pair at word offset `4·⌊k/2⌋`, so a given step's
//! increment never depends on scheduling or on how many other paths ran.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::open_unit;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng, spare: None }
    }

    /// Positions the stream so the next draw is the increment for `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(u128::from(step / 2) * 4);
        self.spare = None;
        if step % 2 == 1 {
            self.next_normal();
        }
    }

    /// Next standard normal variate.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = open_unit(self.rng.next_u64());
        let u2 = open_unit(self.rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
