//! Seeded, randomly shifted Halton sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton points in `[0, 1)^dim` with a Cranley-Patterson rotation drawn
/// from a ChaCha8 stream, so each seed gives an independent randomisation.
#[derive(Debug, Clone)]
pub struct ShiftedHalton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl ShiftedHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        ShiftedHalton { dim, shift, index: 1 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|k| {
                let v = radical_inverse(i, PRIMES[k]) + self.shift[k];
                v - v.floor()
            })
            .collect()
    }
}
