//! Counter-based Gaussian streams.
//!
//! Every draw is addressed by `(master_seed, replica, step)`: the ChaCha key
//! comes from the master seed, the stream id is the replica and the block
//! counter is derived from the step. A draw therefore never depends on how many
//! controls, replicas or threads are in play.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// ChaCha words consumed per standard normal (two `u64`s for Box-Muller).
const WORDS_PER_DRAW: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, replica: u64) -> Self {
        Self {
            master_seed,
            replica,
        }
    }

    fn generator(&self) -> ChaCha20Rng {
        let mut seed = [0u8; 32];
        // splitmix64 expansion of the master seed into a 256-bit key
        let mut z = self.master_seed;
        for chunk in seed.chunks_exact_mut(8) {
            z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut x = z;
            x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            x ^= x >> 31;
            chunk.copy_from_slice(&x.to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(self.replica);
        rng
    }

    /// Standard normal draw number `step` of this stream.
    pub fn normal_at(&self, step: usize) -> f64 {
        let mut rng = self.generator();
        rng.set_word_pos(step as u128 * WORDS_PER_DRAW);
        box_muller(&mut rng)
    }

    /// Draws `0..len` of this stream; identical to calling [`Self::normal_at`]
    /// for each step.
    pub fn normals(&self, len: usize) -> Vec<f64> {
        let mut rng = self.generator();
        (0..len).map(|_| box_muller(&mut rng)).collect()
    }
}

/// Uniform draws for audit samplers (not part of the scenario streams).
#[derive(Debug, Clone)]
pub struct UniformStream(ChaCha20Rng);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }
}

fn box_muller(rng: &mut ChaCha20Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let key = StreamKey::new(42, 7);
        let seq = key.normals(50);
        for (j, &z) in seq.iter().enumerate() {
            assert_eq!(z.to_bits(), key.normal_at(j).to_bits());
        }
    }

    #[test]
    fn streams_differ_by_replica_and_seed() {
        let a = StreamKey::new(1, 0).normals(8);
        let b = StreamKey::new(1, 1).normals(8);
        let c = StreamKey::new(2, 0).normals(8);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn draws_look_standard_normal() {
        let z = StreamKey::new(123, 0).normals(200_000);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let kurt = z.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
        assert!((kurt - 3.0).abs() < 0.05, "kurtosis {kurt}");
    }
}
