//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `seed` with the 64-bit stream
//! selector set to `stream_id`, so any (seed, id) pair can be regenerated
//! without touching other streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Standard-normal draws from one (seed, stream) pair.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

pub fn rng_stream(seed: u64, stream_id: u64) -> NormalStream {
    NormalStream {
        rng: stream_rng(seed, stream_id),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a: Vec<f64> = rng_stream(42, 7).take(1000).collect();
        let b: Vec<f64> = rng_stream(42, 7).take(1000).collect();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c: Vec<f64> = rng_stream(42, 8).take(1000).collect();
        assert_ne!(a, c);
        let d: Vec<f64> = rng_stream(43, 7).take(1000).collect();
        assert_ne!(a, d);
    }

    #[test]
    fn moments() {
        let n = 1_000_000;
        let mut s = rng_stream(2024, 0);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        // chi-square: sd of the sample variance is √(2/n) ≈ 0.0014, so 1% is ~7 sd
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn streams_uncorrelated() {
        let n = 200_000;
        let a: Vec<f64> = rng_stream(5, 1).take(n).collect();
        let b: Vec<f64> = rng_stream(5, 2).take(n).collect();
        let c: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(c.abs() < 4.0 / (n as f64).sqrt());
    }
}
