use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-site Wiener increments for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub trajectory: u64,
    pub step: u64,
    pub increments: Vec<f64>,
}

/// Counter-based Gaussian noise: the increments of step `k` of trajectory
/// `j` depend only on `(master seed, j, k)`. Each trajectory owns one ChaCha
/// stream and every step reads a fixed block of it, so any step can be
/// regenerated without replaying the ones before.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    trajectory: u64,
    channels: usize,
    words_per_step: u128,
    sign: f64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory);
        // Box-Muller consumes one pair of u64 (four 32-bit words) per two normals.
        let words_per_step = 4 * channels.div_ceil(2) as u128;
        NoiseStream {
            rng,
            trajectory,
            channels,
            words_per_step,
            sign: 1.0,
        }
    }

    /// The same stream with every increment negated (Z2 partner trajectory).
    pub fn negated(mut self) -> Self {
        self.sign = -self.sign;
        self
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Writes the `channels` increments of `step`, each `N(0, h)`.
    pub fn fill(&mut self, step: u64, h: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        self.rng.set_word_pos(step as u128 * self.words_per_step);
        let scale = self.sign * h.sqrt();
        for chunk in out.chunks_mut(2) {
            let u1 = 1.0 - self.rng.random::<f64>();
            let u2: f64 = self.rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            chunk[0] = scale * r * c;
            if chunk.len() > 1 {
                chunk[1] = scale * r * s;
            }
        }
    }

    pub fn realization(&mut self, step: u64, h: f64) -> NoiseRealization {
        let mut increments = vec![0.0; self.channels];
        self.fill(step, h, &mut increments);
        NoiseRealization {
            trajectory: self.trajectory,
            step,
            increments,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut a = NoiseStream::new(7, 3, 5);
        let mut b = NoiseStream::new(7, 3, 5);
        let seq: Vec<_> = (0..10).map(|k| a.realization(k, 1e-2)).collect();
        assert_eq!(b.realization(6, 1e-2), seq[6]);
        assert_eq!(b.realization(2, 1e-2), seq[2]);
    }

    #[test]
    fn streams_differ_across_trajectories() {
        let x = NoiseStream::new(1, 0, 4).realization(0, 1.0);
        let y = NoiseStream::new(1, 1, 4).realization(0, 1.0);
        assert_ne!(x.increments, y.increments);
    }

    #[test]
    fn negated_stream_is_exact_mirror() {
        let x = NoiseStream::new(11, 2, 3).realization(9, 1e-3);
        let y = NoiseStream::new(11, 2, 3).negated().realization(9, 1e-3);
        for (a, b) in x.increments.iter().zip(&y.increments) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn moments_are_wiener() {
        let h = 0.01;
        let mut s = NoiseStream::new(42, 0, 3);
        let n = 40_000u64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..n {
            for x in s.realization(k, h).increments {
                m1 += x;
                m2 += x * x;
            }
        }
        let cnt = 3.0 * n as f64;
        assert!((m1 / cnt).abs() < 4.0 * (h / cnt).sqrt());
        assert!((m2 / cnt / h - 1.0).abs() < 0.02);
    }
}
