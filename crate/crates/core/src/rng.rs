//! Portable seeded randomness.
//!
//! All generators in this crate draw from ChaCha8 seeded with a 64-bit value.
//! Uniform doubles use the 53-bit construction from `rand`; Gaussian draws use
//! the Box–Muller transform (one draw per pair of uniforms, cosine branch), so
//! streams are reproducible across platforms and implementations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Rot3, Vec3};

/// SplitMix64 finalizer, used to derive independent sub-stream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a sequence of stream labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(seed), |acc, &l| mix64(acc ^ mix64(l.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn derived(seed: u64, labels: &[u64]) -> Self {
        Self::new(derive_seed(seed, labels))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        sigma * self.gaussian()
    }

    /// Uniformly distributed direction on the unit sphere.
    pub fn unit_vector(&mut self) -> Vec3 {
        loop {
            let v = Vec3::new(self.gaussian(), self.gaussian(), self.gaussian());
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Rotation about a uniformly random axis by a Gaussian angle (degrees).
    pub fn gaussian_rotation(&mut self, sigma_deg: f64) -> Rot3 {
        let axis = self.unit_vector();
        let angle = self.normal(sigma_deg).to_radians();
        Rot3::from_axis_angle(&axis, angle)
    }

    /// Uniformly distributed rotation.
    pub fn uniform_rotation(&mut self) -> Rot3 {
        // Shoemake's subgroup algorithm on unit quaternions.
        let u1 = self.uniform();
        let u2 = self.uniform() * std::f64::consts::TAU;
        let u3 = self.uniform() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let (w, x, y, z) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
        Rot3::from_unit_quaternion(w, x, y, z)
    }

    pub fn uniform_in_box(&mut self, half: f64) -> Vec3 {
        Vec3::new(
            self.uniform_range(-half, half),
            self.uniform_range(-half, half),
            self.uniform_range(-half, half),
        )
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SimRng::new(7);
        let mut b = SimRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn derived_streams_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SimRng::new(3);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn uniform_rotation_is_valid() {
        let mut rng = SimRng::new(11);
        for _ in 0..100 {
            let r = rng.uniform_rotation();
            assert!(Rot3::new(*r.matrix()).is_ok());
        }
    }
}
