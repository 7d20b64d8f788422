//! Seeded initial-state generation.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::experiments::config::InitialStates;
use crate::quantum::{BlochVector, Ket};
use crate::seed::derive_seed;

/// Random stream for sweep cell `index` under `master`.
pub fn cell_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Uniform point on the unit sphere from a normalized Gaussian triple.
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Uniform point on the `z > 0` hemisphere (lower draws are reflected).
pub fn uniform_hemisphere<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let mut v = uniform_sphere(rng);
        if v.z < 0.0 {
            v.z = -v.z;
        }
        if v.z > 0.0 {
            return v;
        }
    }
}

pub fn bloch_vectors<R: Rng + ?Sized>(rng: &mut R, n: usize, init: InitialStates) -> Vec<Vector3<f64>> {
    match init {
        InitialStates::Sphere => (0..n).map(|_| uniform_sphere(rng)).collect(),
        InitialStates::Hemisphere => (0..n).map(|_| uniform_hemisphere(rng)).collect(),
        InitialStates::Equal => vec![uniform_sphere(rng); n],
    }
}

/// Kets in the standard phase convention for the given Bloch vectors.
pub fn kets_from_blochs(xs: &[Vector3<f64>]) -> Vec<Ket> {
    xs.iter()
        .map(|x| {
            let b = BlochVector::unit(*x).expect("sampled vectors are unit");
            Ket::from_bloch(&b).expect("sampled vectors are unit")
        })
        .collect()
}

pub fn random_kets<R: Rng + ?Sized>(rng: &mut R, n: usize, init: InitialStates) -> Vec<Ket> {
    kets_from_blochs(&bloch_vectors(rng, n, init))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_samples_are_unit_and_centered() {
        let mut rng = cell_rng(3, 0);
        let n = 20_000;
        let mut mean = Vector3::zeros();
        for _ in 0..n {
            let v = uniform_sphere(&mut rng);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            mean += v;
        }
        mean /= n as f64;
        // each component has variance 1/3; 5 standard errors
        assert!(mean.amax() < 5.0 * (1.0 / (3.0 * n as f64)).sqrt());
    }

    #[test]
    fn hemisphere_samples_have_positive_z_and_uniform_height() {
        let mut rng = cell_rng(5, 1);
        let n = 20_000;
        let mut mean_z = 0.0;
        for _ in 0..n {
            let v = uniform_hemisphere(&mut rng);
            assert!(v.z > 0.0);
            mean_z += v.z;
        }
        // Archimedes: height is uniform on (0, 1)
        mean_z /= n as f64;
        assert!((mean_z - 0.5).abs() < 5.0 * (1.0 / (12.0 * n as f64)).sqrt());
    }

    #[test]
    fn streams_are_reproducible() {
        let a = random_kets(&mut cell_rng(9, 4), 5, InitialStates::Sphere);
        let b = random_kets(&mut cell_rng(9, 4), 5, InitialStates::Sphere);
        assert_eq!(a, b);
        let c = random_kets(&mut cell_rng(9, 5), 5, InitialStates::Sphere);
        assert_ne!(a, c);
        let eq = random_kets(&mut cell_rng(9, 4), 4, InitialStates::Equal);
        assert!(eq.windows(2).all(|w| w[0] == w[1]));
    }
}
