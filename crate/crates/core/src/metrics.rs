//! Convergence diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::protocols::{chain_axes, check_chain, swap_permutation};
use crate::quantum::{DensityMatrix, Ket, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    V,
    PureStateError,
    CompositeDistance,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::V => "v",
            Metric::PureStateError => "pure_state_error",
            Metric::CompositeDistance => "composite_distance",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "v" | "lyapunov" => Ok(Metric::V),
            "pure_state_error" | "purestateerror" => Ok(Metric::PureStateError),
            "composite_distance" | "compositedistance" => Ok(Metric::CompositeDistance),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlingSpec {
    pub metric: Metric,
    pub threshold: f64,
}

impl SettlingSpec {
    pub fn new(metric: Metric, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "settling threshold must be positive, got {threshold}"
            )));
        }
        Ok(SettlingSpec { metric, threshold })
    }
}

/// `Σ_{i<N} (1 − ℜ⟨ψ_i|ψ_{i+1}⟩)` over a chain.
pub fn lyapunov_v(states: &[Ket], topology: &Topology) -> Result<f64> {
    check_chain(states, topology)?;
    Ok(lyapunov_v_unchecked(states))
}

pub(crate) fn lyapunov_v_unchecked(states: &[Ket]) -> f64 {
    states.windows(2).map(|w| 1.0 - w[0].inner(&w[1]).re).sum()
}

/// `W_i = −‖n_i‖²` with `n_i` the chain-protocol axis; `Σ W_i = dV/dt`.
pub fn lyapunov_decay_terms(states: &[Ket], topology: &Topology) -> Result<Vec<f64>> {
    Ok(chain_axes(states, topology)?
        .iter()
        .map(|n| -n.norm_squared())
        .collect())
}

/// Largest pairwise Frobenius distance between the pure densities.
pub fn pure_state_error(states: &[Ket]) -> f64 {
    let rhos: Vec<DensityMatrix> = states.iter().map(Ket::density).collect();
    max_pairwise(&rhos, |a, b| a.distance(b))
}

/// Same quantity evaluated from unit Bloch vectors.
pub fn pure_state_error_bloch(xs: &[Vector3<f64>]) -> f64 {
    max_pairwise(xs, |a, b| (a - b).norm() / std::f64::consts::SQRT_2)
}

fn max_pairwise<T>(items: &[T], dist: impl Fn(&T, &T) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in items.iter().enumerate() {
        for b in &items[i + 1..] {
            worst = worst.max(dist(a, b));
        }
    }
    worst
}

/// First sample time with `series < threshold`.
pub fn first_below(times: &[f64], series: &[f64], threshold: f64) -> Option<f64> {
    times
        .iter()
        .zip(series)
        .find(|(_, v)| **v < threshold)
        .map(|(t, _)| *t)
}

/// Spectral norm of `rho − rho_bar`.
pub fn composite_distance(rho: &DMatrix<C64>, rho_bar: &DMatrix<C64>) -> Result<f64> {
    if rho.shape() != rho_bar.shape() {
        return Err(Error::DimensionMismatch(rho.nrows(), rho_bar.nrows()));
    }
    let diff = rho - rho_bar;
    Ok(diff.singular_values().max())
}

pub const AVERAGE_MAX_QUBITS: usize = 6;

/// Average of `U_π ρ U_π†` over every permutation of the qubit factors.
pub fn quantum_average(rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = qubit_count(rho)?;
    if n > AVERAGE_MAX_QUBITS {
        return Err(Error::TooManyQubits {
            n,
            max: AVERAGE_MAX_QUBITS,
        });
    }
    // Group averaging over S_N factorizes into successive transposition
    // averages: avg over S_{k+1} = (1/(k+1)) Σ_{j≤k} swap(j,k) ∘ avg over S_k.
    let mut acc = rho.clone();
    for k in 1..n {
        let mut next = acc.clone();
        for j in 0..k {
            let perm = swap_permutation(n, j, k);
            next += permute(&acc, &perm);
        }
        acc = next / C64::new((k + 1) as f64, 0.0);
    }
    Ok(acc)
}

pub(crate) fn permute(rho: &DMatrix<C64>, perm: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(rho.nrows(), rho.ncols(), |a, b| rho[(perm[a], perm[b])])
}

pub(crate) fn qubit_count(rho: &DMatrix<C64>) -> Result<usize> {
    let d = rho.nrows();
    if d != rho.ncols() || d < 2 || !d.is_power_of_two() {
        return Err(Error::DimensionMismatch(rho.nrows(), rho.ncols()));
    }
    Ok(d.trailing_zeros() as usize)
}

/// `ρ_1 ⊗ ρ_2 ⊗ … ⊗ ρ_N`.
pub fn tensor_product(factors: &[DensityMatrix]) -> DMatrix<C64> {
    let mut acc = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for rho in factors {
        let m = rho.matrix();
        let m = DMatrix::from_fn(2, 2, |a, b| m[(a, b)]);
        acc = acc.kronecker(&m);
    }
    acc
}

/// `‖ρ − ρ̄‖₂` for the product of the given pure states, with `ρ̄` its
/// permutation average.
pub fn product_consensus_distance(states: &[Ket]) -> Result<f64> {
    let rho = tensor_product(&states.iter().map(Ket::density).collect::<Vec<_>>());
    composite_distance(&rho, &quantum_average(&rho)?)
}

/// Planar Bloch radius `√(⟨σ_x⟩² + ⟨σ_y⟩²)`.
pub fn coherence(rho: &DensityMatrix) -> f64 {
    let b = rho.bloch();
    b.x().hypot(b.y())
}
