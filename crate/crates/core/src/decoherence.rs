//! Open-system qubit dynamics under relaxation, dephasing and continuous
//! weak `σ_z` measurement, with a feedback law that protects planar
//! coherence of a qubit pair.

use std::io::Write;

use nalgebra::{Matrix2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::coherence;
use crate::protocols::AxisHamiltonian;
use crate::quantum::{BlochVector, DensityMatrix, Pauli, Unitary2, C64};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub gamma_r: f64,
    pub gamma_phi: f64,
    pub gamma_z: f64,
    pub eta_z: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl NoiseParams {
    /// `Γ_r = Γ_φ = 10`, `Γ_z = 0.1`, `η_z = 1`.
    pub fn reference() -> Self {
        NoiseParams {
            gamma_r: 10.0,
            gamma_phi: 10.0,
            gamma_z: 0.1,
            eta_z: 1.0,
        }
    }

    pub fn noiseless() -> Self {
        NoiseParams {
            gamma_r: 0.0,
            gamma_phi: 0.0,
            gamma_z: 0.0,
            eta_z: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_r", self.gamma_r),
            ("gamma_phi", self.gamma_phi),
            ("gamma_z", self.gamma_z),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidNoise(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.eta_z > 0.0 && self.eta_z <= 1.0) {
            return Err(Error::InvalidNoise(format!("eta_z must lie in (0, 1], got {}", self.eta_z)));
        }
        Ok(())
    }

    /// `Γ = Γ_r + Γ_φ + Γ_z`.
    pub fn total(&self) -> f64 {
        self.gamma_r + self.gamma_phi + self.gamma_z
    }

    /// Decay rate of `⟨σ_x⟩`, `⟨σ_y⟩` without feedback.
    pub fn transverse_rate(&self) -> f64 {
        2.0 * self.gamma_r + 2.0 * (self.gamma_phi + self.gamma_z)
    }

    /// Relaxation rate of `⟨σ_z⟩` toward +1.
    pub fn longitudinal_rate(&self) -> f64 {
        4.0 * self.gamma_r
    }

    fn measurement_amplitude(&self) -> f64 {
        (self.eta_z * self.gamma_z).sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub times: Vec<f64>,
    pub dy: Vec<f64>,
    /// `Y_z(t) = y(t) / t`, the time-averaged output.
    pub running_average: Vec<f64>,
}

impl MeasurementRecord {
    fn push(&mut self, t_end: f64, dy: f64) {
        let total = self.running_average.last().map_or(0.0, |avg| avg * self.times.last().unwrap()) + dy;
        self.times.push(t_end);
        self.dy.push(dy);
        self.running_average.push(total / t_end);
    }

    pub fn latest_average(&self) -> Option<f64> {
        self.running_average.last().copied()
    }
}

/// `dy = ⟨σ_z⟩ dt + dW / (2√(η_z Γ_z))`.
pub fn measurement_output(rho: &DensityMatrix, p: &NoiseParams, dw: f64, dt: f64) -> Result<f64> {
    let amp = p.measurement_amplitude();
    if amp == 0.0 {
        return Err(Error::NoMeasurement);
    }
    Ok(rho.expectation(Pauli::Z) * dt + dw / (2.0 * amp))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmeStep {
    pub rho: DensityMatrix,
    /// Measurement increment; `None` without measurement (`Γ_z = 0`).
    pub dy: Option<f64>,
}

/// `D[L]ρ = LρL† − ½{L†L, ρ}`.
pub fn dissipator(l: &Matrix2<C64>, rho: &Matrix2<C64>) -> Matrix2<C64> {
    let ld = l.adjoint();
    let ldl = ld * l;
    l * rho * ld - (ldl * rho + rho * ldl) * C64::new(0.5, 0.0)
}

/// `H[L]ρ = Lρ + ρL† − tr(Lρ + ρL†) ρ`.
pub fn innovation(l: &Matrix2<C64>, rho: &Matrix2<C64>) -> Matrix2<C64> {
    let m = l * rho + rho * l.adjoint();
    m - rho * m.trace()
}

/// Lowering operator `σ_− = |0⟩⟨1|`.
pub fn sigma_minus() -> Matrix2<C64> {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    Matrix2::new(z, o, z, z)
}

/// Deterministic generator `4Γ_r D[σ_−]ρ + (Γ_φ + Γ_z) D[σ_z]ρ`.
pub fn lindblad_dissipation(rho: &Matrix2<C64>, p: &NoiseParams) -> Matrix2<C64> {
    dissipator(&sigma_minus(), rho) * C64::new(4.0 * p.gamma_r, 0.0)
        + dissipator(&Pauli::Z.matrix(), rho) * C64::new(p.gamma_phi + p.gamma_z, 0.0)
}

/// Bloch vector after free dissipative evolution for time `t`.
pub fn lindblad_bloch(r0: &Vector3<f64>, p: &NoiseParams, t: f64) -> Vector3<f64> {
    let perp = (-p.transverse_rate() * t).exp();
    let z = 1.0 - (1.0 - r0.z) * (-p.longitudinal_rate() * t).exp();
    Vector3::new(r0.x * perp, r0.y * perp, z)
}

/// One stochastic step: exact unitary conjugation, exact dissipative channel,
/// then an Euler–Maruyama measurement-backaction kick evaluated at the
/// rotated, pre-dissipation state. The result is symmetrized and trace-normalized.
pub fn sme_step(
    rho: &DensityMatrix,
    h: &AxisHamiltonian,
    p: &NoiseParams,
    dw: f64,
    dt: f64,
) -> Result<SmeStep> {
    sme_step_at(rho, h, p, dw, dt, f64::NAN)
}

fn sme_step_at(
    rho: &DensityMatrix,
    h: &AxisHamiltonian,
    p: &NoiseParams,
    dw: f64,
    dt: f64,
    time: f64,
) -> Result<SmeStep> {
    let dy = if p.gamma_z > 0.0 {
        Some(measurement_output(rho, p, dw, dt)?)
    } else {
        None
    };
    let norm = h.axis.norm();
    let rotated = if norm > 0.0 {
        rho.conjugate(&Unitary2::exp_su2(&(h.axis / norm), norm * dt))
    } else {
        *rho
    };
    let kick = innovation(&Pauli::Z.matrix(), rotated.matrix()) * C64::new(p.measurement_amplitude() * dw, 0.0);
    let damped = DensityMatrix::from_bloch_unchecked(&lindblad_bloch(&rotated.bloch().vector(), p, dt));
    let raw = damped.matrix() + kick;
    let sym = (raw + raw.adjoint()) * C64::new(0.5, 0.0);
    let out = DensityMatrix::from_matrix_unchecked(sym / sym.trace());
    let (lo, _) = out.eigenvalues();
    if lo < -1e-6 {
        return Err(Error::PositivityLost {
            min_eigenvalue: lo,
            time,
            dt,
        });
    }
    Ok(SmeStep { rho: out, dy })
}

/// Result of evaluating the feedback law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feedback {
    pub hamiltonian: AxisHamiltonian,
    pub suspended: bool,
}

impl Feedback {
    fn off() -> Self {
        Feedback {
            hamiltonian: AxisHamiltonian::zero(),
            suspended: true,
        }
    }
}

/// Principal-branch `arctan(−⟨σ_x⟩/⟨σ_y⟩)` in `(−π/2, π/2]`; `None` at the
/// planar origin.
pub fn feedback_half_angle(rho: &DensityMatrix) -> Option<f64> {
    let b = rho.bloch();
    if b.x() == 0.0 && b.y() == 0.0 {
        return None;
    }
    let mut a = (-b.x()).atan2(b.y());
    if a > std::f64::consts::FRAC_PI_2 {
        a -= std::f64::consts::PI;
    } else if a <= -std::f64::consts::FRAC_PI_2 {
        a += std::f64::consts::PI;
    }
    Some(a)
}

/// `H_i = μ_i (cos φ_ij σ_x + sin φ_ij σ_y)` with `μ_i = Γ C_xy(ρ_i(0)) / Y_z^i`.
pub fn feedback_hamiltonian(
    rho_i: &DensityMatrix,
    rho_j: &DensityMatrix,
    c0_i: f64,
    yz_i: f64,
    p: &NoiseParams,
    y_floor: f64,
) -> Feedback {
    if yz_i.is_nan() || yz_i.abs() <= y_floor {
        return Feedback::off();
    }
    let (Some(a_i), Some(a_j)) = (feedback_half_angle(rho_i), feedback_half_angle(rho_j)) else {
        return Feedback::off();
    };
    let phi = 0.5 * a_i + 0.5 * a_j;
    let mu = p.total() * c0_i / yz_i;
    Feedback {
        hamiltonian: AxisHamiltonian::new(Vector3::new(mu * phi.cos(), mu * phi.sin(), 0.0)),
        suspended: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmeConfig {
    pub dt: f64,
    pub t_max: f64,
    pub sample_every: usize,
    pub feedback: bool,
    /// Feedback stays off for `t < warmup`.
    pub warmup: f64,
    /// Feedback is suspended while `|Y_z| ≤ y_floor`.
    pub y_floor: f64,
}

impl Default for SmeConfig {
    fn default() -> Self {
        SmeConfig {
            dt: 1e-4,
            t_max: 0.5,
            sample_every: 50,
            feedback: true,
            warmup: 0.01,
            y_floor: 1e-3,
        }
    }
}

impl SmeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "t_max ({}) must be at least dt ({})",
                self.t_max, self.dt
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidConfig("sample_every must be at least 1".into()));
        }
        if !(self.warmup >= 0.0 && self.y_floor >= 0.0) {
            return Err(Error::InvalidConfig("warmup and y_floor must be non-negative".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize
    }

    pub fn without_feedback(mut self) -> Self {
        self.feedback = false;
        self
    }
}

/// Sampled series of one protected-pair run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProtectedPair {
    pub times: Vec<f64>,
    pub bloch_i: Vec<Vector3<f64>>,
    pub bloch_j: Vec<Vector3<f64>>,
    pub coherence_i: Vec<f64>,
    pub coherence_j: Vec<f64>,
    /// Frobenius distance `‖ρ_i − ρ_j‖`.
    pub distance: Vec<f64>,
    /// Coherence of the undisturbed, uncontrolled evolution.
    pub target_i: f64,
    pub target_j: f64,
    pub records: [MeasurementRecord; 2],
    pub suspended_steps: usize,
}

impl ProtectedPair {
    pub fn mean_coherence(&self) -> Vec<f64> {
        self.coherence_i
            .iter()
            .zip(&self.coherence_j)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "time", "c_i", "c_j", "target_i", "target_j", "distance", "x_i", "y_i", "z_i", "x_j", "y_j", "z_j",
        ])?;
        for k in 0..self.times.len() {
            let (bi, bj) = (self.bloch_i[k], self.bloch_j[k]);
            let row = [
                self.times[k],
                self.coherence_i[k],
                self.coherence_j[k],
                self.target_i,
                self.target_j,
                self.distance[k],
                bi.x,
                bi.y,
                bi.z,
                bj.x,
                bj.y,
                bj.z,
            ];
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Co-evolves two qubits under independent measurement noise, applying the
/// feedback law to each.
pub fn simulate_protected_pair(
    rho0_i: &DensityMatrix,
    rho0_j: &DensityMatrix,
    p: &NoiseParams,
    cfg: &SmeConfig,
    seed: u64,
) -> Result<ProtectedPair> {
    p.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = cfg.dt.sqrt();
    let mut rho = [*rho0_i, *rho0_j];
    let c0 = [coherence(rho0_i), coherence(rho0_j)];
    let mut out = ProtectedPair {
        target_i: c0[0],
        target_j: c0[1],
        ..Default::default()
    };
    let record = |out: &mut ProtectedPair, rho: &[DensityMatrix; 2], t: f64| {
        out.times.push(t);
        out.bloch_i.push(rho[0].bloch().vector());
        out.bloch_j.push(rho[1].bloch().vector());
        out.coherence_i.push(coherence(&rho[0]));
        out.coherence_j.push(coherence(&rho[1]));
        out.distance.push(rho[0].distance(&rho[1]));
    };
    record(&mut out, &rho, 0.0);
    let steps = cfg.steps();
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let mut hs = [AxisHamiltonian::zero(); 2];
        if cfg.feedback && t >= cfg.warmup {
            for q in 0..2 {
                let yz = out.records[q].latest_average().unwrap_or(0.0);
                let fb = feedback_hamiltonian(&rho[q], &rho[1 - q], c0[q], yz, p, cfg.y_floor);
                out.suspended_steps += usize::from(fb.suspended);
                hs[q] = fb.hamiltonian;
            }
        }
        let t_end = (k + 1) as f64 * cfg.dt;
        for q in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let step = sme_step_at(&rho[q], &hs[q], p, z * sqrt_dt, cfg.dt, t)?;
            rho[q] = step.rho;
            if let Some(dy) = step.dy {
                out.records[q].push(t_end, dy);
            }
        }
        if (k + 1) % cfg.sample_every == 0 || k + 1 == steps {
            record(&mut out, &rho, t_end);
        }
    }
    Ok(out)
}

/// Mean and standard error of the mean.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl SeriesStats {
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let runs: Vec<&[f64]> = runs.into_iter().collect();
        let m = runs.len() as f64;
        let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
        let mut stats = SeriesStats::default();
        for k in 0..len {
            let mean = runs.iter().map(|r| r[k]).sum::<f64>() / m;
            let var = if runs.len() > 1 {
                runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            stats.mean.push(mean);
            stats.std_err.push((var / m).sqrt());
        }
        stats
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub coherence_i: SeriesStats,
    pub coherence_j: SeriesStats,
    /// Pair-averaged coherence `½(C_i + C_j)`.
    pub coherence: SeriesStats,
    pub distance: SeriesStats,
    pub bloch_i: [SeriesStats; 3],
}

impl EnsembleSummary {
    pub fn from_runs(runs: &[ProtectedPair]) -> Self {
        let mean_c: Vec<Vec<f64>> = runs.iter().map(ProtectedPair::mean_coherence).collect();
        let component = |c: usize| {
            let cols: Vec<Vec<f64>> = runs.iter().map(|r| r.bloch_i.iter().map(|v| v[c]).collect()).collect();
            SeriesStats::from_runs(cols.iter().map(Vec::as_slice))
        };
        EnsembleSummary {
            trajectories: runs.len(),
            times: runs.first().map(|r| r.times.clone()).unwrap_or_default(),
            coherence_i: SeriesStats::from_runs(runs.iter().map(|r| r.coherence_i.as_slice())),
            coherence_j: SeriesStats::from_runs(runs.iter().map(|r| r.coherence_j.as_slice())),
            coherence: SeriesStats::from_runs(mean_c.iter().map(Vec::as_slice)),
            distance: SeriesStats::from_runs(runs.iter().map(|r| r.distance.as_slice())),
            bloch_i: [component(0), component(1), component(2)],
        }
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| *s >= t - 1e-12)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "time",
            "c_i_mean",
            "c_i_se",
            "c_j_mean",
            "c_j_se",
            "c_mean",
            "c_se",
            "distance_mean",
            "distance_se",
        ])?;
        for k in 0..self.times.len() {
            let row = [
                self.times[k],
                self.coherence_i.mean[k],
                self.coherence_i.std_err[k],
                self.coherence_j.mean[k],
                self.coherence_j.std_err[k],
                self.coherence.mean[k],
                self.coherence.std_err[k],
                self.distance.mean[k],
                self.distance.std_err[k],
            ];
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `m` trajectories in parallel; trajectory `k` uses seed
/// `derive_seed(master_seed, k)`.
pub fn run_ensemble(
    rho0_i: &DensityMatrix,
    rho0_j: &DensityMatrix,
    p: &NoiseParams,
    cfg: &SmeConfig,
    master_seed: u64,
    m: usize,
) -> Result<(EnsembleSummary, Vec<ProtectedPair>)> {
    let runs = (0..m)
        .into_par_iter()
        .map(|k| simulate_protected_pair(rho0_i, rho0_j, p, cfg, derive_seed(master_seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((EnsembleSummary::from_runs(&runs), runs))
}

impl DensityMatrix {
    pub(crate) fn from_bloch_unchecked(v: &Vector3<f64>) -> Self {
        DensityMatrix::from_bloch(&BlochVector::from_vector(*v).unwrap_or_else(|_| {
            // Measurement kicks may push a state marginally past the sphere;
            // the positivity check downstream reports genuine failures.
            BlochVector::from_vector(v / v.norm()).expect("unit vector")
        }))
    }
}
