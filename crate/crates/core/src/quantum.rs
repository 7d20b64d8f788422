//! Single-qubit state algebra.
//!
//! Pure states are [`Ket`]s, general states are [`DensityMatrix`]es, and both
//! map onto the Bloch ball through [`BlochVector`]. [`Unitary2`] (SU(2)) acts
//! on kets; its image [`Rotation3`] (SO(3)) acts on Bloch vectors.
//!
//! Kets carry a global phase that is invisible on the Bloch sphere. The
//! constructors here fix it with the half-angle spin convention
//! `(e^{-iφ/2} cos θ/2, e^{iφ/2} sin θ/2)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::Mul;

use nalgebra::{Complex, Dim, Matrix, Matrix2, Matrix3, RawStorage, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest entry modulus of a complex matrix.
pub trait MaxEntry {
    fn max_entry(&self) -> f64;
}

impl<R: Dim, C: Dim, S: RawStorage<C64, R, C>> MaxEntry for Matrix<C64, R, C, S> {
    fn max_entry(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Tolerance for algebraic identities on 2×2 matrices.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for composed mappings (angles, round trips).
pub const COMPOSED_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    /// Looks up a Pauli matrix by its 1-based index (1 = x, 2 = y, 3 = z).
    pub fn from_index(p: usize) -> Result<Self> {
        match p {
            1 => Ok(Pauli::X),
            2 => Ok(Pauli::Y),
            3 => Ok(Pauli::Z),
            other => Err(Error::InvalidAxis(other)),
        }
    }

    pub fn component(self) -> usize {
        match self {
            Pauli::X => 0,
            Pauli::Y => 1,
            Pauli::Z => 2,
        }
    }

    pub fn matrix(self) -> Matrix2<C64> {
        match self {
            Pauli::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Matrix2::new(ZERO, -I, I, ZERO),
            Pauli::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        }
    }
}

impl TryFrom<usize> for Pauli {
    type Error = Error;

    fn try_from(p: usize) -> Result<Self> {
        Pauli::from_index(p)
    }
}

/// `v·σ = v_x σ_x + v_y σ_y + v_z σ_z`.
pub fn pauli_dot(v: &Vector3<f64>) -> Matrix2<C64> {
    Matrix2::new(
        C64::new(v.z, 0.0),
        C64::new(v.x, -v.y),
        C64::new(v.x, v.y),
        C64::new(-v.z, 0.0),
    )
}

/// Pure qubit state `a0|0⟩ + a1|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket(Vector2<C64>);

impl Ket {
    pub fn new(a0: C64, a1: C64) -> Result<Self> {
        let norm_sqr = a0.norm_sqr() + a1.norm_sqr();
        if (norm_sqr - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(Error::NotNormalized(norm_sqr));
        }
        Ok(Ket(Vector2::new(a0, a1)))
    }

    /// Normalizes arbitrary non-zero amplitudes.
    pub fn normalized(a0: C64, a1: C64) -> Result<Self> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm * norm));
        }
        Ok(Ket(Vector2::new(a0 / norm, a1 / norm)))
    }

    pub fn zero() -> Self {
        Ket(Vector2::new(ONE, ZERO))
    }

    pub fn one() -> Self {
        Ket(Vector2::new(ZERO, ONE))
    }

    /// Spin state with polar angle `theta ∈ [0, π]` and azimuth `phi ∈ [0, 2π)`.
    pub fn from_angles(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::AngleOutOfRange {
                name: "theta",
                value: theta,
            });
        }
        if !(0.0..TAU).contains(&phi) {
            return Err(Error::AngleOutOfRange {
                name: "phi",
                value: phi,
            });
        }
        Ok(Self::from_angles_unchecked(theta, phi))
    }

    fn from_angles_unchecked(theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Ket(Vector2::new(
            C64::from_polar(c, -0.5 * phi),
            C64::from_polar(s, 0.5 * phi),
        ))
    }

    /// Inverse of [`Ket::bloch`] with the phase fixed by `θ = arccos z`,
    /// `φ = atan2(y, x)` folded into `[0, 2π)`.
    pub fn from_bloch(u: &BlochVector) -> Result<Self> {
        let v = u.vector();
        let norm = v.norm();
        if (norm - 1.0).abs() > COMPOSED_TOL {
            return Err(Error::NotUnit(norm));
        }
        let v = v / norm;
        let theta = v.z.clamp(-1.0, 1.0).acos();
        let mut phi = v.y.atan2(v.x);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi -= TAU;
        }
        Ok(Self::from_angles_unchecked(theta, phi))
    }

    pub fn a0(&self) -> C64 {
        self.0[0]
    }

    pub fn a1(&self) -> C64 {
        self.0[1]
    }

    pub fn vector(&self) -> &Vector2<C64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)`.
    pub fn bloch(&self) -> BlochVector {
        let (a0, a1) = (self.0[0], self.0[1]);
        let off = a0.conj() * a1;
        BlochVector(Vector3::new(
            2.0 * off.re,
            2.0 * off.im,
            a0.norm_sqr() - a1.norm_sqr(),
        ))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.0.dotc(&other.0)
    }

    /// `⟨self|op|other⟩`.
    pub fn sandwich(&self, op: &Matrix2<C64>, other: &Ket) -> C64 {
        self.0.dotc(&(op * other.0))
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.0 * self.0.adjoint())
    }

    pub fn apply(&self, u: &Unitary2) -> Ket {
        Ket(u.0 * self.0)
    }

    /// Multiplies both amplitudes by `e^{iα}`.
    pub fn with_phase(&self, alpha: f64) -> Ket {
        Ket(self.0 * C64::from_polar(1.0, alpha))
    }
}

/// `ℜ(i⟨ψ_i|σ_p|ψ_j⟩)`, the building block of the chain protocol.
pub fn cross_term(psi_i: &Ket, psi_j: &Ket, axis: Pauli) -> f64 {
    (I * psi_i.sandwich(&axis.matrix(), psi_j)).re
}

/// [`cross_term`] for all three axes.
pub fn cross_terms(psi_i: &Ket, psi_j: &Ket) -> Vector3<f64> {
    Vector3::new(
        cross_term(psi_i, psi_j, Pauli::X),
        cross_term(psi_i, psi_j, Pauli::Y),
        cross_term(psi_i, psi_j, Pauli::Z),
    )
}

/// Point of the closed unit ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector(Vector3<f64>);

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm > 1.0 + ALGEBRAIC_TOL {
            return Err(Error::OutsideBlochBall(norm));
        }
        Ok(BlochVector(v))
    }

    /// Unit vector (pure state); rejects inputs off the sphere by more than 1e-9.
    pub fn unit(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > COMPOSED_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(BlochVector(v / norm))
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        BlochVector(Vector3::new(st * cp, st * sp, ct))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Angle between two directions, robust near 0 and π.
    pub fn angle_to(&self, other: &BlochVector) -> f64 {
        vector_angle(&self.0, &other.0)
    }
}

pub fn vector_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

impl From<BlochVector> for Vector3<f64> {
    fn from(b: BlochVector) -> Self {
        b.0
    }
}

/// 2×2 density operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Matrix2<C64>);

impl DensityMatrix {
    pub fn from_matrix(m: Matrix2<C64>) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > ALGEBRAIC_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let rho = DensityMatrix(m);
        let (lo, _) = rho.eigenvalues();
        if lo < -ALGEBRAIC_TOL {
            return Err(Error::NotPositive(lo));
        }
        Ok(rho)
    }

    /// Skips validation; used by integrators that enforce their own bounds.
    pub(crate) fn from_matrix_unchecked(m: Matrix2<C64>) -> Self {
        DensityMatrix(m)
    }

    /// `½(I + p·σ)`.
    pub fn from_bloch(p: &BlochVector) -> Self {
        let half = C64::new(0.5, 0.0);
        DensityMatrix((Matrix2::identity() + pauli_dot(&p.0)) * half)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Matrix2::identity() * C64::new(0.5, 0.0))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn expectation(&self, axis: Pauli) -> f64 {
        (axis.matrix() * self.0).trace().re
    }

    pub fn bloch(&self) -> BlochVector {
        let m = &self.0;
        BlochVector(Vector3::new(
            2.0 * m[(1, 0)].re,
            2.0 * m[(1, 0)].im,
            (m[(0, 0)] - m[(1, 1)]).re,
        ))
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = &self.0;
        let mean = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
        let half_diff = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
        let r = (half_diff * half_diff + m[(0, 1)].norm_sqr()).sqrt();
        (mean - r, mean + r)
    }

    /// Splits `ρ = P·½I + (1 − P)ρ'` into mixed weight and pure direction.
    pub fn decompose(&self) -> Result<MixedDecomposition> {
        let p = self.bloch().0;
        let norm = p.norm();
        if norm <= COMPOSED_TOL {
            return Err(Error::MaximallyMixed);
        }
        Ok(MixedDecomposition {
            mixed_weight: (1.0 - norm).clamp(0.0, 1.0),
            pure_direction: BlochVector(p / norm),
        })
    }

    /// `UρU†`.
    pub fn conjugate(&self, u: &Unitary2) -> DensityMatrix {
        DensityMatrix(u.0 * self.0 * u.0.adjoint())
    }

    /// Frobenius distance `‖ρ − σ‖_F`.
    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// `ρ = P·½I + (1 − P)·½(I + n̂·σ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedDecomposition {
    pub mixed_weight: f64,
    pub pure_direction: BlochVector,
}

impl MixedDecomposition {
    pub fn reconstruct(&self) -> DensityMatrix {
        DensityMatrix::from_bloch(&BlochVector(
            self.pure_direction.0 * (1.0 - self.mixed_weight),
        ))
    }

    pub fn pure_state(&self) -> DensityMatrix {
        DensityMatrix::from_bloch(&self.pure_direction)
    }
}

/// Element of U(2); constructors in this module produce SU(2) elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2(Matrix2<C64>);

impl Unitary2 {
    pub fn from_matrix(m: Matrix2<C64>) -> Result<Self> {
        let dev = (m * m.adjoint() - Matrix2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > ALGEBRAIC_TOL {
            return Err(Error::NotUnitary(dev));
        }
        let det = (m.determinant().norm() - 1.0).abs();
        if det > ALGEBRAIC_TOL {
            return Err(Error::NotUnitary(det));
        }
        Ok(Unitary2(m))
    }

    pub fn identity() -> Self {
        Unitary2(Matrix2::identity())
    }

    /// `e^{-iθ/2 n·σ} = cos(θ/2) I − i sin(θ/2) n·σ`.
    pub fn from_axis_angle(n: &Vector3<f64>, theta: f64) -> Result<Self> {
        let norm = n.norm();
        if (norm - 1.0).abs() > COMPOSED_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(Self::exp_su2(&(n / norm), 0.5 * theta))
    }

    /// `e^{-i angle n̂·σ}` for a unit axis.
    pub(crate) fn exp_su2(unit_axis: &Vector3<f64>, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Unitary2(Matrix2::identity() * C64::new(c, 0.0) - pauli_dot(unit_axis) * C64::new(0.0, s))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Unitary2 {
        Unitary2(self.0.adjoint())
    }

    /// SO(3) image: `R_qp = ½ tr(σ_q U σ_p U†)`.
    pub fn rotation(&self) -> Rotation3 {
        let ud = self.0.adjoint();
        let mut r = Matrix3::zeros();
        for q in Pauli::ALL {
            let sq = q.matrix();
            for p in Pauli::ALL {
                let val = (sq * self.0 * p.matrix() * ud).trace().re * 0.5;
                r[(q.component(), p.component())] = val;
            }
        }
        Rotation3(r)
    }

    pub fn distance(&self, other: &Unitary2) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2(self.0 * rhs.0)
    }
}

/// Proper rotation of 3-space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let dev = (m * m.transpose() - Matrix3::identity()).amax();
        if dev > ALGEBRAIC_TOL {
            return Err(Error::NotRotation(dev));
        }
        let det = (m.determinant() - 1.0).abs();
        if det > COMPOSED_TOL {
            return Err(Error::NotRotation(det));
        }
        Ok(Rotation3(m))
    }

    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation3 {
        Rotation3(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn distance(&self, other: &Rotation3) -> f64 {
        (self.0 - other.0).amax()
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;

    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl fmt::Display for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.0.x, self.0.y, self.0.z)
    }
}

// Free-function aliases mirroring the operation names used by callers that
// prefer a procedural style.

pub fn ket_from_angles(theta: f64, phi: f64) -> Result<Ket> {
    Ket::from_angles(theta, phi)
}

pub fn bloch_from_ket(psi: &Ket) -> BlochVector {
    psi.bloch()
}

pub fn ket_from_bloch(u: &BlochVector) -> Result<Ket> {
    Ket::from_bloch(u)
}

pub fn density_from_bloch(p: &BlochVector) -> DensityMatrix {
    DensityMatrix::from_bloch(p)
}

pub fn su2_from_axis_angle(n: &Vector3<f64>, theta: f64) -> Result<Unitary2> {
    Unitary2::from_axis_angle(n, theta)
}

pub fn so3_from_su2(u: &Unitary2) -> Rotation3 {
    u.rotation()
}
