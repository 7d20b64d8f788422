//! Per-qubit control Hamiltonians.
//!
//! Every protocol returns an [`AxisHamiltonian`] `H = n·σ`. Under such a
//! Hamiltonian a Bloch vector obeys `ẋ = 2 n × x`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::quantum::{
    cross_terms, pauli_dot, BlochVector, Ket, Rotation3, Unitary2, C64, COMPOSED_TOL,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisHamiltonian {
    pub axis: Vector3<f64>,
}

impl AxisHamiltonian {
    pub fn new(axis: Vector3<f64>) -> Self {
        AxisHamiltonian { axis }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn matrix(&self) -> nalgebra::Matrix2<C64> {
        pauli_dot(&self.axis)
    }

    /// `U† H U` in axis form.
    pub fn to_body_frame(&self, u: &Unitary2) -> AxisHamiltonian {
        AxisHamiltonian::new(axis_to_body_frame(&self.axis, &u.rotation()))
    }
}

pub fn hamiltonian_to_body_frame(h: &AxisHamiltonian, u: &Unitary2) -> AxisHamiltonian {
    h.to_body_frame(u)
}

/// `Rᵀ n`.
pub fn axis_to_body_frame(n: &Vector3<f64>, r: &Rotation3) -> Vector3<f64> {
    r.matrix().transpose() * n
}

/// Rotation that brings two pure states together in minimum time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinTimePlan {
    pub axis: Vector3<f64>,
    pub total_angle: f64,
    pub meet_time: f64,
}

impl MinTimePlan {
    pub fn new(s_i: &BlochVector, s_j: &BlochVector) -> Result<Self> {
        let axis = two_qubit_axis(s_i, s_j)?;
        let total_angle = s_i.angle_to(s_j);
        Ok(MinTimePlan {
            axis,
            total_angle,
            meet_time: 0.5 * total_angle,
        })
    }

    /// `(+½ n̂, −½ n̂)`: each state turns at unit angular rate toward the other.
    pub fn hamiltonians(&self) -> (AxisHamiltonian, AxisHamiltonian) {
        let half = 0.5 * self.axis;
        (AxisHamiltonian::new(half), AxisHamiltonian::new(-half))
    }
}

fn require_unit(s: &BlochVector) -> Result<()> {
    if s.is_unit(COMPOSED_TOL) {
        Ok(())
    } else {
        Err(Error::NotUnit(s.norm()))
    }
}

/// `normalize(s_i × s_j)`.
pub fn two_qubit_axis(s_i: &BlochVector, s_j: &BlochVector) -> Result<Vector3<f64>> {
    require_unit(s_i)?;
    require_unit(s_j)?;
    let (a, b) = (s_i.vector(), s_j.vector());
    let cross = a.cross(&b);
    let norm = cross.norm();
    if norm <= COMPOSED_TOL {
        return Err(if a.dot(&b) > 0.0 {
            Error::ParallelStates
        } else {
            Error::AntipodalStates
        });
    }
    Ok(cross / norm)
}

/// `½ arccos(s_i·s_j)`.
pub fn min_time(s_i: &BlochVector, s_j: &BlochVector) -> f64 {
    0.5 * s_i.angle_to(s_j)
}

pub fn min_time_pair_hamiltonians(
    s_i: &BlochVector,
    s_j: &BlochVector,
) -> Result<(AxisHamiltonian, AxisHamiltonian)> {
    Ok(MinTimePlan::new(s_i, s_j)?.hamiltonians())
}

/// Chain-protocol axis for node `i` given the kets of the whole chain.
pub fn chain_hamiltonian(states: &[Ket], i: usize, topology: &Topology) -> Result<AxisHamiltonian> {
    check_chain(states, topology)?;
    if i >= states.len() {
        return Err(Error::NodeOutOfRange {
            index: i,
            n: states.len(),
        });
    }
    Ok(AxisHamiltonian::new(chain_axis_with(states.len(), i, |j| states[j])))
}

/// Chain-protocol axes for every node.
pub fn chain_axes(states: &[Ket], topology: &Topology) -> Result<Vec<Vector3<f64>>> {
    check_chain(states, topology)?;
    let links: Vec<_> = states.windows(2).map(|w| cross_terms(&w[0], &w[1])).collect();
    let n = states.len();
    Ok((0..n)
        .map(|i| {
            let mut axis = Vector3::zeros();
            if i + 1 < n {
                axis += links[i];
            }
            if i > 0 {
                axis -= links[i - 1];
            }
            axis
        })
        .collect())
}

pub(crate) fn check_chain(states: &[Ket], topology: &Topology) -> Result<()> {
    if !topology.is_chain() {
        return Err(Error::NotChain);
    }
    if states.len() != topology.n() {
        return Err(Error::StateCount {
            expected: topology.n(),
            got: states.len(),
        });
    }
    Ok(())
}

/// Node `i`'s chain axis reading neighbor kets through `ket`.
pub(crate) fn chain_axis_with(n: usize, i: usize, ket: impl Fn(usize) -> Ket) -> Vector3<f64> {
    let mut axis = Vector3::zeros();
    let me = ket(i);
    if i + 1 < n {
        axis += cross_terms(&me, &ket(i + 1));
    }
    if i > 0 {
        axis -= cross_terms(&ket(i - 1), &me);
    }
    axis
}

/// Closed-form two-qubit axis for the qubit at `(θ_i, φ_i)` paired with `(θ_j, φ_j)`.
pub fn two_qubit_closed_form_axis(theta_i: f64, phi_i: f64, theta_j: f64, phi_j: f64) -> Vector3<f64> {
    let (s_sum, c_sum) = (0.5 * (phi_i + phi_j)).sin_cos();
    let (s_dth, c_dth) = (0.5 * (theta_i - theta_j)).sin_cos();
    let s_dphi = (0.5 * (phi_i - phi_j)).sin();
    Vector3::new(s_sum * s_dth, -c_sum * s_dth, -s_dphi * c_dth)
}

/// `x_i × ((I − x_i x_iᵀ) Σ w_ij x_j)`.
pub fn geometry_axis(x_i: &Vector3<f64>, nbrs: &[(Vector3<f64>, f64)]) -> Vector3<f64> {
    let pull = tangent_pull(x_i, nbrs.iter().copied());
    x_i.cross(&pull)
}

/// Projected consensus input `(I − x xᵀ) Σ w_j x_j`.
pub fn tangent_pull(
    x: &Vector3<f64>,
    nbrs: impl IntoIterator<Item = (Vector3<f64>, f64)>,
) -> Vector3<f64> {
    let sum = nbrs
        .into_iter()
        .fold(Vector3::zeros(), |acc, (xj, w)| acc + w * xj);
    sum - x * x.dot(&sum)
}

/// Edge weight as a function of the chordal distance `‖x_i − x_j‖`.
///
/// The effective weight is `a_ij · f(‖x_i − x_j‖)`; without a modulation it
/// is the static graph weight.
#[derive(Clone, Default)]
pub struct WeightFn {
    modulation: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl WeightFn {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn distance_modulated(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        WeightFn {
            modulation: Some(Arc::new(f)),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.modulation.is_none()
    }

    pub fn weight(&self, a_ij: f64, x_i: &Vector3<f64>, x_j: &Vector3<f64>) -> f64 {
        match &self.modulation {
            None => a_ij,
            Some(f) => a_ij * f((x_i - x_j).norm()),
        }
    }
}

impl fmt::Debug for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_constant() {
            "WeightFn::Constant"
        } else {
            "WeightFn::DistanceModulated"
        })
    }
}

#[derive(Clone, Debug)]
pub enum ProtocolKind {
    Chain,
    Geometry(WeightFn),
    MinTimePair,
}

/// Protocol family plus a global gain multiplying every axis.
#[derive(Clone, Debug)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub gain: f64,
}

impl Protocol {
    pub fn chain() -> Self {
        Protocol {
            kind: ProtocolKind::Chain,
            gain: 1.0,
        }
    }

    pub fn geometry() -> Self {
        Self::geometry_weighted(WeightFn::constant())
    }

    pub fn geometry_weighted(weight: WeightFn) -> Self {
        Protocol {
            kind: ProtocolKind::Geometry(weight),
            gain: 1.0,
        }
    }

    pub fn min_time_pair() -> Self {
        Protocol {
            kind: ProtocolKind::MinTimePair,
            gain: 1.0,
        }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProtocolKind::Chain => "chain",
            ProtocolKind::Geometry(_) => "geometry",
            ProtocolKind::MinTimePair => "min-time-pair",
        }
    }

    pub fn check_topology(&self, topology: &Topology) -> Result<()> {
        match self.kind {
            ProtocolKind::Chain if !topology.is_chain() => Err(Error::NotChain),
            ProtocolKind::Geometry(_) if !topology.is_connected() => Err(Error::Disconnected),
            ProtocolKind::MinTimePair if topology.n() != 2 => Err(Error::StateCount {
                expected: 2,
                got: topology.n(),
            }),
            _ => Ok(()),
        }
    }

    /// Axis for node `i`. `ket(j)` returns node `j`'s state as seen by node
    /// `i`, so passing frame-transformed states yields the body-frame axis.
    pub(crate) fn node_axis(
        &self,
        topology: &Topology,
        i: usize,
        ket: impl Fn(usize) -> Ket,
    ) -> Vector3<f64> {
        let raw = match &self.kind {
            ProtocolKind::Chain => chain_axis_with(topology.n(), i, ket),
            ProtocolKind::Geometry(weight) => {
                let x_i = ket(i).bloch().vector();
                let nbrs = topology.neighbors_unchecked(i).map(|(j, a)| {
                    let x_j = ket(j).bloch().vector();
                    (x_j, weight.weight(a, &x_i, &x_j))
                });
                x_i.cross(&tangent_pull(&x_i, nbrs))
            }
            ProtocolKind::MinTimePair => unreachable!("min-time pair is stepped separately"),
        };
        self.gain * raw
    }
}

/// Linear map `ρ ↦ Σ_{(j,k)∈E} w_jk (U_jk ρ U_jk† − ρ)` on the joint state.
#[derive(Clone, Debug)]
pub struct QcmeGenerator {
    n: usize,
    swaps: Vec<(Vec<usize>, f64)>,
}

pub const QCME_MAX_QUBITS: usize = 12;

impl QcmeGenerator {
    pub fn new(topology: &Topology) -> Result<Self> {
        let n = topology.n();
        if n > QCME_MAX_QUBITS {
            return Err(Error::TooManyQubits {
                n,
                max: QCME_MAX_QUBITS,
            });
        }
        let swaps = topology
            .edges()
            .into_iter()
            .map(|(j, k, w)| (swap_permutation(n, j, k), w))
            .collect();
        Ok(QcmeGenerator { n, swaps })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::DimensionMismatch(rho.nrows(), d));
        }
        let mut out = DMatrix::zeros(d, d);
        for (perm, w) in &self.swaps {
            let w = C64::new(*w, 0.0);
            for b in 0..d {
                let pb = perm[b];
                for a in 0..d {
                    out[(a, b)] += w * (rho[(perm[a], pb)] - rho[(a, b)]);
                }
            }
        }
        Ok(out)
    }
}

pub fn qcme_generator(topology: &Topology) -> Result<QcmeGenerator> {
    QcmeGenerator::new(topology)
}

/// Basis-index permutation exchanging qubits `j` and `k`. Qubit 0 is the
/// leftmost tensor factor (most significant bit).
pub fn swap_permutation(n: usize, j: usize, k: usize) -> Vec<usize> {
    let (bj, bk) = (n - 1 - j, n - 1 - k);
    (0..1usize << n)
        .map(|idx| {
            let (vj, vk) = ((idx >> bj) & 1, (idx >> bk) & 1);
            if vj == vk {
                idx
            } else {
                idx ^ (1 << bj) ^ (1 << bk)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{cross_term, MaxEntry, Pauli};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    fn unit(x: f64, y: f64, z: f64) -> BlochVector {
        BlochVector::unit(Vector3::new(x, y, z)).unwrap()
    }

    fn assert_vec_eq(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) {
        assert!((a - b).amax() <= tol, "{a:?} != {b:?}");
    }

    #[test]
    fn two_qubit_axis_examples() {
        assert_vec_eq(&two_qubit_axis(&unit(1., 0., 0.), &unit(0., 1., 0.)).unwrap(), &Vector3::z(), 1e-15);
        assert_vec_eq(&two_qubit_axis(&unit(0., 0., 1.), &unit(1., 0., 0.)).unwrap(), &Vector3::y(), 1e-15);
        assert!(matches!(
            two_qubit_axis(&unit(0., 0., 1.), &unit(0., 0., 1.)),
            Err(Error::ParallelStates)
        ));
        assert!(matches!(
            two_qubit_axis(&unit(0., 0., 1.), &unit(0., 0., -1.)),
            Err(Error::AntipodalStates)
        ));
    }

    #[test]
    fn min_time_examples() {
        let x = unit(1., 0., 0.);
        assert_eq!(min_time(&x, &x), 0.0);
        assert!((min_time(&x, &unit(0., 1., 0.)) - FRAC_PI_4).abs() < 1e-15);
        assert!((min_time(&x, &unit(-1., 0., 0.)) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn min_time_plan_shape() {
        let plan = MinTimePlan::new(&unit(1., 0., 0.), &unit(0., 1., 0.)).unwrap();
        let (hi, hj) = plan.hamiltonians();
        assert_vec_eq(&hi.axis, &(0.5 * Vector3::z()), 1e-15);
        assert_vec_eq(&hj.axis, &(-0.5 * Vector3::z()), 1e-15);
        assert!((plan.meet_time - 0.5 * plan.total_angle).abs() < 1e-15);
    }

    #[test]
    fn chain_hamiltonian_examples() {
        let t2 = Topology::chain(2).unwrap();
        let states = [Ket::zero(), Ket::one()];
        let n1 = chain_hamiltonian(&states, 0, &t2).unwrap().axis;
        let n2 = chain_hamiltonian(&states, 1, &t2).unwrap().axis;
        assert_vec_eq(&n1, &Vector3::new(0., 1., 0.), 1e-15);
        assert_vec_eq(&n2, &Vector3::new(0., -1., 0.), 1e-15);

        let psi = Ket::from_angles(1.0, 2.0).unwrap();
        let t5 = Topology::chain(5).unwrap();
        for axis in chain_axes(&[psi; 5], &t5).unwrap() {
            assert!(axis.amax() < 1e-15);
        }
        assert!(matches!(
            chain_hamiltonian(&[psi; 9], 0, &Topology::grid(3).unwrap()),
            Err(Error::NotChain)
        ));
    }

    #[test]
    fn chain_axes_match_per_node() {
        let states: Vec<Ket> = (0..4)
            .map(|k| Ket::from_angles(0.3 + 0.5 * k as f64, 1.1 * k as f64).unwrap())
            .collect();
        let t = Topology::chain(4).unwrap();
        let all = chain_axes(&states, &t).unwrap();
        for (i, axis) in all.iter().enumerate() {
            let single = chain_hamiltonian(&states, i, &t).unwrap().axis;
            assert_vec_eq(axis, &single, 1e-15);
        }
        // interior node, hand expansion
        let expected = Vector3::from_fn(|p, _| {
            let ax = Pauli::ALL[p];
            cross_term(&states[1], &states[2], ax) - cross_term(&states[0], &states[1], ax)
        });
        assert_vec_eq(&all[1], &expected, 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(two_qubit_closed_form_axis(0.7, 1.2, 0.7, 1.2), Vector3::zeros());
        let v = two_qubit_closed_form_axis(0.0, 0.0, PI, 0.0);
        assert_vec_eq(&v, &Vector3::new(0., 1., 0.), 1e-15);
    }

    #[test]
    fn geometry_axis_examples() {
        let z = Vector3::z();
        assert_vec_eq(&geometry_axis(&z, &[(Vector3::x(), 1.0)]), &Vector3::y(), 1e-15);
        assert_eq!(geometry_axis(&z, &[(z, 2.0)]), Vector3::zeros());
        let a = Vector3::new(0.6, 0.0, 0.8);
        let b = Vector3::new(-0.6, 0.0, 0.8);
        assert!(geometry_axis(&z, &[(a, 1.0), (b, 1.0)]).amax() < 1e-15);
    }

    #[test]
    fn body_frame_examples() {
        let h = AxisHamiltonian::new(Vector3::new(0.3, -0.2, 0.9));
        assert_vec_eq(&h.to_body_frame(&Unitary2::identity()).axis, &h.axis, 0.0);

        // U rotates z to x; check against direct conjugation U† H U.
        let u = Unitary2::from_axis_angle(&Vector3::y(), FRAC_PI_2).unwrap();
        let hz = AxisHamiltonian::new(Vector3::z());
        let body = hz.to_body_frame(&u);
        let direct = u.matrix().adjoint() * hz.matrix() * u.matrix();
        let dev = (direct - body.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-15);
        assert_vec_eq(&body.axis, &Vector3::new(-1., 0., 0.), 1e-15);

        let back = body.to_body_frame(&u.adjoint());
        assert_vec_eq(&back.axis, &hz.axis, 1e-12);

        let rz = Unitary2::from_axis_angle(&Vector3::z(), FRAC_PI_2).unwrap().rotation();
        assert_vec_eq(&axis_to_body_frame(&Vector3::x(), &rz), &Vector3::new(0., -1., 0.), 1e-15);
        assert_vec_eq(&axis_to_body_frame(&Vector3::x(), &Rotation3::identity()), &Vector3::x(), 0.0);
    }

    fn basis_density(n: usize, idx: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(1 << n, 1 << n);
        m[(idx, idx)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn qcme_examples() {
        let g = QcmeGenerator::new(&Topology::chain(2).unwrap()).unwrap();
        // |01⟩ is index 1, |10⟩ index 2
        let out = g.apply(&basis_density(2, 1)).unwrap();
        let expected = basis_density(2, 2) - basis_density(2, 1);
        assert!((out - expected).max_entry() < 1e-15);

        let psi = Ket::from_angles(0.4, 1.0).unwrap().density();
        let prod = psi.matrix().kronecker(psi.matrix());
        let rho = DMatrix::from_fn(4, 4, |a, b| prod[(a, b)]);
        assert!(g.apply(&rho).unwrap().max_entry() < 1e-15);

        let ghz_like = DMatrix::from_fn(8, 8, |a, b| {
            if (a == 0 || a == 7) && (b == 0 || b == 7) {
                C64::new(0.5, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let g3 = QcmeGenerator::new(&Topology::chain(3).unwrap()).unwrap();
        assert!(g3.apply(&ghz_like).unwrap().max_entry() < 1e-15);
        assert!(matches!(
            QcmeGenerator::new(&Topology::chain(13).unwrap()),
            Err(Error::TooManyQubits { n: 13, max: 12 })
        ));
        assert!(matches!(g3.apply(&basis_density(2, 0)), Err(Error::DimensionMismatch(4, 8))));
    }

    #[test]
    fn swap_permutation_is_involution() {
        let p = swap_permutation(3, 0, 2);
        // |100⟩ (4) ↔ |001⟩ (1), |110⟩ (6) ↔ |011⟩ (3)
        assert_eq!(p, vec![0, 4, 2, 6, 1, 5, 3, 7]);
        for (i, &j) in p.iter().enumerate() {
            assert_eq!(p[j], i);
        }
    }

    fn unit_vec() -> impl Strategy<Value = Vector3<f64>> {
        (0.0..PI, 0.0..TAU).prop_map(|(t, p)| BlochVector::from_angles(t, p).vector())
    }

    fn any_rotation() -> impl Strategy<Value = Rotation3> {
        (unit_vec(), 0.0..TAU).prop_map(|(n, t)| Unitary2::from_axis_angle(&n, t).unwrap().rotation())
    }

    proptest! {
        #[test]
        fn closed_form_matches_chain(ti in 0.0..=PI, pi in 0.0..TAU, tj in 0.0..=PI, pj in 0.0..TAU) {
            let states = [Ket::from_angles(ti, pi).unwrap(), Ket::from_angles(tj, pj).unwrap()];
            let t = Topology::chain(2).unwrap();
            let chain = chain_hamiltonian(&states, 0, &t).unwrap().axis;
            let closed = two_qubit_closed_form_axis(ti, pi, tj, pj);
            prop_assert!((chain - closed).amax() < 1e-10);
            let other = chain_hamiltonian(&states, 1, &t).unwrap().axis;
            prop_assert!((other + closed).amax() < 1e-10);
        }

        #[test]
        fn geometry_axis_is_tangent(x in unit_vec(), a in unit_vec(), b in unit_vec(), wa in 0.0..3.0f64, wb in 0.0..3.0f64) {
            let n = geometry_axis(&x, &[(a, wa), (b, wb)]);
            prop_assert!(n.dot(&x).abs() < 1e-12);
        }

        #[test]
        fn geometry_axis_frame_covariant(r in any_rotation(), x in unit_vec(), a in unit_vec(), b in unit_vec()) {
            let world = geometry_axis(&x, &[(a, 1.0), (b, 0.5)]);
            let rt = r.transpose();
            let body = geometry_axis(&rt.apply(&x), &[(rt.apply(&a), 1.0), (rt.apply(&b), 0.5)]);
            prop_assert!((body - axis_to_body_frame(&world, &r)).amax() < 1e-12);
        }

        #[test]
        fn qcme_preserves_trace_and_hermiticity(entries in proptest::collection::vec(-1.0..1.0f64, 128)) {
            let raw = DMatrix::from_fn(8, 8, |a, b| C64::new(entries[a * 8 + b], entries[64 + a * 8 + b]));
            let herm = &raw + raw.adjoint();
            let g = QcmeGenerator::new(&Topology::complete(3).unwrap()).unwrap();
            let out = g.apply(&herm).unwrap();
            prop_assert!(out.trace().norm() < 1e-12);
            prop_assert!((&out - out.adjoint()).max_entry() < 1e-12);
        }
    }
}
