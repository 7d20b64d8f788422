//! Time integration of qubit networks.
//!
//! Ket networks advance with exact SU(2) exponentials. Each step evaluates
//! all node Hamiltonians from a common snapshot (synchronous update). The
//! default [`Scheme::CommutatorFree4`] composes several such snapshot
//! exponentials per step for fourth-order accuracy; [`Scheme::LieEuler`] is
//! the single frozen-snapshot exponential.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::metrics::{
    composite_distance, lyapunov_v_unchecked, product_consensus_distance, pure_state_error,
    pure_state_error_bloch, qubit_count, quantum_average, Metric, SettlingSpec,
};
use crate::protocols::{
    chain_axes, tangent_pull, AxisHamiltonian, Protocol, ProtocolKind, QcmeGenerator, WeightFn,
};
use crate::quantum::{vector_angle, Ket, MaxEntry, Rotation3, Unitary2, C64, COMPOSED_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub kets: Vec<Ket>,
    pub time: f64,
}

impl NetworkState {
    pub fn new(kets: Vec<Ket>) -> Result<Self> {
        for k in &kets {
            let norm = k.norm();
            if (norm - 1.0).abs() > COMPOSED_TOL {
                return Err(Error::NotNormalized(norm * norm));
            }
        }
        Ok(NetworkState { kets, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.kets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kets.is_empty()
    }

    pub fn blochs(&self) -> Vec<Vector3<f64>> {
        self.kets.iter().map(|k| k.bloch().vector()).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LieEuler,
    #[default]
    CommutatorFree4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub sample_every: usize,
    pub stop: Option<SettlingSpec>,
    pub scheme: Scheme,
    /// Also record `composite_distance` (joint product state, N ≤ 6).
    pub record_composite: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            t_max: 50.0,
            sample_every: 10,
            stop: None,
            scheme: Scheme::default(),
            record_composite: false,
        }
    }
}

impl IntegratorConfig {
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
        if let Some(stop) = &self.stop {
            SettlingSpec::new(stop.metric, stop.threshold)?;
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_sample_every(mut self, sample_every: usize) -> Self {
        self.sample_every = sample_every;
        self
    }

    pub fn with_stop(mut self, metric: Metric, threshold: f64) -> Self {
        self.stop = Some(SettlingSpec { metric, threshold });
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_composite(mut self) -> Self {
        self.record_composite = true;
        self
    }

    /// Half the step with the same sampling instants.
    pub fn halved(&self) -> Self {
        IntegratorConfig {
            dt: 0.5 * self.dt,
            sample_every: 2 * self.sample_every,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub samples: Vec<S>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub warnings: Vec<String>,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Trajectory {
            times: Vec::new(),
            samples: Vec::new(),
            series: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.series
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingSeries(name.to_string()))
    }

    pub fn metric(&self, m: Metric) -> Result<&[f64]> {
        self.series(m.name())
    }

    /// First sample time with the metric below threshold.
    pub fn settling_time(&self, spec: &SettlingSpec) -> Result<Option<f64>> {
        let values = self.metric(spec.metric)?;
        Ok(crate::metrics::first_below(&self.times, values, spec.threshold))
    }

    fn push(&mut self, t: f64, sample: S, values: &[(&str, f64)]) {
        self.times.push(t);
        self.samples.push(sample);
        for (name, v) in values {
            self.series.entry((*name).to_string()).or_default().push(*v);
        }
    }
}

pub fn settling_time<S>(traj: &Trajectory<S>, spec: &SettlingSpec) -> Result<Option<f64>> {
    traj.settling_time(spec)
}

/// Per-sample CSV columns.
pub trait CsvSample {
    fn headers(&self) -> Vec<String>;
    fn values(&self) -> Vec<f64>;
}

fn bloch_headers(n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|i| ["x", "y", "z"].map(|c| format!("q{i}_{c}")))
        .collect()
}

impl CsvSample for NetworkState {
    fn headers(&self) -> Vec<String> {
        bloch_headers(self.kets.len())
    }

    fn values(&self) -> Vec<f64> {
        self.blochs().iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }
}

impl CsvSample for Vec<Vector3<f64>> {
    fn headers(&self) -> Vec<String> {
        bloch_headers(self.len())
    }

    fn values(&self) -> Vec<f64> {
        self.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }
}

impl CsvSample for f64 {
    fn headers(&self) -> Vec<String> {
        Vec::new()
    }

    fn values(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<S: CsvSample> Trajectory<S> {
    /// One row per sample: time, sample columns, then metric series.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        if let Some(first) = self.samples.first() {
            header.extend(first.headers());
        }
        header.extend(self.series.keys().cloned());
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.samples[k].values().iter().map(f64::to_string));
            row.extend(self.series.values().map(|s| s[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `e^{-i dt (n·σ)} ψ`.
pub fn step_ket(psi: &Ket, h: &AxisHamiltonian, dt: f64) -> Ket {
    propagate(psi, &h.axis, dt)
}

fn propagate(psi: &Ket, axis: &Vector3<f64>, dt: f64) -> Ket {
    let norm = axis.norm();
    if norm == 0.0 {
        return *psi;
    }
    psi.apply(&Unitary2::exp_su2(&(axis / norm), norm * dt))
}

/// Fixed local frames `U_i`; node `i` sees every state as `U_i† ψ`.
#[derive(Clone, Debug)]
pub struct Frames {
    inverse: Vec<Unitary2>,
    rotations: Vec<Rotation3>,
}

impl Frames {
    pub fn new(frames: &[Unitary2]) -> Self {
        Frames {
            inverse: frames.iter().map(Unitary2::adjoint).collect(),
            rotations: frames.iter().map(Unitary2::rotation).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inverse.is_empty()
    }
}

struct NetworkRhs<'a> {
    protocol: &'a Protocol,
    topology: &'a Topology,
    frames: Option<&'a Frames>,
}

impl NetworkRhs<'_> {
    fn axes(&self, kets: &[Ket]) -> Vec<Vector3<f64>> {
        if let Some(frames) = self.frames {
            return (0..kets.len())
                .map(|i| {
                    let u_inv = &frames.inverse[i];
                    let body = self.protocol.node_axis(self.topology, i, |j| kets[j].apply(u_inv));
                    frames.rotations[i].apply(&body)
                })
                .collect();
        }
        let gain = self.protocol.gain;
        match &self.protocol.kind {
            ProtocolKind::Chain => chain_axes(kets, self.topology)
                .expect("topology checked before integration")
                .into_iter()
                .map(|n| gain * n)
                .collect(),
            ProtocolKind::Geometry(weight) => {
                let xs: Vec<_> = kets.iter().map(|k| k.bloch().vector()).collect();
                geometry_field(&xs, self.topology, weight)
                    .iter()
                    .zip(&xs)
                    .map(|(pull, x)| gain * x.cross(pull))
                    .collect()
            }
            ProtocolKind::MinTimePair => unreachable!("min-time pair is stepped separately"),
        }
    }
}

/// `(I − x_i x_iᵀ) Σ_j w_ij x_j` for every node.
fn geometry_field(xs: &[Vector3<f64>], topology: &Topology, weight: &WeightFn) -> Vec<Vector3<f64>> {
    (0..xs.len())
        .map(|i| {
            let x = &xs[i];
            tangent_pull(
                x,
                topology
                    .neighbors_unchecked(i)
                    .map(|(j, a)| (xs[j], weight.weight(a, x, &xs[j]))),
            )
        })
        .collect()
}

fn flow(kets: &[Ket], h: f64, axes: &[Vector3<f64>]) -> Vec<Ket> {
    kets.iter().zip(axes).map(|(k, a)| propagate(k, a, h)).collect()
}

fn combine(terms: &[(f64, &[Vector3<f64>])]) -> Vec<Vector3<f64>> {
    let n = terms[0].1.len();
    (0..n)
        .map(|i| terms.iter().fold(Vector3::zeros(), |acc, (c, f)| acc + *c * f[i]))
        .collect()
}

fn advance(kets: &[Ket], h: f64, scheme: Scheme, eval: impl Fn(&[Ket]) -> Vec<Vector3<f64>>) -> Vec<Ket> {
    match scheme {
        Scheme::LieEuler => flow(kets, h, &eval(kets)),
        Scheme::CommutatorFree4 => {
            let f1 = eval(kets);
            let y2 = flow(kets, 0.5 * h, &f1);
            let f2 = eval(&y2);
            let y3 = flow(kets, 0.5 * h, &f2);
            let f3 = eval(&y3);
            let y4 = flow(&y2, h, &combine(&[(-0.5, &f1), (1.0, &f3)]));
            let f4 = eval(&y4);
            let (a, b, c) = (0.25, 1.0 / 6.0, -1.0 / 12.0);
            let first = combine(&[(a, &f1), (b, &f2), (b, &f3), (c, &f4)]);
            let second = combine(&[(c, &f1), (b, &f2), (b, &f3), (a, &f4)]);
            flow(&flow(kets, h, &first), h, &second)
        }
    }
}

/// Min-time pair step: `±a n̂` with `‖a‖ = min(½, θ/(4h))`, so the pair
/// closes at unit rate per qubit and lands on the midpoint without overshoot.
fn min_time_step(kets: &[Ket], h: f64) -> Result<Vec<Ket>> {
    let (si, sj) = (kets[0].bloch(), kets[1].bloch());
    let theta = si.angle_to(&sj);
    if theta <= 1e-14 {
        return Ok(kets.to_vec());
    }
    let axis = crate::protocols::two_qubit_axis(&si, &sj).or_else(|e| match e {
        Error::ParallelStates => Ok(Vector3::zeros()),
        other => Err(other),
    })?;
    let scale = 0.5_f64.min(theta / (4.0 * h));
    let a = scale * axis;
    Ok(vec![propagate(&kets[0], &a, h), propagate(&kets[1], &-a, h)])
}

/// Returns some `c` with `c·x_i > 0` for every `x_i`, if one is found.
pub fn open_hemisphere_center(xs: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    let mean: Vector3<f64> = xs.iter().sum();
    let mut c = if mean.norm() > 0.0 { mean } else { xs[0] };
    for _ in 0..10_000 {
        match xs.iter().find(|x| c.dot(x) <= 1e-12 * c.norm()) {
            None => return Some(c.normalize()),
            Some(x) => c += x,
        }
    }
    None
}

struct Recorder {
    chain: bool,
    composite: bool,
}

impl Recorder {
    fn values(&self, kets: &[Ket]) -> Result<Vec<(&'static str, f64)>> {
        let mut out = vec![(Metric::PureStateError.name(), pure_state_error(kets))];
        if self.chain {
            out.push((Metric::V.name(), lyapunov_v_unchecked(kets)));
        }
        if self.composite {
            out.push((Metric::CompositeDistance.name(), product_consensus_distance(kets)?));
        }
        Ok(out)
    }
}

fn stop_reached(stop: &Option<SettlingSpec>, values: &[(&str, f64)]) -> bool {
    stop.is_some_and(|s| {
        values
            .iter()
            .any(|(name, v)| *name == s.metric.name() && *v < s.threshold)
    })
}

fn check_stop_metric(stop: &Option<SettlingSpec>, available: &[Metric]) -> Result<()> {
    match stop {
        Some(s) if !available.contains(&s.metric) => Err(Error::MissingSeries(s.metric.name().into())),
        _ => Ok(()),
    }
}

pub fn simulate_network(
    initial: &NetworkState,
    topology: &Topology,
    protocol: &Protocol,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<NetworkState>> {
    run_network(initial, topology, protocol, cfg, None)
}

/// Like [`simulate_network`], but each node evaluates its control law in its
/// own fixed frame and the result is mapped back to world coordinates.
pub fn simulate_network_in_frames(
    initial: &NetworkState,
    topology: &Topology,
    protocol: &Protocol,
    cfg: &IntegratorConfig,
    frames: &[Unitary2],
) -> Result<Trajectory<NetworkState>> {
    if frames.len() != topology.n() {
        return Err(Error::StateCount {
            expected: topology.n(),
            got: frames.len(),
        });
    }
    run_network(initial, topology, protocol, cfg, Some(&Frames::new(frames)))
}

fn run_network(
    initial: &NetworkState,
    topology: &Topology,
    protocol: &Protocol,
    cfg: &IntegratorConfig,
    frames: Option<&Frames>,
) -> Result<Trajectory<NetworkState>> {
    cfg.validate()?;
    if initial.len() != topology.n() {
        return Err(Error::StateCount {
            expected: topology.n(),
            got: initial.len(),
        });
    }
    NetworkState::new(initial.kets.clone())?;
    protocol.check_topology(topology)?;
    if matches!(protocol.kind, ProtocolKind::MinTimePair) && frames.is_some() {
        return Err(Error::InvalidConfig("min-time pair runs in the world frame only".into()));
    }

    let recorder = Recorder {
        chain: topology.is_chain(),
        composite: cfg.record_composite
            || cfg.stop.is_some_and(|s| s.metric == Metric::CompositeDistance),
    };
    let mut available = vec![Metric::PureStateError];
    if recorder.chain {
        available.push(Metric::V);
    }
    if recorder.composite {
        if topology.n() > crate::metrics::AVERAGE_MAX_QUBITS {
            return Err(Error::TooManyQubits {
                n: topology.n(),
                max: crate::metrics::AVERAGE_MAX_QUBITS,
            });
        }
        available.push(Metric::CompositeDistance);
    }
    check_stop_metric(&cfg.stop, &available)?;

    let mut traj = Trajectory::default();
    let mut kets = initial.kets.clone();
    let x0: Vec<_> = kets.iter().map(|k| k.bloch().vector()).collect();
    match protocol.kind {
        ProtocolKind::Geometry(_) if open_hemisphere_center(&x0).is_none() => {
            traj.warnings.push(
                "initial Bloch vectors are not contained in an open hemisphere; convergence is not guaranteed"
                    .into(),
            );
        }
        ProtocolKind::MinTimePair => {
            let (si, sj) = (kets[0].bloch(), kets[1].bloch());
            if let Err(Error::AntipodalStates) = crate::protocols::two_qubit_axis(&si, &sj) {
                return Err(Error::AntipodalStates);
            }
        }
        _ => {}
    }

    let rhs = NetworkRhs {
        protocol,
        topology,
        frames,
    };
    let record = |traj: &mut Trajectory<NetworkState>, kets: &[Ket], t: f64| -> Result<bool> {
        let values = recorder.values(kets)?;
        traj.push(
            t,
            NetworkState {
                kets: kets.to_vec(),
                time: t,
            },
            &values,
        );
        Ok(stop_reached(&cfg.stop, &values))
    };

    let t0 = initial.time;
    if record(&mut traj, &kets, t0)? {
        return Ok(traj);
    }
    let steps = cfg.steps();
    for k in 1..=steps {
        kets = match protocol.kind {
            ProtocolKind::MinTimePair => min_time_step(&kets, cfg.dt)?,
            _ => advance(&kets, cfg.dt, cfg.scheme, |y| rhs.axes(y)),
        };
        if k % cfg.sample_every == 0 || k == steps {
            let t = t0 + k as f64 * cfg.dt;
            if record(&mut traj, &kets, t)? {
                break;
            }
        }
    }
    Ok(traj)
}

/// Classical consensus on the 2-sphere, `ẋ_i = gain · (I − x_i x_iᵀ) Σ w_ij x_j`,
/// integrated with RK4 and renormalized after every step.
pub fn simulate_sphere(
    x0: &[Vector3<f64>],
    topology: &Topology,
    weight: &WeightFn,
    gain: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<Vec<Vector3<f64>>>> {
    cfg.validate()?;
    if x0.len() != topology.n() {
        return Err(Error::StateCount {
            expected: topology.n(),
            got: x0.len(),
        });
    }
    for x in x0 {
        if (x.norm() - 1.0).abs() > COMPOSED_TOL {
            return Err(Error::NotUnit(x.norm()));
        }
    }
    check_stop_metric(&cfg.stop, &[Metric::PureStateError])?;

    let field = |xs: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        geometry_field(xs, topology, weight)
            .into_iter()
            .map(|v| gain * v)
            .collect()
    };
    let shift = |xs: &[Vector3<f64>], k: &[Vector3<f64>], h: f64| -> Vec<Vector3<f64>> {
        xs.iter().zip(k).map(|(x, v)| x + h * v).collect()
    };

    let mut traj = Trajectory::default();
    let mut xs: Vec<_> = x0.iter().map(|x| x.normalize()).collect();
    let record = |traj: &mut Trajectory<Vec<Vector3<f64>>>, xs: &[Vector3<f64>], t: f64| -> bool {
        let err = pure_state_error_bloch(xs);
        traj.push(t, xs.to_vec(), &[(Metric::PureStateError.name(), err)]);
        stop_reached(&cfg.stop, &[(Metric::PureStateError.name(), err)])
    };
    if record(&mut traj, &xs, 0.0) {
        return Ok(traj);
    }
    let h = cfg.dt;
    let steps = cfg.steps();
    for step in 1..=steps {
        let k1 = field(&xs);
        let k2 = field(&shift(&xs, &k1, 0.5 * h));
        let k3 = field(&shift(&xs, &k2, 0.5 * h));
        let k4 = field(&shift(&xs, &k3, h));
        for i in 0..xs.len() {
            let inc = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            xs[i] = (xs[i] + inc).normalize();
        }
        if (step % cfg.sample_every == 0 || step == steps) && record(&mut traj, &xs, step as f64 * h) {
            break;
        }
    }
    Ok(traj)
}

/// Largest pairwise Bloch angle.
pub fn max_pairwise_angle(xs: &[Vector3<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            worst = worst.max(vector_angle(&xs[i], &xs[j]));
        }
    }
    worst
}

/// Earliest time the largest pairwise Bloch angle drops below `angle_tol`,
/// linearly interpolated between samples.
pub fn meeting_time(traj: &Trajectory<NetworkState>, angle_tol: f64) -> Option<f64> {
    let angles: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| max_pairwise_angle(&s.blochs()))
        .collect();
    meeting_time_from(&traj.times, &angles, angle_tol)
}

pub fn meeting_time_from(times: &[f64], angles: &[f64], angle_tol: f64) -> Option<f64> {
    let k = angles.iter().position(|a| *a < angle_tol)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (a0, a1) = (angles[k - 1], angles[k]);
    let frac = (a0 - angle_tol) / (a0 - a1);
    Some(times[k - 1] + frac * (times[k] - times[k - 1]))
}

/// Full-network QCME evolution with RK4. Samples are `‖ρ − ρ̄‖₂`.
pub fn simulate_qcme(
    rho0: &DMatrix<C64>,
    topology: &Topology,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<f64>> {
    cfg.validate()?;
    let n = qubit_count(rho0)?;
    if n != topology.n() {
        return Err(Error::StateCount {
            expected: topology.n(),
            got: n,
        });
    }
    let generator = QcmeGenerator::new(topology)?;
    check_joint_density(rho0, 1e-9)?;
    check_stop_metric(&cfg.stop, &[Metric::CompositeDistance])?;
    let rho_bar = quantum_average(rho0)?;

    let mut traj = Trajectory::default();
    let mut rho = rho0.clone();
    let record = |traj: &mut Trajectory<f64>, rho: &DMatrix<C64>, t: f64| -> Result<bool> {
        let min_eig = SymmetricEigen::new(hermitian_part(rho)).eigenvalues.min();
        if min_eig < -1e-6 {
            return Err(Error::PositivityLost {
                min_eigenvalue: min_eig,
                time: t,
                dt: cfg.dt,
            });
        }
        let d = composite_distance(rho, &rho_bar)?;
        let values = [
            (Metric::CompositeDistance.name(), d),
            ("trace_error", (rho.trace() - C64::new(1.0, 0.0)).norm()),
            ("hermiticity_error", (rho - rho.adjoint()).max_entry()),
        ];
        traj.push(t, d, &values);
        Ok(stop_reached(&cfg.stop, &values))
    };
    if record(&mut traj, &rho, 0.0)? {
        return Ok(traj);
    }
    let h = C64::new(cfg.dt, 0.0);
    let half = C64::new(0.5, 0.0);
    let steps = cfg.steps();
    for step in 1..=steps {
        let k1 = generator.apply(&rho)?;
        let k2 = generator.apply(&(&rho + &k1 * (h * half)))?;
        let k3 = generator.apply(&(&rho + &k2 * (h * half)))?;
        let k4 = generator.apply(&(&rho + &k3 * h))?;
        rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (h / C64::new(6.0, 0.0));
        if (step % cfg.sample_every == 0 || step == steps) && record(&mut traj, &rho, step as f64 * cfg.dt)? {
            break;
        }
    }
    Ok(traj)
}

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn check_joint_density(rho: &DMatrix<C64>, tol: f64) -> Result<()> {
    let herm = (rho - rho.adjoint()).max_entry();
    if herm > tol {
        return Err(Error::NotHermitian(herm));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(Error::InvalidTrace(tr.re));
    }
    let min_eig = SymmetricEigen::new(hermitian_part(rho)).eigenvalues.min();
    if min_eig < -tol {
        return Err(Error::NotPositive(min_eig));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tensor_product;
    use crate::quantum::BlochVector;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn kets(angles: &[(f64, f64)]) -> NetworkState {
        NetworkState::new(angles.iter().map(|&(t, p)| Ket::from_angles(t, p).unwrap()).collect()).unwrap()
    }

    #[test]
    fn step_ket_examples() {
        let psi = Ket::from_angles(0.7, 1.9).unwrap();
        assert_eq!(step_ket(&psi, &AxisHamiltonian::zero(), 0.3), psi);

        let out = step_ket(&Ket::zero(), &AxisHamiltonian::new(Vector3::z()), FRAC_PI_2);
        assert!((out.a0() - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((out.bloch().vector() - Vector3::z()).amax() < 1e-15);

        let out = step_ket(&Ket::zero(), &AxisHamiltonian::new(Vector3::x()), FRAC_PI_4);
        let r = Unitary2::from_axis_angle(&Vector3::x(), FRAC_PI_2).unwrap().rotation();
        assert!((out.bloch().vector() - r.apply(&Vector3::z())).amax() < 1e-15);
        assert!((out.bloch().vector() - Vector3::new(0.0, -1.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig::default().with_dt(0.0).validate().is_err());
        assert!(IntegratorConfig::default().with_t_max(1e-4).validate().is_err());
        assert!(IntegratorConfig::default().with_sample_every(0).validate().is_err());
        assert_eq!(IntegratorConfig::default().with_t_max(1.0).steps(), 1000);
    }

    #[test]
    fn equal_states_stay_put() {
        let init = kets(&[(0.8, 1.0); 4]);
        let cfg = IntegratorConfig::default().with_t_max(1.0);
        for (topo, proto) in [
            (Topology::chain(4).unwrap(), Protocol::chain()),
            (Topology::complete(4).unwrap(), Protocol::geometry()),
        ] {
            let traj = simulate_network(&init, &topo, &proto, &cfg).unwrap();
            for s in &traj.samples {
                assert_eq!(s.kets, init.kets);
            }
        }
    }

    #[test]
    fn incompatible_topology_rejected() {
        let init = kets(&[(0.1, 0.0), (0.2, 0.0), (0.3, 0.0), (0.4, 0.0)]);
        let cfg = IntegratorConfig::default().with_t_max(0.1);
        let grid = Topology::grid(2).unwrap();
        assert!(matches!(
            simulate_network(&init, &grid, &Protocol::chain(), &cfg),
            Err(Error::NotChain)
        ));
        let split = Topology::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(
            simulate_network(&init, &split, &Protocol::geometry(), &cfg),
            Err(Error::Disconnected)
        ));
        let cfg_v = cfg.clone().with_stop(Metric::V, 1e-2);
        assert!(matches!(
            simulate_network(&init, &grid, &Protocol::geometry(), &cfg_v),
            Err(Error::MissingSeries(_))
        ));
    }

    #[test]
    fn stop_rule_ends_run_early() {
        let init = kets(&[(0.3, 0.1), (0.6, 0.4), (0.9, 0.2)]);
        let cfg = IntegratorConfig::default().with_stop(Metric::V, 1e-2);
        let traj = simulate_network(&init, &Topology::chain(3).unwrap(), &Protocol::chain(), &cfg).unwrap();
        let v = traj.metric(Metric::V).unwrap();
        assert!(*v.last().unwrap() < 1e-2);
        assert!(v[..v.len() - 1].iter().all(|x| *x >= 1e-2));
        assert!(*traj.times.last().unwrap() < 50.0);
    }

    #[test]
    fn cf4_is_fourth_order() {
        let init = kets(&[(0.4, 0.2), (1.3, 2.0), (2.0, 4.5)]);
        let topo = Topology::chain(3).unwrap();
        let run = |dt: f64, scheme| {
            let cfg = IntegratorConfig::default()
                .with_dt(dt)
                .with_t_max(1.0)
                .with_sample_every(usize::MAX / 4)
                .with_scheme(scheme);
            simulate_network(&init, &topo, &Protocol::chain(), &cfg).unwrap().samples.last().unwrap().kets.clone()
        };
        let reference = run(1e-4, Scheme::CommutatorFree4);
        let err = |ks: &[Ket]| {
            ks.iter()
                .zip(&reference)
                .map(|(a, b)| (a.vector() - b.vector()).norm())
                .fold(0.0, f64::max)
        };
        let e1 = err(&run(0.04, Scheme::CommutatorFree4));
        let e2 = err(&run(0.02, Scheme::CommutatorFree4));
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");

        let l1 = err(&run(0.02, Scheme::LieEuler));
        let l2 = err(&run(0.01, Scheme::LieEuler));
        let ratio = l1 / l2;
        assert!(ratio > 1.7 && ratio < 2.3, "ratio {ratio}");
    }

    #[test]
    fn min_time_pair_meets_at_quarter_pi() {
        let x = BlochVector::unit(Vector3::x()).unwrap();
        let y = BlochVector::unit(Vector3::y()).unwrap();
        let init = NetworkState::new(vec![Ket::from_bloch(&x).unwrap(), Ket::from_bloch(&y).unwrap()]).unwrap();
        let cfg = IntegratorConfig::default().with_dt(1e-4).with_t_max(1.0).with_sample_every(1);
        let traj = simulate_network(&init, &Topology::chain(2).unwrap(), &Protocol::min_time_pair(), &cfg).unwrap();
        let t = meeting_time(&traj, 1e-6).unwrap();
        assert!((t - FRAC_PI_4).abs() < 1e-3, "{t}");
        let midpoint = (Vector3::x() + Vector3::y()).normalize();
        let last = traj.samples.last().unwrap().blochs();
        assert!((last[0] - midpoint).amax() < 1e-9);
    }

    #[test]
    fn meeting_time_edge_cases() {
        let init = kets(&[(1.0, 1.0), (1.0, 1.0)]);
        let cfg = IntegratorConfig::default().with_t_max(0.1);
        let traj = simulate_network(&init, &Topology::chain(2).unwrap(), &Protocol::min_time_pair(), &cfg).unwrap();
        assert_eq!(meeting_time(&traj, 1e-6), Some(0.0));

        let antipodal = kets(&[(0.0, 0.0), (PI, 0.0)]);
        let edge = Topology::chain(2).unwrap();
        let traj = simulate_network(&antipodal, &edge, &Protocol::geometry(), &cfg).unwrap();
        assert_eq!(meeting_time(&traj, 1e-6), None);
        assert!(matches!(
            simulate_network(&antipodal, &edge, &Protocol::min_time_pair(), &cfg),
            Err(Error::AntipodalStates)
        ));
        assert_eq!(meeting_time_from(&[0.0, 1.0], &[1.0, 0.0], 0.5), Some(0.5));
    }

    #[test]
    fn sphere_examples() {
        let topo = Topology::chain(2).unwrap();
        let cfg = IntegratorConfig::default().with_t_max(1.0);
        let same = [Vector3::z(), Vector3::z()];
        let traj = simulate_sphere(&same, &topo, &WeightFn::constant(), 1.0, &cfg).unwrap();
        assert!(traj.samples.iter().all(|s| s[..] == same[..]));
        let opposite = [Vector3::z(), -Vector3::z()];
        let traj = simulate_sphere(&opposite, &topo, &WeightFn::constant(), 1.0, &cfg).unwrap();
        assert!(traj.samples.iter().all(|s| s[..] == opposite[..]));
        assert!(simulate_sphere(&[Vector3::z(), 2.0 * Vector3::z()], &topo, &WeightFn::constant(), 1.0, &cfg).is_err());
    }

    #[test]
    fn hemisphere_center() {
        let xs = [Vector3::x(), Vector3::y(), Vector3::z()];
        let c = open_hemisphere_center(&xs).unwrap();
        assert!(xs.iter().all(|x| c.dot(x) > 0.0));
        let xs = [Vector3::x(), -Vector3::x(), Vector3::y()];
        assert!(open_hemisphere_center(&xs).is_none());
    }

    #[test]
    fn qcme_symmetric_state_is_fixed() {
        let psi = Ket::from_angles(0.5, 0.2).unwrap().density();
        let rho = tensor_product(&[psi, psi, psi]);
        let cfg = IntegratorConfig::default().with_t_max(0.5);
        let traj = simulate_qcme(&rho, &Topology::chain(3).unwrap(), &cfg).unwrap();
        assert!(traj.samples.iter().all(|d| *d < 1e-14));
    }

    #[test]
    fn qcme_rejects_invalid_input() {
        let cfg = IntegratorConfig::default().with_t_max(0.1);
        let bad = DMatrix::from_element(4, 4, C64::new(0.5, 0.0));
        assert!(simulate_qcme(&bad, &Topology::chain(2).unwrap(), &cfg).is_err());
        let psi = Ket::zero().density();
        let rho = tensor_product(&[psi, psi]);
        assert!(matches!(
            simulate_qcme(&rho, &Topology::chain(3).unwrap(), &cfg),
            Err(Error::StateCount { .. })
        ));
    }

    #[test]
    fn csv_has_expected_columns() {
        let init = kets(&[(0.3, 0.1), (0.6, 0.4)]);
        let cfg = IntegratorConfig::default().with_t_max(0.05);
        let traj = simulate_network(&init, &Topology::chain(2).unwrap(), &Protocol::chain(), &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "time,q1_x,q1_y,q1_z,q2_x,q2_y,q2_z,pure_state_error,v");
        assert_eq!(text.lines().count(), traj.len() + 1);
    }
}
