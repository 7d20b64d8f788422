use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::decoherence::{run_ensemble, EnsembleSummary, SmeConfig};
use crate::dynamics::{simulate_network, simulate_qcme, simulate_sphere, IntegratorConfig, NetworkState, Trajectory};
use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, ExperimentKind, InitialStates, ProtocolName};
use crate::experiments::output::{opt, OutputDir};
use crate::experiments::sampling::{bloch_vectors, cell_rng, kets_from_blochs};
use crate::graph::Topology;
use crate::metrics::{tensor_product, Metric, SettlingSpec};
use crate::protocols::{min_time, Protocol, WeightFn};
use crate::quantum::{BlochVector, DensityMatrix, Ket};
use crate::seed::derive_seed;

/// Files written and the summary object of one run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

fn map_cells<T: Send, F>(parallel: bool, n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Median with missing values ordered last (as +∞).
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let m = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    m.is_finite().then_some(m)
}

// ---------------------------------------------------------------- heatmap

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub row: usize,
    pub col: usize,
    pub theta: f64,
    pub delta_phi: f64,
    pub t1: Option<f64>,
    pub t_min: f64,
}

impl HeatmapCell {
    pub fn gap(&self) -> Option<f64> {
        self.t1.map(|t| t - self.t_min)
    }
}

/// Two-qubit chain run from `(θ, π/4 ∓ Δφ/2)`.
pub fn heatmap_cell(theta: f64, delta_phi: f64, threshold: f64, integ: &IntegratorConfig) -> Result<(Option<f64>, f64)> {
    let (phi1, phi2) = (FRAC_PI_4 - 0.5 * delta_phi, FRAC_PI_4 + 0.5 * delta_phi);
    let kets = vec![Ket::from_angles(theta, phi1)?, Ket::from_angles(theta, phi2)?];
    let t_min = min_time(&kets[0].bloch(), &kets[1].bloch());
    let cfg = integ.clone().with_stop(Metric::V, threshold);
    let traj = simulate_network(&NetworkState::new(kets)?, &Topology::chain(2)?, &Protocol::chain(), &cfg)?;
    let t1 = traj.settling_time(&SettlingSpec::new(Metric::V, threshold)?)?;
    Ok((t1, t_min))
}

/// Cell centers of `θ ∈ (0, π/4)` × `Δφ ∈ (0, π/2)`.
pub fn min_time_heatmap(cfg: &ExperimentConfig) -> Result<Vec<HeatmapCell>> {
    let r = cfg.heatmap.resolution;
    let integ = cfg.integrator();
    map_cells(cfg.parallel, r * r, |idx| {
        let (row, col) = (idx / r, idx % r);
        let theta = (row as f64 + 0.5) / r as f64 * FRAC_PI_4;
        let delta_phi = (col as f64 + 0.5) / r as f64 * FRAC_PI_2;
        let (t1, t_min) = heatmap_cell(theta, delta_phi, cfg.heatmap.threshold, &integ)?;
        Ok(HeatmapCell {
            row,
            col,
            theta,
            delta_phi,
            t1,
            t_min,
        })
    })
}

fn write_heatmap(cells: &[HeatmapCell], out: &mut OutputDir) -> Result<()> {
    let mut w = csv::Writer::from_writer(out.file("heatmap.csv")?);
    w.write_record(["row", "col", "theta", "delta_phi", "t1", "t_min", "gap"])?;
    for c in cells {
        w.write_record([
            c.row.to_string(),
            c.col.to_string(),
            c.theta.to_string(),
            c.delta_phi.to_string(),
            opt(c.t1),
            c.t_min.to_string(),
            opt(c.gap()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- network runs

#[derive(Clone, Debug)]
pub struct NetworkRun {
    pub topology: Topology,
    pub protocol: &'static str,
    pub initial: Vec<nalgebra::Vector3<f64>>,
    pub trajectory: Trajectory<NetworkState>,
    pub settling: SettlingSpec,
    pub settling_time: Option<f64>,
}

pub fn network_run(cfg: &ExperimentConfig) -> Result<NetworkRun> {
    let grid = cfg.experiment == ExperimentKind::GridRun;
    let topology = match &cfg.topology {
        Some(spec) => spec.build()?,
        None if grid => Topology::grid(3)?,
        None => Topology::chain(5)?,
    };
    let protocol = match &cfg.protocol {
        Some(p) => p.build(),
        None if grid => Protocol::geometry(),
        None => Protocol::chain(),
    };
    let init = cfg.network.initial.unwrap_or(if grid {
        InitialStates::Hemisphere
    } else {
        InitialStates::Sphere
    });
    let metric = match cfg.protocol.as_ref().map(|p| p.kind) {
        Some(ProtocolName::Chain) | None if !grid => Metric::V,
        _ => Metric::PureStateError,
    };
    let settling = SettlingSpec::new(metric, cfg.network.threshold)?;
    let initial = bloch_vectors(&mut cell_rng(cfg.seed, 0), topology.n(), init);
    let state = NetworkState::new(kets_from_blochs(&initial))?;
    let trajectory = simulate_network(&state, &topology, &protocol, &cfg.integrator())?;
    let settling_time = trajectory.settling_time(&settling)?;
    Ok(NetworkRun {
        topology,
        protocol: protocol.name(),
        initial,
        trajectory,
        settling,
        settling_time,
    })
}

// ---------------------------------------------------------------- scaling

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Chain,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub family: Family,
    pub qubits: usize,
    pub settling_times: Vec<Option<f64>>,
    pub median: Option<f64>,
}

/// Settling time of one sweep cell. Chains use the chain protocol from
/// sphere-uniform states and `V`; grids use the geometric protocol from
/// hemisphere states and the pure-state error.
pub fn scaling_cell(
    family: Family,
    size: usize,
    seed: u64,
    threshold: f64,
    integ: &IntegratorConfig,
) -> Result<Option<f64>> {
    let (topology, protocol, init, metric) = match family {
        Family::Chain => (Topology::chain(size)?, Protocol::chain(), InitialStates::Sphere, Metric::V),
        Family::Grid => (
            Topology::grid(size)?,
            Protocol::geometry(),
            InitialStates::Hemisphere,
            Metric::PureStateError,
        ),
    };
    let xs = bloch_vectors(&mut cell_rng(seed, 0), topology.n(), init);
    let cfg = integ.clone().with_stop(metric, threshold);
    let traj = simulate_network(&NetworkState::new(kets_from_blochs(&xs))?, &topology, &protocol, &cfg)?;
    traj.settling_time(&SettlingSpec::new(metric, threshold)?)
}

/// Seed of replicate `k` for a sweep point, independent of sweep layout.
pub fn sweep_seed(master: u64, family: Family, size: usize, k: usize) -> u64 {
    let point = derive_seed(master, (family as u64) << 32 | size as u64);
    derive_seed(point, k as u64)
}

pub fn scaling_sweep(cfg: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    let sweep = &cfg.sweep;
    let mut points: Vec<(Family, usize)> = sweep.chain_sizes.iter().map(|&n| (Family::Chain, n)).collect();
    for &side in &sweep.grid_sides {
        points.push((Family::Grid, side));
        if sweep.chain_at_grid_sizes && !sweep.chain_sizes.contains(&(side * side)) {
            points.push((Family::Chain, side * side));
        }
    }
    points.sort();
    points.dedup();
    let integ = cfg.integrator();
    let cells: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..sweep.seeds).map(move |k| (p, k))).collect();
    let times = map_cells(cfg.parallel, cells.len(), |c| {
        let (p, k) = cells[c];
        let (family, size) = points[p];
        scaling_cell(family, size, sweep_seed(cfg.seed, family, size, k), sweep.threshold, &integ)
    })?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(family, size))| {
            let settling_times = times[p * sweep.seeds..(p + 1) * sweep.seeds].to_vec();
            ScalingRow {
                family,
                qubits: if family == Family::Grid { size * size } else { size },
                median: median(&settling_times),
                settling_times,
            }
        })
        .collect())
}

/// Growth diagnostics of `log T` against `N` for the chain medians.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub sizes: Vec<usize>,
    pub medians: Vec<f64>,
    /// Chord slopes of `log T` between consecutive sizes.
    pub log_slopes: Vec<f64>,
    pub grows: bool,
    pub sub_exponential: bool,
}

/// Sub-exponential means the last chord slope of `log T(N)` is below the
/// first one; exponential growth keeps the slopes constant.
pub fn chain_growth(rows: &[ScalingRow], sizes: &[usize]) -> Option<GrowthCheck> {
    let mut medians = Vec::new();
    for &n in sizes {
        let row = rows.iter().find(|r| r.family == Family::Chain && r.qubits == n)?;
        medians.push(row.median?);
    }
    if sizes.len() < 3 {
        return None;
    }
    let log_slopes: Vec<f64> = (1..sizes.len())
        .map(|k| (medians[k].ln() - medians[k - 1].ln()) / (sizes[k] - sizes[k - 1]) as f64)
        .collect();
    Some(GrowthCheck {
        grows: medians.last()? > medians.first()?,
        sub_exponential: log_slopes.last()? < log_slopes.first()?,
        sizes: sizes.to_vec(),
        medians,
        log_slopes,
    })
}

// ---------------------------------------------------------------- QCME comparison

pub const QCME_SERIES: [&str; 5] = [
    "chain_protocol_chain_graph",
    "geometry_chain_graph",
    "qcme_chain_graph",
    "geometry_complete_graph",
    "qcme_complete_graph",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QcmeSeedResult {
    pub initial: Vec<[f64; 3]>,
    /// Settling times in the order of [`QCME_SERIES`].
    pub settling: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QcmeComparison {
    pub per_seed: Vec<QcmeSeedResult>,
    pub medians: Vec<Option<f64>>,
    pub times: Vec<f64>,
    /// `‖ρ − ρ̄‖₂` series of the first seed, in the order of [`QCME_SERIES`].
    pub example_series: Vec<Vec<f64>>,
}

/// Three-qubit comparison of both distributed protocols with QCME on the
/// chain and complete graphs, all from the same product state. Returns the
/// sample times and one `‖ρ − ρ̄‖₂` series per entry of [`QCME_SERIES`].
pub fn qcme_seed(xs: &[nalgebra::Vector3<f64>], integ: &IntegratorConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let chain = Topology::chain(3)?;
    let complete = Topology::complete(3)?;
    let kets = kets_from_blochs(xs);
    let state = NetworkState::new(kets.clone())?;
    let rho0 = tensor_product(&kets.iter().map(Ket::density).collect::<Vec<_>>());
    let cfg = integ.clone().with_composite();
    let distributed = |topo: &Topology, proto: Protocol| -> Result<Trajectory<NetworkState>> {
        simulate_network(&state, topo, &proto, &cfg)
    };
    let first = distributed(&chain, Protocol::chain())?;
    let series = vec![
        first.metric(Metric::CompositeDistance)?.to_vec(),
        distributed(&chain, Protocol::geometry())?.metric(Metric::CompositeDistance)?.to_vec(),
        simulate_qcme(&rho0, &chain, integ)?.samples,
        distributed(&complete, Protocol::geometry())?.metric(Metric::CompositeDistance)?.to_vec(),
        simulate_qcme(&rho0, &complete, integ)?.samples,
    ];
    Ok((first.times, series))
}

pub fn qcme_compare(cfg: &ExperimentConfig) -> Result<QcmeComparison> {
    let integ = IntegratorConfig {
        stop: None,
        ..cfg.integrator()
    };
    let threshold = cfg.qcme.threshold;
    let results = map_cells(cfg.parallel, cfg.qcme.seeds, |k| {
        let xs = bloch_vectors(&mut cell_rng(cfg.seed, k as u64), 3, InitialStates::Hemisphere);
        let (times, series) = qcme_seed(&xs, &integ)?;
        let settling = series
            .iter()
            .map(|s| crate::metrics::first_below(&times, s, threshold))
            .collect();
        Ok((
            QcmeSeedResult {
                initial: xs.iter().map(|v| [v.x, v.y, v.z]).collect(),
                settling,
            },
            times,
            series,
        ))
    })?;
    let medians = (0..QCME_SERIES.len())
        .map(|s| median(&results.iter().map(|(r, _, _)| r.settling[s]).collect::<Vec<_>>()))
        .collect();
    let mut results = results.into_iter();
    let (first, times, example_series) = results.next().ok_or_else(|| Error::Config("qcme seeds must be positive".into()))?;
    let mut per_seed = vec![first];
    per_seed.extend(results.map(|(r, _, _)| r));
    Ok(QcmeComparison {
        per_seed,
        medians,
        times,
        example_series,
    })
}

// ---------------------------------------------------------------- coherence protection

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherenceComparison {
    pub feedback: EnsembleSummary,
    pub free: EnsembleSummary,
    pub compare_at: f64,
    pub mean_feedback: f64,
    pub mean_free: f64,
    pub pooled_std_err: f64,
    /// `(mean_feedback − mean_free) / pooled_std_err`.
    pub separation: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
}

pub fn coherence_protect(cfg: &ExperimentConfig) -> Result<CoherenceComparison> {
    let c = &cfg.coherence;
    let (bi, bj) = c.initial()?;
    let rho_i = DensityMatrix::from_bloch(&BlochVector::from_vector(bi)?);
    let rho_j = DensityMatrix::from_bloch(&BlochVector::from_vector(bj)?);
    let with_fb = SmeConfig {
        feedback: true,
        ..c.sme.clone()
    };
    let (feedback, _) = run_ensemble(&rho_i, &rho_j, &c.noise, &with_fb, cfg.seed, c.trajectories)?;
    let (free, _) = run_ensemble(&rho_i, &rho_j, &c.noise, &with_fb.clone().without_feedback(), cfg.seed, c.trajectories)?;
    let k = feedback
        .index_at(c.compare_at)
        .ok_or_else(|| Error::Config(format!("compare_at {} lies beyond the horizon", c.compare_at)))?;
    let (mf, sf) = (feedback.coherence.mean[k], feedback.coherence.std_err[k]);
    let (m0, s0) = (free.coherence.mean[k], free.coherence.std_err[k]);
    let pooled = sf.hypot(s0);
    Ok(CoherenceComparison {
        compare_at: feedback.times[k],
        mean_feedback: mf,
        mean_free: m0,
        pooled_std_err: pooled,
        separation: (mf - m0) / pooled,
        initial_distance: feedback.distance.mean[0],
        final_distance: *feedback.distance.mean.last().unwrap_or(&f64::NAN),
        feedback,
        free,
    })
}

// ---------------------------------------------------------------- twin check

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwinResult {
    pub seed_index: usize,
    pub max_deviation: f64,
    pub samples: usize,
}

/// Largest pointwise gap between the Bloch image of the quantum geometric
/// protocol at gain `g` and the sphere flow at gain `2g`.
pub fn twin_deviation(
    xs: &[nalgebra::Vector3<f64>],
    topology: &Topology,
    gain: f64,
    integ: &IntegratorConfig,
) -> Result<(f64, usize)> {
    let integ = IntegratorConfig {
        stop: None,
        ..integ.clone()
    };
    let quantum = simulate_network(
        &NetworkState::new(kets_from_blochs(xs))?,
        topology,
        &Protocol::geometry().with_gain(gain),
        &integ,
    )?;
    let classical = simulate_sphere(xs, topology, &WeightFn::constant(), 2.0 * gain, &integ)?;
    let mut worst: f64 = 0.0;
    for (q, c) in quantum.samples.iter().zip(&classical.samples) {
        for (a, b) in q.blochs().iter().zip(c) {
            worst = worst.max((a - b).amax());
        }
    }
    Ok((worst, quantum.len()))
}

pub fn sphere_twin_check(cfg: &ExperimentConfig) -> Result<Vec<TwinResult>> {
    let topology = match &cfg.topology {
        Some(spec) => spec.build()?,
        None => Topology::grid(3)?,
    };
    let gain = cfg.protocol.as_ref().map_or(1.0, |p| p.gain);
    let integ = cfg.integrator();
    map_cells(cfg.parallel, cfg.twin.seeds, |k| {
        let xs = bloch_vectors(&mut cell_rng(cfg.seed, k as u64), topology.n(), InitialStates::Hemisphere);
        let (max_deviation, samples) = twin_deviation(&xs, &topology, gain, &integ)?;
        Ok(TwinResult {
            seed_index: k,
            max_deviation,
            samples,
        })
    })
}

// ---------------------------------------------------------------- dispatch

/// Runs the configured experiment and writes its outputs under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let mut out = OutputDir::create(out_dir)?;
    let mut hashes = BTreeMap::new();
    let summary = match cfg.experiment {
        ExperimentKind::MinTimeHeatmap => {
            let cells = min_time_heatmap(cfg)?;
            write_heatmap(&cells, &mut out)?;
            let (control_t1, control_tmin) = heatmap_cell(0.5, 0.0, cfg.heatmap.threshold, &cfg.integrator())?;
            hashes.insert("chain(2)".into(), Topology::chain(2)?.hash());
            let gaps: Vec<f64> = cells.iter().filter_map(HeatmapCell::gap).collect();
            json!({
                "cells": cells.len(),
                "unsettled_cells": cells.iter().filter(|c| c.t1.is_none()).count(),
                "min_gap": gaps.iter().copied().fold(f64::INFINITY, f64::min),
                "max_gap": gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "control_cell": { "t1": control_t1, "t_min": control_tmin },
            })
        }
        ExperimentKind::ChainRun | ExperimentKind::GridRun => {
            let run = network_run(cfg)?;
            run.trajectory.write_csv(out.file("trajectory.csv")?)?;
            hashes.insert("network".into(), run.topology.hash());
            let final_error = run.trajectory.metric(Metric::PureStateError)?.last().copied();
            json!({
                "qubits": run.topology.n(),
                "protocol": run.protocol,
                "settling_metric": run.settling.metric,
                "threshold": run.settling.threshold,
                "settling_time": run.settling_time,
                "final_pure_state_error": final_error,
                "warnings": run.trajectory.warnings,
            })
        }
        ExperimentKind::ScalingSweep => {
            let rows = scaling_sweep(cfg)?;
            let mut w = csv::Writer::from_writer(out.file("scaling.csv")?);
            w.write_record(["family", "qubits", "seed_index", "settling_time"])?;
            for row in &rows {
                let family = if row.family == Family::Chain { "chain" } else { "grid" };
                hashes.insert(
                    format!("{family}({})", row.qubits),
                    match row.family {
                        Family::Chain => Topology::chain(row.qubits)?.hash(),
                        Family::Grid => Topology::grid((row.qubits as f64).sqrt().round() as usize)?.hash(),
                    },
                );
                for (k, t) in row.settling_times.iter().enumerate() {
                    w.write_record([family.to_string(), row.qubits.to_string(), k.to_string(), opt(*t)])?;
                }
            }
            w.flush()?;
            let growth = chain_growth(&rows, &cfg.sweep.chain_sizes);
            json!({ "rows": rows, "chain_growth": growth })
        }
        ExperimentKind::QcmeCompare => {
            let cmp = qcme_compare(cfg)?;
            let mut w = csv::Writer::from_writer(out.file("qcme_series.csv")?);
            let mut header = vec!["time"];
            header.extend(QCME_SERIES);
            w.write_record(&header)?;
            for (k, t) in cmp.times.iter().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(cmp.example_series.iter().map(|s| s[k].to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_writer(out.file("qcme_settling.csv")?);
            let mut header = vec!["seed_index"];
            header.extend(QCME_SERIES);
            w.write_record(&header)?;
            for (k, r) in cmp.per_seed.iter().enumerate() {
                let mut row = vec![k.to_string()];
                row.extend(r.settling.iter().map(|t| opt(*t)));
                w.write_record(&row)?;
            }
            w.flush()?;
            hashes.insert("chain(3)".into(), Topology::chain(3)?.hash());
            hashes.insert("complete(3)".into(), Topology::complete(3)?.hash());
            let medians: BTreeMap<_, _> = QCME_SERIES.iter().zip(&cmp.medians).collect();
            json!({ "threshold": cfg.qcme.threshold, "seeds": cfg.qcme.seeds, "median_settling": medians })
        }
        ExperimentKind::CoherenceProtect => {
            let cmp = coherence_protect(cfg)?;
            cmp.feedback.write_csv(out.file("coherence_feedback.csv")?)?;
            cmp.free.write_csv(out.file("coherence_free.csv")?)?;
            json!({
                "trajectories": cfg.coherence.trajectories,
                "compare_at": cmp.compare_at,
                "mean_coherence_feedback": cmp.mean_feedback,
                "mean_coherence_free": cmp.mean_free,
                "pooled_std_err": cmp.pooled_std_err,
                "separation_in_std_err": cmp.separation,
                "initial_distance": cmp.initial_distance,
                "final_distance": cmp.final_distance,
            })
        }
        ExperimentKind::SphereTwinCheck => {
            let results = sphere_twin_check(cfg)?;
            let mut w = csv::Writer::from_writer(out.file("twin.csv")?);
            w.write_record(["seed_index", "max_deviation", "samples"])?;
            for r in &results {
                w.write_record([r.seed_index.to_string(), r.max_deviation.to_string(), r.samples.to_string()])?;
            }
            w.flush()?;
            let topology = match &cfg.topology {
                Some(spec) => spec.build()?,
                None => Topology::grid(3)?,
            };
            hashes.insert("network".into(), topology.hash());
            let worst = results.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            json!({ "seeds": results.len(), "max_deviation": worst })
        }
    };
    out.write_json("summary.json", &summary)?;
    let files = out.finish(cfg, hashes)?;
    Ok(RunReport { summary, files })
}
