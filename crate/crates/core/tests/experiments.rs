use std::fs;
use std::path::Path;

use qconsensus::dynamics::IntegratorConfig;
use qconsensus::experiments::config::{InitialStates, TopologySpec};
use qconsensus::experiments::runners::{
    min_time_heatmap, network_run, qcme_compare, scaling_sweep, sweep_seed, Family, QCME_SERIES,
};
use qconsensus::experiments::{run, ExperimentConfig, ExperimentKind, Manifest};
use qconsensus::Error;
use serde_json::Value;

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.heatmap.resolution = 8;
    cfg.sweep.chain_sizes = vec![3, 4];
    cfg.sweep.grid_sides = vec![2];
    cfg.sweep.seeds = 3;
    cfg.qcme.seeds = 2;
    cfg.twin.seeds = 2;
    cfg.coherence.trajectories = 4;
    cfg.coherence.sme.t_max = 0.05;
    cfg.coherence.compare_at = 0.05;
    if kind != ExperimentKind::CoherenceProtect {
        cfg.integrator = Some(cfg.integrator().with_t_max(5.0));
    }
    cfg
}

#[test]
fn every_experiment_writes_summary_and_manifest() {
    for kind in ExperimentKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(kind);
        let report = run(&cfg, dir.path()).unwrap();
        assert!(dir.path().join("summary.json").exists(), "{kind}");
        let manifest: Manifest = serde_json::from_value(read_json(&dir.path().join("manifest.json"))).unwrap();
        assert_eq!(manifest.experiment, kind.name());
        assert_eq!(manifest.seed, cfg.seed);
        assert!(!manifest.topology_hashes.is_empty() || kind == ExperimentKind::CoherenceProtect);
        assert_eq!(manifest.config, cfg);
        for f in &report.files {
            assert!(f.exists(), "{}", f.display());
        }
        assert!(manifest.files.iter().any(|f| f.ends_with(".csv")), "{kind}");
    }
}

#[test]
fn manifest_reproduces_outputs_byte_for_byte() {
    for kind in [ExperimentKind::GridRun, ExperimentKind::QcmeCompare, ExperimentKind::CoherenceProtect] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let report = run(&small(kind), a.path()).unwrap();
        let manifest: Manifest = serde_json::from_value(read_json(&a.path().join("manifest.json"))).unwrap();
        run(&manifest.config, b.path()).unwrap();
        for f in &report.files {
            let name = f.file_name().unwrap();
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{kind}: {name:?}");
        }
    }
}

#[test]
fn parallel_and_sequential_sweeps_agree() {
    let mut cfg = small(ExperimentKind::ScalingSweep);
    let par = scaling_sweep(&cfg).unwrap();
    cfg.parallel = false;
    assert_eq!(par, scaling_sweep(&cfg).unwrap());

    let mut cfg = small(ExperimentKind::MinTimeHeatmap);
    let par = min_time_heatmap(&cfg).unwrap();
    cfg.parallel = false;
    assert_eq!(par, min_time_heatmap(&cfg).unwrap());
}

#[test]
fn sweep_seeds_do_not_depend_on_layout() {
    let mut a = small(ExperimentKind::ScalingSweep);
    a.sweep.chain_sizes = vec![3];
    a.sweep.grid_sides = vec![];
    let mut b = a.clone();
    b.sweep.chain_sizes = vec![3, 5];
    let (ra, rb) = (scaling_sweep(&a).unwrap(), scaling_sweep(&b).unwrap());
    assert_eq!(ra[0], rb[0]);
    assert_ne!(sweep_seed(1, Family::Chain, 3, 0), sweep_seed(1, Family::Grid, 3, 0));
}

#[test]
fn heatmap_gap_is_positive_and_shrinks_away_from_the_pole() {
    let cells = min_time_heatmap(&small(ExperimentKind::MinTimeHeatmap)).unwrap();
    assert_eq!(cells.len(), 64);
    for c in &cells {
        assert!(c.gap().unwrap() > 0.0);
    }
    let row_mean = |row: usize| {
        let gaps: Vec<f64> = cells.iter().filter(|c| c.row == row).map(|c| c.gap().unwrap()).collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    assert!(row_mean(7) < row_mean(0));
}

#[test]
fn heatmap_control_cell_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&small(ExperimentKind::MinTimeHeatmap), dir.path()).unwrap();
    assert_eq!(report.summary["control_cell"]["t1"], 0.0);
    assert_eq!(report.summary["control_cell"]["t_min"], 0.0);
}

#[test]
fn network_runs_reach_consensus() {
    let chain = network_run(&ExperimentConfig::new(ExperimentKind::ChainRun)).unwrap();
    assert!(chain.settling_time.is_some());
    assert!(*chain.trajectory.metric(qconsensus::metrics::Metric::PureStateError).unwrap().last().unwrap() < 1e-2);
    let grid = network_run(&ExperimentConfig::new(ExperimentKind::GridRun)).unwrap();
    assert!(grid.initial.iter().all(|x| x.z > 0.0));
    assert!(grid.settling_time.is_some());

    let mut equal = ExperimentConfig::new(ExperimentKind::GridRun);
    equal.network.initial = Some(InitialStates::Equal);
    assert_eq!(network_run(&equal).unwrap().settling_time, Some(0.0));
}

#[test]
fn custom_disconnected_topology_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    fs::write(&edges, "# two islands\n1 2\n3 4 2.0\n").unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::GridRun);
    cfg.topology = Some(TopologySpec::EdgeList { path: edges });
    assert!(matches!(network_run(&cfg), Err(Error::Disconnected)));
}

#[test]
fn qcme_series_decrease_toward_zero() {
    let mut cfg = small(ExperimentKind::QcmeCompare);
    cfg.integrator = Some(IntegratorConfig::default().with_t_max(15.0));
    let cmp = qcme_compare(&cfg).unwrap();
    assert_eq!(cmp.example_series.len(), QCME_SERIES.len());
    for s in &cmp.example_series {
        assert!(s.last().unwrap() < &(0.05 * s[0]));
    }
}
