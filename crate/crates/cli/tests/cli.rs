use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qconsensus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qconsensus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn chain_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qconsensus(&["chain-run", "--seed", "1", "--t-max", "20", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["experiment"], "chain-run");
    assert!(v["summary"]["settling_time"].is_f64());
    for f in ["trajectory.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("time,q1_x,q1_y,q1_z"));
    assert!(header.contains("pure_state_error") && header.contains(",v"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "experiment = \"grid-run\"\nseed = 5\n[topology]\nkind = \"grid\"\nside = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = qconsensus(&[
        "grid-run",
        "--config",
        path(&cfg),
        "--seed",
        "6",
        "--dt",
        "0.002",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 6);
    assert_eq!(manifest["config"]["integrator"]["dt"], 0.002);
    assert_eq!(manifest["config"]["topology"]["side"], 2);
    assert_eq!(stdout_json(&out)["summary"]["qubits"], 4);
}

#[test]
fn edge_list_topology_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("ring.txt");
    fs::write(&edges, "# ring of four\n1 2\n2 3\n3 4\n4 1 0.5\n").unwrap();
    let out = qconsensus(&[
        "grid-run",
        "--topology-file",
        path(&edges),
        "--t-max",
        "10",
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["summary"]["qubits"], 4);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = qconsensus(&["coherence-protect", "--trajectories", "4", "--t-max", "0.05", "--out", path(d)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["coherence_feedback.csv", "coherence_free.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn disconnected_topology_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("split.txt");
    fs::write(&edges, "1 2\n3 4\n").unwrap();
    let out = qconsensus(&["grid-run", "--topology-file", path(&edges), "--out", path(dir.path())]);
    assert!(!out.status.success());
    let e = stderr_json(&out);
    assert_eq!(e["error"], "disconnected");
    assert!(e["message"].as_str().unwrap().contains("not connected"));
}

#[test]
fn invalid_inputs_report_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 5] = [
        (&["teleport"], "usage"),
        (&["chain-run", "--seed", "abc"], "usage"),
        (&["chain-run", "--dt=-1", "--out", path(dir.path())], "invalid_config"),
        (&["min-time-heatmap", "--resolution", "4", "--out", path(dir.path())], "config"),
        (&["chain-run", "--topology-file", "/nonexistent/edges.txt", "--out", path(dir.path())], "io"),
    ];
    for (args, kind) in cases {
        let out = qconsensus(args);
        assert!(!out.status.success(), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], kind, "{args:?}");
    }
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "experiment = \"grid-run\"\n").unwrap();
    let out = qconsensus(&["chain-run", "--config", path(&cfg)]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn help_succeeds() {
    let out = qconsensus(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "min-time-heatmap",
        "chain-run",
        "grid-run",
        "scaling-sweep",
        "qcme-compare",
        "coherence-protect",
        "sphere-twin-check",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
