use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qconsensus::experiments::config::{InitialStates, ProtocolName, ProtocolSpec, TopologySpec};
use qconsensus::experiments::{run, ExperimentConfig, ExperimentKind};
use qconsensus::{Error, Result};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "qconsensus", version, about = "Partial quantum consensus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon.
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate cells one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Clone)]
struct NetworkArgs {
    /// Chain length, or grid side for grid-run.
    #[arg(long)]
    size: Option<usize>,
    /// Edge-list file (`i j [weight]`, 1-based).
    #[arg(long, conflicts_with = "size")]
    topology_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Settling threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProtocolArg {
    Chain,
    Geometry,
    MinTimePair,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitArg {
    Sphere,
    Hemisphere,
    Equal,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-qubit settling time against the minimum time.
    MinTimeHeatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Chain network run (default chain of 5).
    ChainRun {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetworkArgs,
    },
    /// Connected network run (default 3×3 grid, geometric protocol).
    GridRun {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        net: NetworkArgs,
    },
    /// Settling time against network size.
    ScalingSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated chain lengths.
        #[arg(long, value_delimiter = ',')]
        chain_sizes: Option<Vec<usize>>,
        /// Comma-separated grid sides.
        #[arg(long, value_delimiter = ',')]
        grid_sides: Option<Vec<usize>>,
    },
    /// Distributed protocols against the QCME baseline on three qubits.
    QcmeCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Feedback coherence protection of a measured pair.
    CoherenceProtect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Quantum geometric protocol against the classical sphere flow.
    SphereTwinCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
    },
}

fn base_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != kind {
                return Err(Error::Config(format!(
                    "config is for `{}` but the command is `{kind}`",
                    cfg.experiment
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.sequential {
        cfg.parallel = false;
    }
    if kind == ExperimentKind::CoherenceProtect {
        if let Some(dt) = common.dt {
            cfg.coherence.sme.dt = dt;
        }
        if let Some(t) = common.t_max {
            cfg.coherence.sme.t_max = t;
            cfg.coherence.compare_at = cfg.coherence.compare_at.min(t);
        }
    } else if common.dt.is_some() || common.t_max.is_some() {
        let mut integ = cfg.integrator();
        if let Some(dt) = common.dt {
            integ = integ.with_dt(dt);
        }
        if let Some(t) = common.t_max {
            integ = integ.with_t_max(t);
        }
        cfg.integrator = Some(integ);
    }
    cfg.output = Some(
        common
            .out
            .clone()
            .or(cfg.output.take())
            .unwrap_or_else(|| PathBuf::from("out").join(kind.name())),
    );
    Ok(cfg)
}

fn apply_network(cfg: &mut ExperimentConfig, net: &NetworkArgs, grid: bool) {
    if let Some(path) = &net.topology_file {
        cfg.topology = Some(TopologySpec::EdgeList { path: path.clone() });
    } else if let Some(size) = net.size {
        cfg.topology = Some(if grid {
            TopologySpec::Grid { side: size }
        } else {
            TopologySpec::Chain { size }
        });
    }
    if net.protocol.is_some() || net.gain.is_some() {
        let current = cfg.protocol.clone();
        let kind = match net.protocol {
            Some(ProtocolArg::Chain) => ProtocolName::Chain,
            Some(ProtocolArg::Geometry) => ProtocolName::Geometry,
            Some(ProtocolArg::MinTimePair) => ProtocolName::MinTimePair,
            None => current.as_ref().map_or(
                if grid { ProtocolName::Geometry } else { ProtocolName::Chain },
                |p| p.kind,
            ),
        };
        let gain = net.gain.or(current.map(|p| p.gain)).unwrap_or(1.0);
        cfg.protocol = Some(ProtocolSpec { kind, gain });
    }
    if let Some(init) = net.init {
        cfg.network.initial = Some(match init {
            InitArg::Sphere => InitialStates::Sphere,
            InitArg::Hemisphere => InitialStates::Hemisphere,
            InitArg::Equal => InitialStates::Equal,
        });
    }
    if let Some(t) = net.threshold {
        cfg.network.threshold = t;
    }
}

fn build_config(cmd: &Command) -> Result<ExperimentConfig> {
    Ok(match cmd {
        Command::MinTimeHeatmap {
            common,
            resolution,
            threshold,
        } => {
            let mut cfg = base_config(ExperimentKind::MinTimeHeatmap, common)?;
            if let Some(r) = resolution {
                cfg.heatmap.resolution = *r;
            }
            if let Some(t) = threshold {
                cfg.heatmap.threshold = *t;
            }
            cfg
        }
        Command::ChainRun { common, net } => {
            let mut cfg = base_config(ExperimentKind::ChainRun, common)?;
            apply_network(&mut cfg, net, false);
            cfg
        }
        Command::GridRun { common, net } => {
            let mut cfg = base_config(ExperimentKind::GridRun, common)?;
            apply_network(&mut cfg, net, true);
            cfg
        }
        Command::ScalingSweep {
            common,
            seeds,
            chain_sizes,
            grid_sides,
        } => {
            let mut cfg = base_config(ExperimentKind::ScalingSweep, common)?;
            if let Some(s) = seeds {
                cfg.sweep.seeds = *s;
            }
            if let Some(c) = chain_sizes {
                cfg.sweep.chain_sizes = c.clone();
            }
            if let Some(g) = grid_sides {
                cfg.sweep.grid_sides = g.clone();
            }
            cfg
        }
        Command::QcmeCompare { common, seeds } => {
            let mut cfg = base_config(ExperimentKind::QcmeCompare, common)?;
            if let Some(s) = seeds {
                cfg.qcme.seeds = *s;
            }
            cfg
        }
        Command::CoherenceProtect { common, trajectories } => {
            let mut cfg = base_config(ExperimentKind::CoherenceProtect, common)?;
            if let Some(m) = trajectories {
                cfg.coherence.trajectories = *m;
            }
            cfg
        }
        Command::SphereTwinCheck { common, seeds } => {
            let mut cfg = base_config(ExperimentKind::SphereTwinCheck, common)?;
            if let Some(s) = seeds {
                cfg.twin.seeds = *s;
            }
            cfg
        }
    })
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let cfg = build_config(&cli.command)?;
    let out = cfg.output.clone().expect("output is always set");
    let report = run(&cfg, &out)?;
    Ok(json!({
        "experiment": cfg.experiment.name(),
        "output": out,
        "summary": report.summary,
    }))
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string().trim().to_string());
        }
    };
    match execute(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
