use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::decoherence::{NoiseParams, SmeConfig};
use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::protocols::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MinTimeHeatmap,
    ChainRun,
    GridRun,
    ScalingSweep,
    QcmeCompare,
    CoherenceProtect,
    SphereTwinCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::MinTimeHeatmap,
        ExperimentKind::ChainRun,
        ExperimentKind::GridRun,
        ExperimentKind::ScalingSweep,
        ExperimentKind::QcmeCompare,
        ExperimentKind::CoherenceProtect,
        ExperimentKind::SphereTwinCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MinTimeHeatmap => "min-time-heatmap",
            ExperimentKind::ChainRun => "chain-run",
            ExperimentKind::GridRun => "grid-run",
            ExperimentKind::ScalingSweep => "scaling-sweep",
            ExperimentKind::QcmeCompare => "qcme-compare",
            ExperimentKind::CoherenceProtect => "coherence-protect",
            ExperimentKind::SphereTwinCheck => "sphere-twin-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Chain { size: usize },
    Grid { side: usize },
    Complete { size: usize },
    /// `i j [weight]` lines with 1-based indices.
    EdgeList { path: PathBuf },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Chain { size } => Topology::chain(*size),
            TopologySpec::Grid { side } => Topology::grid(*side),
            TopologySpec::Complete { size } => Topology::complete(*size),
            TopologySpec::EdgeList { path } => Topology::load_edge_list(path),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    Chain,
    Geometry,
    MinTimePair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kind: ProtocolName,
    #[serde(default = "one")]
    pub gain: f64,
}

fn one() -> f64 {
    1.0
}

impl ProtocolSpec {
    pub fn build(&self) -> Protocol {
        let p = match self.kind {
            ProtocolName::Chain => Protocol::chain(),
            ProtocolName::Geometry => Protocol::geometry(),
            ProtocolName::MinTimePair => Protocol::min_time_pair(),
        };
        p.with_gain(self.gain)
    }
}

/// How initial pure states are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialStates {
    /// Uniform on the Bloch sphere.
    Sphere,
    /// Uniform on the upper (`z > 0`) hemisphere.
    Hemisphere,
    /// Every qubit starts in the same random state.
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapConfig {
    pub resolution: usize,
    pub threshold: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        HeatmapConfig {
            resolution: 32,
            threshold: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub initial: Option<InitialStates>,
    pub threshold: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            initial: None,
            threshold: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub chain_sizes: Vec<usize>,
    pub grid_sides: Vec<usize>,
    pub seeds: usize,
    pub threshold: f64,
    /// Also run chains with `side²` qubits for each grid side.
    pub chain_at_grid_sizes: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            chain_sizes: vec![5, 10, 20, 40],
            grid_sides: vec![3, 4, 5],
            seeds: 5,
            threshold: 1e-2,
            chain_at_grid_sizes: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QcmeConfig {
    pub seeds: usize,
    pub threshold: f64,
}

impl Default for QcmeConfig {
    fn default() -> Self {
        QcmeConfig {
            seeds: 10,
            threshold: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceConfig {
    pub trajectories: usize,
    pub noise: NoiseParams,
    pub sme: SmeConfig,
    /// Initial Bloch vectors of the two qubits.
    pub bloch_i: [f64; 3],
    pub bloch_j: [f64; 3],
    /// Time at which the feedback and free ensembles are compared.
    pub compare_at: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        let b = |theta: f64, phi: f64| {
            let v = crate::quantum::BlochVector::from_angles(theta, phi).vector();
            [v.x, v.y, v.z]
        };
        CoherenceConfig {
            trajectories: 100,
            noise: NoiseParams::reference(),
            sme: SmeConfig::default(),
            bloch_i: b(std::f64::consts::FRAC_PI_3, 0.3),
            bloch_j: b(std::f64::consts::FRAC_PI_2, 1.2),
            compare_at: 0.5,
        }
    }
}

impl CoherenceConfig {
    pub fn initial(&self) -> Result<(Vector3<f64>, Vector3<f64>)> {
        Ok((Vector3::from(self.bloch_i), Vector3::from(self.bloch_j)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    pub seeds: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig { seeds: 20 }
    }
}

/// Complete description of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Evaluate sweep cells in parallel.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub heatmap: HeatmapConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub qcme: QcmeConfig,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    #[serde(default)]
    pub twin: TwinConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            seed: default_seed(),
            output: None,
            parallel: true,
            topology: None,
            protocol: None,
            integrator: None,
            heatmap: HeatmapConfig::default(),
            network: NetworkConfig::default(),
            sweep: SweepConfig::default(),
            qcme: QcmeConfig::default(),
            coherence: CoherenceConfig::default(),
            twin: TwinConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Integrator settings, falling back to per-experiment defaults.
    pub fn integrator(&self) -> IntegratorConfig {
        self.integrator.clone().unwrap_or_else(|| {
            let base = IntegratorConfig::default();
            match self.experiment {
                ExperimentKind::ScalingSweep => base.with_t_max(100.0),
                ExperimentKind::QcmeCompare => base.with_t_max(15.0),
                ExperimentKind::SphereTwinCheck => base.with_t_max(20.0),
                ExperimentKind::MinTimeHeatmap => base.with_sample_every(1),
                _ => base,
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator().validate()?;
        if self.heatmap.resolution < 8 {
            return Err(Error::Config(format!(
                "heatmap resolution must be at least 8, got {}",
                self.heatmap.resolution
            )));
        }
        for t in [
            self.heatmap.threshold,
            self.network.threshold,
            self.sweep.threshold,
            self.qcme.threshold,
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("thresholds must be positive, got {t}")));
            }
        }
        if self.sweep.seeds < 3 {
            return Err(Error::Config(format!(
                "scaling sweep needs at least 3 seeds, got {}",
                self.sweep.seeds
            )));
        }
        if self.qcme.seeds == 0 || self.twin.seeds == 0 || self.coherence.trajectories < 2 {
            return Err(Error::Config("seed and trajectory counts must be positive (at least 2 trajectories)".into()));
        }
        if self.sweep.chain_sizes.iter().any(|&n| n < 2) || self.sweep.grid_sides.iter().any(|&s| s < 2) {
            return Err(Error::Config("chain sizes and grid sides must be at least 2".into()));
        }
        self.coherence.noise.validate()?;
        self.coherence.sme.validate()?;
        if !(self.coherence.compare_at >= 0.0 && self.coherence.compare_at <= self.coherence.sme.t_max) {
            return Err(Error::Config(format!(
                "coherence compare_at ({}) must lie within the horizon ({})",
                self.coherence.compare_at, self.coherence.sme.t_max
            )));
        }
        for b in [self.coherence.bloch_i, self.coherence.bloch_j] {
            crate::quantum::BlochVector::from_vector(Vector3::from(b))?;
        }
        if let Some(p) = &self.protocol {
            if !(p.gain > 0.0 && p.gain.is_finite()) {
                return Err(Error::Config(format!("protocol gain must be positive, got {}", p.gain)));
            }
        }
        Ok(())
    }
}
