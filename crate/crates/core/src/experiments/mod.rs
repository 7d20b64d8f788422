//! Configured experiment runs and their on-disk outputs.

pub mod config;
pub mod output;
pub mod runners;
pub mod sampling;

pub use config::{ExperimentConfig, ExperimentKind, InitialStates, ProtocolName, ProtocolSpec, TopologySpec};
pub use output::{Manifest, OutputDir};
pub use runners::{run, RunReport};
