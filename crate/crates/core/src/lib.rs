//! Distributed partial consensus protocols for networks of qubits.
//!
//! Each qubit applies a locally computed Hamiltonian so that the pure parts
//! of all qubit states agree, while their mixed weights stay untouched.

pub mod decoherence;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod metrics;
pub mod protocols;
pub mod quantum;
pub mod seed;

pub use error::{Error, Result};
