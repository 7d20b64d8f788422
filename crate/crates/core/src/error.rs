use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle out of range: {name} = {value}")]
    AngleOutOfRange { name: &'static str, value: f64 },

    #[error("ket is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("vector is not a unit vector (norm = {0})")]
    NotUnit(f64),

    #[error("Bloch vector lies outside the unit ball (norm = {0})")]
    OutsideBlochBall(f64),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("matrix is not a proper rotation (deviation {0:e})")]
    NotRotation(f64),

    #[error("maximally mixed state has no pure direction")]
    MaximallyMixed,

    #[error("invalid Pauli axis index {0} (expected 1, 2 or 3)")]
    InvalidAxis(usize),

    #[error("topology needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },

    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("invalid edge weight {weight} on edge ({i}, {j})")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("edge list line {line}: {message}")]
    EdgeListParse { line: usize, message: String },

    #[error("topology is not connected")]
    Disconnected,

    #[error("topology is not a chain graph")]
    NotChain,

    #[error("states are parallel; rotation axis undefined")]
    ParallelStates,

    #[error("states are antipodal; rotation axis undefined")]
    AntipodalStates,

    #[error("expected {expected} states, got {got}")]
    StateCount { expected: usize, got: usize },

    #[error("{n} qubits exceeds the limit of {max} for this operation")]
    TooManyQubits { n: usize, max: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("trajectory has no `{0}` series")]
    MissingSeries(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid noise parameters: {0}")]
    InvalidNoise(String),

    #[error("measurement output undefined without measurement strength (gamma_z = 0)")]
    NoMeasurement,

    #[error("density matrix lost positivity (min eigenvalue {min_eigenvalue:e}) at t = {time}; reduce dt (currently {dt})")]
    PositivityLost {
        min_eigenvalue: f64,
        time: f64,
        dt: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AngleOutOfRange { .. } => "angle_out_of_range",
            Error::NotNormalized(_) => "not_normalized",
            Error::NotUnit(_) => "not_unit",
            Error::OutsideBlochBall(_) => "outside_bloch_ball",
            Error::NotHermitian(_) => "not_hermitian",
            Error::InvalidTrace(_) => "invalid_trace",
            Error::NotPositive(_) => "not_positive",
            Error::NotUnitary(_) => "not_unitary",
            Error::NotRotation(_) => "not_rotation",
            Error::MaximallyMixed => "maximally_mixed",
            Error::InvalidAxis(_) => "invalid_axis",
            Error::TooFewNodes { .. } => "too_few_nodes",
            Error::NodeOutOfRange { .. } => "node_out_of_range",
            Error::InvalidWeight { .. } => "invalid_weight",
            Error::SelfLoop(_) => "self_loop",
            Error::EdgeListParse { .. } => "edge_list_parse",
            Error::Disconnected => "disconnected",
            Error::NotChain => "not_chain",
            Error::ParallelStates => "parallel_states",
            Error::AntipodalStates => "antipodal_states",
            Error::StateCount { .. } => "state_count",
            Error::TooManyQubits { .. } => "too_many_qubits",
            Error::DimensionMismatch(..) => "dimension_mismatch",
            Error::UnknownMetric(_) => "unknown_metric",
            Error::MissingSeries(_) => "missing_series",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidNoise(_) => "invalid_noise",
            Error::NoMeasurement => "no_measurement",
            Error::PositivityLost { .. } => "positivity_lost",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
