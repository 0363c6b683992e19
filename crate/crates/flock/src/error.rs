//! Error types for the library modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("vector length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("agent count must be at least 2, got {0}")]
    TooFewAgents(usize),

    #[error("ambient dimension must be 2 or 3, got {0}")]
    BadDimension(usize),

    #[error("edge ({0}, {1}) references an agent out of range")]
    EdgeOutOfRange(usize, usize),

    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("minimal rigidity requires {expected} edges for n={n}, d={d}, got {actual}")]
    EdgeCount { expected: usize, actual: usize, n: usize, d: usize },

    #[error("desired length for edge {0} must be positive and finite, got {1}")]
    BadLength(usize, f64),

    #[error("graph is disconnected (algebraic connectivity {0:.3e})")]
    Disconnected(f64),
}

#[derive(Debug, Error)]
pub enum GpError {
    #[error("input dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("output dimension mismatch: expected {expected}, got {actual}")]
    OutputDimension { expected: usize, actual: usize },

    #[error("dataset is frozen; no further observations may be added")]
    FrozenDataset,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("Gram matrix is not positive definite even after jitter")]
    Conditioning,

    #[error("posterior variance {0:.3e} is below the clamping threshold")]
    NegativeVariance(f64),

    #[error("noise variance must be positive for information gain")]
    ZeroNoise,

    #[error("epsilon must lie strictly inside (0, 1), got {0}")]
    BadEpsilon(f64),

    #[error("kernel parameter {0} must be positive, got {1}")]
    BadKernelParam(&'static str, f64),

    #[error("box domain is empty or malformed at axis {0}")]
    BadBox(usize),

    #[error("evaluation grid of {cells} cells exceeds the cap of {cap}; use a coarser grid")]
    GridTooLarge { cells: usize, cap: usize },

    #[error("dataset csv, line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("rkhs bound at dimension {0} must be positive and finite")]
    BadRkhsBound(usize),
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("learning control requires one GP model per agent: have {models}, need {agents}")]
    ModelCount { models: usize, agents: usize },

    #[error("missing state for neighbor {0}")]
    MissingNeighbor(usize),

    #[error(transparent)]
    Gp(#[from] GpError),

    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state diverged at t = {t:.6}: {what}")]
    Diverged { t: f64, what: String },

    #[error("interpolation parameter must lie in [0, 1], got {0}")]
    BadLambda(f64),

    #[error("sim settings invalid: {0}")]
    BadSettings(String),

    #[error("trajectory needs at least {0} samples")]
    TooShort(usize),

    #[error(transparent)]
    Control(#[from] ControlError),

    #[error(transparent)]
    Gp(#[from] GpError),

    #[error(transparent)]
    Network(#[from] NetworkError),

    #[error(transparent)]
    Config(#[from] Box<ConfigError>),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("series contains non-positive value {value:.3e} at t = {t:.6}; cannot fit a log-rate")]
    NonPositiveSeries { t: f64, value: f64 },

    #[error("window [{0}, {1}] selects fewer than two samples")]
    EmptyWindow(f64, f64),

    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("trajectory csv, line {line}: {msg}")]
    TrajectoryCsv { line: usize, msg: String },

    #[error("runs come from different scenarios (framework/disturbance/initial state differ)")]
    ScenarioMismatch,

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported config version {0} (this build reads version 1)")]
    Version(u32),

    #[error("unknown preset {0:?} (available: triangle2d, hexad2d, tetra3d)")]
    UnknownPreset(String),

    #[error("field {field}: {constraint}")]
    Invalid { field: String, constraint: String },

    #[error("framework: {0}")]
    Framework(#[from] NetworkError),
}
