use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("degenerate normalization: total mass {mass}")]
    DegenerateNormalization { mass: f64 },

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("cannot parse lyapunov spec `{spec}`: {reason}")]
    LyapunovSyntax { spec: String, reason: String },

    #[error("point {x:?} is a singularity of the lyapunov family")]
    Singularity { x: Vec<f64> },

    #[error("empty sub-level set {{V <= {r}}}; smallest V on grid is {min_v}")]
    EmptySublevel { r: f64, min_v: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("pair ({0}) is not controllable")]
    NotControllable(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("point outside chart: {0}")]
    OutsideChart(String),

    #[error("focal crossing: {0}")]
    Focal(String),

    #[error("all mass absorbed at step {step}")]
    Absorbed { step: usize },

    #[error("unknown name `{name}`; available: {available}")]
    Unknown { name: String, available: String },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn bad(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
