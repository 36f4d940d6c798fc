use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode count {0} outside supported range 1..=16")]
    InvalidModes(usize),

    #[error("mode-space mismatch: {left} modes vs {right} modes")]
    ModeMismatch { left: usize, right: usize },

    #[error("mode {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("creator is not invertible: |c0| = {vacuum:e} with max amplitude {scale:e}")]
    NonInvertible { vacuum: f64, scale: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("energy spread {spread:e} is degenerate (threshold {threshold:e}); time interval is ill defined")]
    DegenerateEnergy { spread: f64, threshold: f64 },

    #[error("number spread {spread:e} is degenerate; phase orbit direction is undefined")]
    DegenerateNumber { spread: f64 },

    #[error("step too large: eta = {eta:e} exceeds guard {guard:e}")]
    StepTooLarge { eta: f64, guard: f64 },

    #[error("linear system is singular: condition estimate {condition:e}")]
    SingularSystem { condition: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid lattice geometry: {0}")]
    InvalidGeometry(String),

    #[error("oracle size cap exceeded: {0}")]
    OracleCap(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Short stable tag used in run summaries.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidModes(_) => "InvalidModes",
            Error::ModeMismatch { .. } => "ModeMismatch",
            Error::ModeOutOfRange { .. } => "ModeOutOfRange",
            Error::NonInvertible { .. } => "NonInvertible",
            Error::ZeroNorm => "ZeroNorm",
            Error::DegenerateEnergy { .. } => "DegenerateEnergy",
            Error::DegenerateNumber { .. } => "DegenerateNumber",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::InvalidGeometry(_) => "InvalidGeometry",
            Error::OracleCap(_) => "OracleCap",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
