use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {x:?} lies outside the domain of chart `{chart}`")]
    OutOfDomain { chart: String, x: Vec<f64> },

    #[error("metric is singular at {x:?} (|det g| = {det:e})")]
    SingularMetric { x: Vec<f64>, det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("structure constants are inconsistent: {0}")]
    InvalidStructureConstants(String),

    #[error("integration exceeded {max_steps} steps at tau = {tau}")]
    MaxStepsExceeded { max_steps: usize, tau: f64 },

    #[error("non-finite state encountered at tau = {tau}")]
    NonFiniteState { tau: f64 },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("Kerr parameters are not subextremal: |a| = {a} >= M = {mass}")]
    ExtremalParams { mass: f64, a: f64 },

    #[error("quantum-dot parameters violate the tuning condition (wL^2 + w0^2 - 4 wz^2 = {mismatch:e})")]
    DetunedParameters { mismatch: f64 },

    #[error("generator bracket needs operands of rank >= 1")]
    RankZeroOperand,

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
