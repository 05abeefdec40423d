use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{op}: n={n} depth={depth:?} needs {requested} elements, cap is {cap}")]
    CapExceeded {
        op: &'static str,
        n: usize,
        depth: Option<u32>,
        requested: u128,
        cap: u128,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("degenerate scale grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid joint distribution: {0}")]
    InvalidJoint(String),

    #[error("distortion {eps} is below the minimum {min} achievable with the reproduction alphabet")]
    DistortionUnreachable { eps: f64, min: f64 },

    #[error("digit capacity exceeded: {symbols} base-{base} digits per coordinate leave a cell gap of {gap:e} below the floor {floor:e}; largest safe n/k is {max_ratio}")]
    DigitCapacity {
        symbols: usize,
        base: usize,
        gap: f64,
        floor: f64,
        max_ratio: usize,
    },

    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },

    #[error("unknown identifier: {0}")]
    UnknownId(String),

    #[error("io error: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
