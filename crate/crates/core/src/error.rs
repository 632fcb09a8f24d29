use thiserror::Error;

/// Errors raised by the simulator, the network and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid targeting sector: range {range}, angle {angle}")]
    InvalidSector { range: f64, angle: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode already terminated; reset before stepping")]
    EpisodeOver,

    #[error("fixed initialization must start at step 0, got step {0}")]
    NonZeroStepCount(u32),

    #[error("action index {index} out of range for {count} actions")]
    ActionOutOfRange { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("architecture mismatch: expected {expected:?}, got {actual:?}")]
    ArchitectureMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("test case id {0} not in suite")]
    UnknownCase(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
