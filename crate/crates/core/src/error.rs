use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{phase}: insufficient pilots ({got} < {required})")]
    InsufficientPilots {
        phase: &'static str,
        required: usize,
        got: usize,
    },

    /// A reference quantity that must be inverted entrywise is (numerically) zero.
    #[error(
        "degenerate channel: |{what}[{index}]| = {modulus:e} is below the singularity threshold"
    )]
    DegenerateChannel {
        what: &'static str,
        index: usize,
        modulus: f64,
    },

    #[error("{what} is rank deficient (numerical rank {rank}, need {required})")]
    RankDeficient {
        what: String,
        rank: usize,
        required: usize,
    },

    #[error("case mismatch: {0}")]
    CaseMismatch(String),

    #[error("training design failed after {attempts} attempts (last numerical rank {last_rank}, need {required})")]
    DesignFailure {
        attempts: u32,
        last_rank: usize,
        required: usize,
    },

    #[error("MSE undefined: {0}")]
    UndefinedMse(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep point {value}: {source}")]
    AtSweepPoint {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
