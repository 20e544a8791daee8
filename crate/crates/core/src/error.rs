use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {err:e})")]
    QuadratureNotConverged { tol: f64, err: f64 },

    #[error("operation requires a law with unbounded support, got {0}")]
    UnboundedSupportRequired(&'static str),

    #[error("tail probability is zero at x = {0}")]
    DivisionByZeroTail(f64),

    #[error("time {t} outside path horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("reflection requires a nonnegative initial value, got {0}")]
    NegativeInitialValue(f64),

    #[error("malformed path: {0}")]
    InvalidPath(String),

    #[error("trajectory was simulated without an event log")]
    EventLogMissing,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid walk levels j = {j}, l = {l}")]
    InvalidLevels { j: u32, l: u32 },

    #[error("two-sample statistic needs nonempty samples")]
    EmptySample,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("replication failed for seed {seed}, r = {r}, rep = {rep}: {source}")]
    Replication {
        seed: u64,
        r: f64,
        rep: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
