use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("OD pair ({origin}, {destination}) has no directed path")]
    NoPath { origin: usize, destination: usize },
    #[error("destination {destination} unreachable from {origin} under the given costs")]
    Unreachable { origin: usize, destination: usize },
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative edge flow {value} on edge {edge}")]
    NegativeFlow { edge: usize, value: f64 },
    #[error("flow vector is not in the demand polytope: {0}")]
    NotInPolytope(String),
    #[error("bregman divergence is infinite: flow has mass on a path where the anchor is zero (path {path})")]
    InfiniteDivergence { path: usize },
    #[error("attack rejected: magnitude is infinite (support violation on path {path})")]
    InfiniteAttack { path: usize },
    #[error("monte-carlo estimate needs at least 2 draws, got {0}")]
    TooFewDraws(usize),
    #[error("growth-constant estimation needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("WANES verdict needs at least 20 replications, got {0}")]
    TooFewReplications(usize),
    #[error("no attack present in the supplied records")]
    NoAttackInRecords,
    #[error("concentration audit is undefined for a singleton perturbation space")]
    SingletonPerturbation,
    #[error("step schedule does not converge: exponent {0} must lie in (-1, -0.5)")]
    NonConvergentSchedule(f64),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
