use thiserror::Error;

/// Errors raised across the oracle, instance, game, acceleration and smoothing layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("batch of {size} points exceeds the per-round limit of {limit}")]
    BatchTooLarge { size: usize, limit: usize },

    #[error("empty batch submitted")]
    EmptyBatch,

    #[error("point {index} has norm {norm} outside the domain radius {radius}")]
    OutsideDomain { index: usize, norm: f64, radius: f64 },

    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },

    #[error("basis is not orthonormal: max Gram deviation {deviation}")]
    NotOrthonormal { deviation: f64 },

    #[error("cannot draw {count} vectors orthogonal to a {basis}-dimensional span in dimension {dim}")]
    SpanExhausted { basis: usize, count: usize, dim: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wall radius equation has no root in (0, 1/2): target {target}")]
    NoWallRadius { target: f64 },

    #[error("game is already finished after {rounds} rounds")]
    GameFinished { rounds: usize },

    #[error("win event failed at round {round}, query {query}, vector ({s1}, {s2})")]
    WinEventFailed { round: usize, query: usize, s1: usize, s2: usize },

    #[error("transcript is incomplete: {0}")]
    IncompleteTranscript(String),

    #[error("step coefficient needs lambda > 0, got {0}")]
    NonPositiveLambda(f64),

    #[error("accumulated weight A = {value} outside [{lower}, {upper}]")]
    WeightOutOfBracket { value: f64, lower: f64, upper: f64 },

    #[error("line search used {used} prox queries, budget is {budget}")]
    QueryBudgetExceeded { used: usize, budget: f64 },

    #[error("line search found no bracket: {0}")]
    NoBracket(String),

    #[error("oracle contract violated: {0}")]
    ContractViolation(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("point at distance {distance} exceeds the trust radius {radius}")]
    OutsideTrustRegion { distance: f64, radius: f64 },

    #[error("depth budget of {budget} rounds exhausted")]
    DepthBudgetExceeded { budget: u64 },

    #[error("malformed serialized data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
