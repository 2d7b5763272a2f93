use crate::sim::AuditReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid partition layout: {0}")]
    InvalidLayout(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("block index {index} out of range ({count} blocks)")]
    BlockIndex { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no connected graph found after {attempts} attempts (n = {n}, p = {p})")]
    RetriesExhausted { n: usize, p: f64, attempts: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("inner prox solver stalled at step norm {achieved:e} (required {required:e})")]
    ToleranceNotMet { achieved: f64, required: f64 },

    #[error("initial point has non-finite objective value")]
    InfeasibleStart,

    #[error("non-finite objective value at iteration {iteration}")]
    NonFiniteValue { iteration: usize },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("consistency audit failed:\n{0}")]
    AuditFailed(AuditReport),

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error("instance document: {0}")]
    InstanceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
