//! Experiment harness around the block-coordinate descent core: layered
//! configuration, experiment execution in either mode, metrics and file
//! outputs, mode comparison, and audits of saved runs.

pub mod config;
pub mod experiment;

/// Maps an error to the process exit code contract: 1 for configuration
/// problems, 2 for numerical failures, 3 for audit and protocol failures.
pub fn exit_code(err: &pcd_core::Error) -> i32 {
    use pcd_core::Error::*;
    match err {
        InvalidLayout(_) | InvalidGraph(_) | BlockIndex { .. } | DimensionMismatch { .. }
        | InvalidParameter(_) | InstanceFormat(_) | Io(_) | Json(_) => 1,
        RetriesExhausted { .. } | NotPositiveDefinite | ToleranceNotMet { .. }
        | InfeasibleStart | NonFiniteValue { .. } => 2,
        ProtocolViolation(_) | AuditFailed(_) | ReplayMismatch(_) => 3,
    }
}
