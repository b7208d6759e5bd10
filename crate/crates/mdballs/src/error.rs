use std::path::PathBuf;

/// Crate-wide error type. Exit codes for the CLI are derived from the
/// variant: validation errors map to 1, failed checks to 2, I/O to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("potential overflow: exponent {0:.1} exceeds the double range; reduce alpha or treat as divergence")]
    PotentialOverflow(f64),

    #[error("parallel protocol exceeded the round guard ({rounds} rounds, limit {limit})")]
    RoundGuard { rounds: u64, limit: u64 },

    #[error("exact enumeration search space too large ({0:.3e} branches, cap 1e7)")]
    SearchSpace(f64),

    #[error("observed an outcome with exact probability zero: {0}")]
    ForbiddenOutcome(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("cannot write output {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidPlan(_)
            | Error::SearchSpace(_)
            | Error::DegenerateFit(_)
            | Error::PotentialOverflow(_) => 1,
            Error::CheckFailed(_) | Error::ForbiddenOutcome(_) | Error::RoundGuard { .. } => 2,
            Error::Output { .. } | Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
