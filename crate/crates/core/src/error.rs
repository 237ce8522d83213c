use std::path::PathBuf;

/// Errors produced anywhere in the correction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input text. `context` names the line, row or field.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// Input parsed but violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("epoch {epoch} s is not covered by the ephemeris table")]
    Coverage { epoch: f64 },

    #[error("at least 4 satellites are required, got {0}")]
    InsufficientSatellites(usize),

    #[error("singular satellite geometry (normal matrix condition number {0:e})")]
    SingularGeometry(f64),

    #[error("weight for satellite {sat_id} must be positive, got {weight}")]
    NonPositiveWeight { sat_id: String, weight: f64 },

    #[error("unsupported database format version {found} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },

    #[error("database is corrupt: {0}")]
    Corruption(String),

    #[error("statistics require at least one value")]
    EmptyInput,

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by bad user input rather than by the runtime
    /// environment or a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::NonPositiveWeight { .. }
                | Error::VersionMismatch { .. }
                | Error::Corruption(_)
                | Error::EmptyInput
                | Error::InfeasibleParameters(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
