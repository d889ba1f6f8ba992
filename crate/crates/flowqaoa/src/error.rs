use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration file or input artifact failed validation.
    #[error("validation: {0}")]
    Validation(String),

    /// A requested object would exceed a configured resource cap.
    #[error("resource cap exceeded: {what} needs {needed}, cap is {cap}")]
    ResourceCap {
        what: String,
        needed: u128,
        cap: u128,
    },

    /// No path between the requested terminals.
    #[error("no path: {0}")]
    NoPath(String),

    /// A configuration is not a member of the basis in use.
    #[error("not in basis: {0}")]
    NotInBasis(String),

    /// Two objects built over different bases were combined.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// A diagonal-only operation was applied to a non-diagonal operator.
    #[error("operator is not diagonal")]
    NotDiagonal,

    /// A Hermitian-only operation was applied to a non-Hermitian operator.
    #[error("operator is not hermitian")]
    NotHermitian,

    /// A combination of options that cannot be realized together.
    #[error("invalid combination: {0}")]
    InvalidCombination(String),

    /// A flow difference that does not lie in the cycle space of the graph.
    #[error("infeasible flow difference: {0}")]
    InfeasibleDifference(String),

    /// A flow value left the representable range of the qudit register.
    #[error("flow out of range: {0}")]
    RangeExceeded(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An error annotated with the pipeline stage it occurred in.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// resource caps, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::InvalidArgument(_) | Error::Validation(_) | Error::InvalidCombination(_) => 2,
            Error::ResourceCap { .. } => 3,
            _ => 1,
        }
    }
}

/// Shorthand for `Error::InvalidArgument` with a formatted message.
#[macro_export]
macro_rules! invalid_arg {
    ($($t:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($t)*))
    };
}
