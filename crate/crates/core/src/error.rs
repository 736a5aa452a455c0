use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what}: {requested} exceeds budget of {budget}")]
    Capacity {
        what: &'static str,
        requested: usize,
        budget: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A function is not affine on a cell because the cell straddles one of
    /// its breakpoints or kinks.
    #[error("function `{function}` is not affine on cell {cell}: {reason}")]
    PartitionIncompatible {
        function: String,
        cell: String,
        reason: String,
    },

    #[error("reduction failed on cell {cell}: {reason}")]
    Reduction { cell: String, reason: String },

    /// The copositivity constraint of a cell cannot be met by any finite
    /// multipliers, so the worst-case bound is +inf.
    #[error("cell {cell} admits no finite dual certificate (risk grows along an unbounded direction)")]
    InfeasibleOnCell { cell: String },

    #[error("basis factorization failed: pivot {pivot:.3e} below threshold (estimated condition {condition:.3e})")]
    Factorization { pivot: f64, condition: f64 },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleOnCell { .. } => 3,
            Error::Capacity { .. } => 4,
            Error::Factorization { .. } => 1,
            _ => 5,
        }
    }
}
