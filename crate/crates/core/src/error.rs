use thiserror::Error;

pub type Result<T> = std::result::Result<T, HlrError>;

/// Errors raised anywhere in the library.
///
/// The CLI maps these onto process exit codes through [`HlrError::exit_code`].
#[derive(Debug, Error)]
pub enum HlrError {
    /// A value outside the domain of an operation (non-finite input, bad parameter, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Mean relative error is undefined when a target is zero.
    #[error("mean relative error diverges: target at index {index} is zero")]
    Divergence { index: usize },

    #[error("linear solve failed (condition estimate {condition:.3e}): {reason}")]
    Solver { condition: f64, reason: String },

    /// `row` and `column` are 1-based positions in the source file.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HlrError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        HlrError::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        HlrError::Dimension(msg.into())
    }

    /// Exit code used by the command line tool: 2 for configuration errors,
    /// 3 for data errors, 4 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HlrError::Config(_) => 2,
            HlrError::Solver { .. } => 4,
            HlrError::Domain(_)
            | HlrError::Dimension(_)
            | HlrError::Divergence { .. }
            | HlrError::Parse { .. }
            | HlrError::Format(_)
            | HlrError::Io(_) => 3,
        }
    }
}
