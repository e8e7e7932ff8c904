use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by the exit-code contract of the CLI: input and
/// argument problems map to exit code 2, numerical failures to exit code 3.
#[derive(Debug, Error)]
pub enum DmlError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error(
        "solver did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})"
    )]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate score for target `{target}`: zero variance")]
    DegenerateScore { target: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("provenance audit failed: {0}")]
    Audit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl DmlError {
    /// True for errors caused by user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            DmlError::Argument(_)
                | DmlError::Validation(_)
                | DmlError::Ingestion { .. }
                | DmlError::Config { .. }
                | DmlError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DmlError>;
