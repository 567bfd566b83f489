//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("zero-norm spectrum: {context}")]
    ZeroNorm { context: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: format error at byte {offset}: {message}")]
    Format {
        path: String,
        offset: u64,
        message: String,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("conjugate gradient did not converge: {0}")]
    CgDiverged(String),

    #[error("VAE training produced a non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("infeasible abundance at pixel {pixel}: {constraint}")]
    Infeasible { pixel: usize, constraint: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Convenience constructor for dimension errors.
    pub fn dims(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
