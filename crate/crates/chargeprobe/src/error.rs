use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system size: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigensolver did not converge (residual {residual:.3e} after {matvecs} matvecs)")]
    Convergence { residual: f64, matvecs: usize },
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("circuit layout error: {0}")]
    Layout(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// Tag the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
