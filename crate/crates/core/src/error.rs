use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("step {t} out of range 1..={max}")]
    StepOutOfRange { t: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("relative error undefined for {0}: reference average is zero")]
    UndefinedRatio(&'static str),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid_graph",
            Error::StepOutOfRange { .. } => "step_out_of_range",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::UndefinedRatio(_) => "undefined_ratio",
            Error::Empty(_) => "empty_input",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Parse { .. } => "parse",
            Error::Version { .. } => "version",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
