use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cholesky factorization failed on every rung of the jitter ladder.
    #[error("matrix not positive definite after jitter ladder {ladder:?}")]
    NotPositiveDefinite { ladder: Vec<f64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error{}: {message}", line_suffix(*.line))]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("schema error{}: {message}", line_suffix(*.line))]
    Schema {
        line: Option<usize>,
        message: String,
    },

    #[error("unsupported format_version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Schema {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn parse(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
