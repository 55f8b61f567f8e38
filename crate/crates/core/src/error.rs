use thiserror::Error;

/// Errors raised by the engine.
///
/// Input problems (bad files, invalid parameters) and numerical failures are
/// kept apart so that front ends can map them onto distinct exit codes.
#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown rating symbol '{symbol}'{}", borrower.as_ref().map(|b| format!(" for borrower {b}")).unwrap_or_default())]
    UnknownRating { symbol: String, borrower: Option<String> },

    #[error("duplicate borrower id '{0}'")]
    DuplicateBorrower(String),

    #[error("portfolio contains no positions")]
    EmptyPortfolio,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: String, detail: String },

    #[error("quantile bracket [{lo}, {hi}] outside sample of size {n}")]
    BracketOutOfRange { lo: i64, hi: i64, n: usize },

    #[error("config key '{key}': {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: msg.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_) | Error::NonConvergence { .. } | Error::BracketOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
