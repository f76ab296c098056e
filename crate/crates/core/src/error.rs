use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent sign: {0}")]
    InconsistentSign(String),

    /// Step halving did not converge within the step budget.
    #[error(
        "integration did not converge after {steps} steps: last refinements {coarse:?} vs {fine:?}"
    )]
    Integration {
        steps: usize,
        coarse: [f64; 3],
        fine: [f64; 3],
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("scan too short to identify the oscillation frequency: {0}")]
    Identifiability(String),

    #[error("ambiguous periodogram, candidate frequencies (rad/s): {candidates:?}")]
    AmbiguousPeriodogram { candidates: Vec<f64> },

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("internal model error: {0}")]
    Model(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InconsistentSign(_) => "inconsistent_sign",
            Error::Integration { .. } => "integration",
            Error::Input(_) => "input",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Identifiability(_) => "identifiability",
            Error::AmbiguousPeriodogram { .. } => "ambiguous_periodogram",
            Error::Singular(_) => "singular",
            Error::Model(_) => "model",
            Error::Io { .. } => "io",
        }
    }
}
