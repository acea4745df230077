use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("Newton solve failed after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in the solution")]
    NonFinite,

    #[error("step {step} (seed {seed}): {source}")]
    Step {
        step: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("mismatched configurations: {0}")]
    MismatchedConfigs(String),

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("expression parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
