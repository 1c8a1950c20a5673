use thiserror::Error;

use crate::measurement::Scheme;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity outside the range the models are valid for.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("scheme {scheme:?} does not support {operation}")]
    InvalidScheme { scheme: Scheme, operation: &'static str },

    #[error("invalid input: {0}")]
    Input(String),

    /// A probability model produced something that is not a probability.
    #[error("model error: {0}")]
    Model(String),

    #[error("fit did not converge after {iterations} iterations: {diagnostics}")]
    Fit { iterations: usize, diagnostics: String },

    #[error("{}", format_config_error(.path, .line, .message))]
    Config {
        path: Option<String>,
        line: Option<usize>,
        message: String,
    },

    #[error("{path}: field `{field}`: {message}")]
    Schema {
        path: String,
        field: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_config_error(path: &Option<String>, line: &Option<usize>, message: &str) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{p}:{l}: {message}"),
        (Some(p), None) => format!("{p}: {message}"),
        (None, Some(l)) => format!("line {l}: {message}"),
        (None, None) => message.to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Schema { .. } | Error::Input(_) | Error::Domain(_)
        )
    }
}
