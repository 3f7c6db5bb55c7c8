use std::path::Path;

use thiserror::Error;

/// Command failure. Core errors already carry their module prefix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] motorgraph::Error),
    #[error("cli: config {origin}: at `{key}`: {detail}")]
    Config { origin: String, key: String, detail: String },
    #[error("cli: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cli: {path}: {detail}")]
    Checkpoint { path: String, detail: String },
    #[error("cli: dataset {path}: {detail}")]
    Dataset { path: String, detail: String },
    #[error("cli: missing {what}; pass {flag} or set paths.{key} in the config")]
    MissingPath {
        what: &'static str,
        flag: &'static str,
        key: &'static str,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
