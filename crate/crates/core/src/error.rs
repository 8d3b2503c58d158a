use std::path::PathBuf;

/// Configuration problems. Exit code 2 at the command line.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown variant `{0}` (expected one of 1obs, 1obs_noddf, 1obs_tbnu, 3obs_tbnu, 3obs_noddf_tbnu, 5obs_tbnu)")]
    UnknownVariant(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }
}
