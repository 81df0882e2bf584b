use std::path::{Path, PathBuf};

use serde::Serialize;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("guard {guard} refused the configuration: {detail}")]
    Guard { guard: String, detail: String },
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("manifest verification failed for {path}: expected {expected}, found {found}")]
    Manifest {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Core(#[from] momentlab_core::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Config(_) => "config",
            Self::Guard { .. } => "guard",
            Self::Locked(_) => "locked",
            Self::Manifest { .. } => "manifest",
            Self::Core(_) => "numerics",
            Self::Json(_) => "serialization",
        }
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            guard: Option<&'a str>,
        }
        let guard = match self {
            Self::Guard { guard, .. } => Some(guard.as_str()),
            _ => None,
        };
        serde_json::to_string(&Payload {
            error: self.kind(),
            message: self.to_string(),
            guard,
        })
        .expect("error payload serializes")
    }
}
