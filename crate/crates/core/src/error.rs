use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not place {requested} fruits (placed {placed}) within {attempts} attempts")]
    PackingFailure {
        requested: usize,
        placed: usize,
        attempts: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("training diverged at iteration {iteration}: total loss {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("missing artifact {path}; run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    #[error("png error: {0}")]
    Png(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI's error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::PackingFailure { .. } => "packing_failure",
            Error::NonFinite { .. } => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::EmptyPointSet => "empty_point_set",
            Error::Parse { .. } => "parse",
            Error::Checkpoint { .. } => "checkpoint",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Png(_) => "png",
            Error::Json(_) => "json",
            Error::Io { .. } => "io",
        }
    }
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for a
    /// missing upstream artifact, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::MissingArtifact { .. } => 3,
            _ => 1,
        }
    }
}
