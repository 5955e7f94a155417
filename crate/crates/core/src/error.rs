use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("layer {layer} uses a coupled-matrix optimizer but its A array was never calibrated")]
    Uncalibrated { layer: usize },

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        SimError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Attach a human-readable context to an error.
pub trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| SimError::Context {
            context: context(),
            source: Box::new(e),
        })
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(SimError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
