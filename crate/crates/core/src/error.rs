use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A configuration value is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// NaN/Inf in a place that requires finite values.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Input data outside its documented domain.
    #[error("validation error: {0}")]
    Validation(String),
    /// Camera/scene placement that cannot be rendered.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// An operation was called in the wrong order (e.g. backward without forward).
    #[error("state error: {0}")]
    State(String),
    #[error("quaternion norm {0:e} is too small to define a rotation")]
    DegenerateRotation(f64),
    #[error("orientation loss {0:e} is too small to calibrate beta")]
    DegenerateCalibration(f64),
    /// A pipeline stage failed; `stage` names it.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
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

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
