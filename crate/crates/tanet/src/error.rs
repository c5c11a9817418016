use std::fmt;
use std::io;
use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything the command-line tools can fail with.
#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: io::Error },
    Image { path: PathBuf, source: image::ImageError },
    /// A decoded raster with a zero width or height.
    EmptyImage(PathBuf),
    Checkpoint { path: PathBuf, source: CheckpointError },
    /// `key = value` config file problems, with the 1-based line.
    Config { line: usize, message: String },
    Model(tanet_core::Error),
    /// Evaluation found nothing usable.
    NoPairs(String),
    Json(serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Self::Config { line, message: message.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Image { path, source } => write!(f, "{}: cannot decode image: {source}", path.display()),
            Self::EmptyImage(path) => write!(f, "{}: image has zero size", path.display()),
            Self::Checkpoint { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Config { line, message } => write!(f, "config line {line}: {message}"),
            Self::Model(e) => write!(f, "{e}"),
            Self::NoPairs(msg) => write!(f, "{msg}"),
            Self::Json(e) => write!(f, "manifest: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io { source, .. } => Some(source),
            Self::Image { source, .. } => Some(source),
            Self::Checkpoint { source, .. } => Some(source),
            Self::Model(e) => Some(e),
            Self::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<tanet_core::Error> for Error {
    fn from(e: tanet_core::Error) -> Self {
        Self::Model(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}
