use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: not found", .0.display())]
    NotFound(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Tiff {
        path: PathBuf,
        #[source]
        source: tiff::TiffError,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: no frames", .0.display())]
    NoFrames(PathBuf),

    #[error("frame dimension mismatch: expected {expected:?}, found {found:?} ({context})")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
        context: String,
    },

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("degenerate box {width:.2}x{height:.2}: each side must be at least 2 px")]
    DegenerateBox { width: f64, height: f64 },

    #[error("box lies entirely outside the frame")]
    BoxOutsideFrame,

    #[error("frame index discontinuity: expected {expected}, got {got}")]
    FrameDiscontinuity { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("track {id} has {points} point(s); at least 2 are required")]
    TrackTooShort { id: u64, points: usize },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// True for errors caused by missing or unreadable inputs rather than bad data.
    pub fn is_missing_input(&self) -> bool {
        matches!(self, Error::NotFound(_))
    }
}
