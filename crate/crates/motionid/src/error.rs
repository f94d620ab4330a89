use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("container: bad magic {0:?}")]
    BadMagic(Vec<u8>),

    #[error("container: truncated stream")]
    Truncated,

    #[error("container: version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("container: NaN pose component in frame {frame}")]
    NanPose { frame: usize },

    #[error("container: {0}")]
    Malformed(String),

    #[error("bsor: unsupported version {0}")]
    UnsupportedBsorVersion(u8),

    #[error("bsor: {0}")]
    Bsor(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("workspace: {0}")]
    Workspace(String),

    #[error(transparent)]
    Core(#[from] motionid_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Maps an unexpected end of input to [`Error::Truncated`].
pub(crate) fn eof_as_truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated
    } else {
        Error::Io(e)
    }
}
