use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed audio: {reason}")]
    MalformedAudio { path: PathBuf, reason: String },
    #[error("{path}: unsupported encoding: {reason}")]
    UnsupportedAudio { path: PathBuf, reason: String },
    #[error("{path}: sample rate {found} Hz, expected {expected} Hz")]
    SampleRate { path: PathBuf, expected: u32, found: u32 },
    #[error("checkpoint: bad magic bytes")]
    Magic,
    #[error("checkpoint: unsupported format version {0}")]
    Version(u16),
    #[error("checkpoint: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint: truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint: {0}")]
    Corrupt(String),
    #[error("{path}:{line}: {reason}")]
    Config { path: String, line: usize, reason: String },
    #[error("manifest {path}:{line}: {source}")]
    Manifest {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Engine(#[from] uxnet_core::Error),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::File {
            path: path.into(),
            source,
        }
    }
}
