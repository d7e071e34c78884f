use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: malformed row at line {line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}: channel {channel} at line {line} is outside 0..{n_channels}")]
    UnknownChannel {
        path: PathBuf,
        line: u64,
        channel: usize,
        n_channels: usize,
    },
    #[error("{path}: unknown ticket kind {kind:?} at line {line}")]
    UnknownKind {
        path: PathBuf,
        line: u64,
        kind: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no tickets in the training span")]
    NoTickets,
    #[error("no maintenance tickets in the training span")]
    NoMaintenanceTickets,
    #[error("timeline covers zero device-hours")]
    EmptySpan,
    #[error("no device has data in window ({start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error("partitions cover different device sets")]
    DeviceSetMismatch,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
