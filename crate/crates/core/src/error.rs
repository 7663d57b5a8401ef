use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("utterance has {len} samples, fewer than the analysis window of {win}")]
    UtteranceTooShort { len: usize, win: usize },
    #[error("waveform contains non-finite samples")]
    NonFiniteInput,
    #[error("waveform sample rate {found} Hz does not match the analysis rate {expected} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frequency bin count differs across batch items ({expected} vs {found})")]
    InconsistentBinCount { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel {channel} component {component} has {count} valid positions; batch statistics need at least 2")]
    DegenerateBatch {
        channel: usize,
        component: usize,
        count: usize,
    },
    #[error("backward pass has no forward cache for {0}")]
    MissingForwardCache(String),
    #[error("sequence has no valid frames")]
    EmptySequence,
    #[error("projection collapsed to a zero vector")]
    ZeroProjection,
    #[error("temperature must be positive, got {0}")]
    TemperatureNonPositive(f64),
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("format error: {0}")]
    Format(String),
    #[error("non-finite values in `{0}`")]
    NonFiniteData(String),
    #[error("container version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
