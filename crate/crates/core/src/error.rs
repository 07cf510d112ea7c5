use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid sampling mask: {0}")]
    InvalidMask(String),

    #[error("invalid sensitivity maps: {0}")]
    InvalidMaps(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("timestep {t} out of range 0..={t_max}")]
    TimestepOutOfRange { t: usize, t_max: usize },

    #[error("empty corpus: spectrum estimation needs at least one image")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {msg}")]
    FileFormat { path: PathBuf, msg: String },

    #[error("zero reference image: NRMSE undefined")]
    ZeroReference,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;
