use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("source placement failed after {attempts} attempts")]
    PlacementFailure { attempts: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("image count {count} exceeds budget {budget}")]
    BudgetExceeded { count: u64, budget: u64 },
    #[error("buffer of {length} samples is too short for a delay of {needed} samples")]
    LengthTooShort { length: usize, needed: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("input is silent")]
    SilentInput,
    #[error("energy decay curve never reaches {target_db} dB")]
    InsufficientDecay { target_db: f64 },
    #[error("input shorter than {needed} samples (got {got})")]
    TooShort { needed: usize, got: usize },
    #[error("noise chunk has zero power")]
    ZeroNoise,
    #[error("speech chunk has zero power")]
    ZeroSpeech,
    #[error("reference signal is silent")]
    SilentReference,
    #[error("reflections have no emission directions; run emission_directions first")]
    MissingEmissionDirections,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid directivity data: {0}")]
    InvalidDirectivity(String),
    #[error("output directory {path} is not writable: {source}")]
    OutDirUnwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("audio file {path}: {message}")]
    Audio { path: PathBuf, message: String },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("injected failure for {0}")]
    Injected(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
