//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: [u8; 4],
        expected: [u8; 4],
    },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    BadVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid shape in {context}: {detail}")]
    Shape { context: String, detail: String },

    #[error("need at least {needed} frames to train {clusters} clusters, got {got}")]
    TooFewFrames {
        needed: usize,
        clusters: usize,
        got: usize,
    },

    #[error("unit id {unit} out of range (alphabet size {alphabet})")]
    UnitOutOfRange { unit: u32, alphabet: usize },

    #[error("invalid time span [{start}, {end}): {detail}")]
    InvalidSpan {
        start: f64,
        end: f64,
        detail: String,
    },

    #[error("span outside sequence: {detail}")]
    SpanOutOfRange { detail: String },

    #[error("index span ({start}, {end}) out of range for sequence of {len} units")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("reference word sequence is empty")]
    EmptyReference,

    #[error("predictions without matching gold ids: {ids:?}")]
    IdMismatch { ids: Vec<String> },

    #[error("manifest {path} line {line}: {detail}")]
    Manifest {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("referenced file missing: {path}")]
    MissingFile { path: PathBuf },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("question of {len} units exceeds budget of {budget} (max_len minus special tokens)")]
    QuestionTooLong { len: usize, budget: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint is missing tensor {name:?}")]
    MissingTensor { name: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
