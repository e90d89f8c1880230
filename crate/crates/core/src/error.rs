use std::path::PathBuf;

/// Every failure the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unit or joint-set mismatch: {0}")]
    UnitMismatch(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("Procrustes alignment needs at least 3 joints, got {0}")]
    InsufficientJoints(usize),
    #[error("source pose is degenerate (centered norm {0:e})")]
    DegenerateSource(f64),
    #[error("invalid pose sequence: {0}")]
    InvalidSequence(String),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no overlapping sample ids")]
    NoOverlap,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all effective ensemble weights are zero")]
    ZeroWeight,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("label {0} out of range")]
    Label(i64),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
