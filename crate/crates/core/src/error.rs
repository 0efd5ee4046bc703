use std::path::PathBuf;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },

    #[error("too few points for k-NN: n = {n}, k = {k}")]
    TooFewPoints { n: usize, k: usize },

    #[error("sequence length {got} does not match switch model (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no threshold satisfies FPR < {0}")]
    NoFeasibleThreshold(f64),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("attack success rate {rate:.3} below required {required:.2}")]
    AttackFailed { rate: f64, required: f64 },

    #[error("C&W attack requires a target label")]
    NoTargetGiven,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("bad magic in {what}: {found:02x?}")]
    BadMagic { what: &'static str, found: Vec<u8> },

    #[error("truncated file: {0}")]
    TruncatedFile(&'static str),

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
