use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes of the toolkit.
///
/// Variants group into three families that the command line maps to exit
/// codes: usage errors (bad parameters), data errors (missing or malformed
/// inputs) and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing tensor for {what} (expected `{name}`, preset `{preset}`)")]
    MissingTensor { what: String, name: String, preset: String },

    #[error("shape mismatch for `{tensor}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{tensor}` has unsupported dtype {dtype}")]
    UnsupportedDtype { tensor: String, dtype: String },

    #[error("tensor `{tensor}` contains a non-finite value at flat index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("vocab/unembed mismatch: vocabulary has {vocab} tokens, unembed has {unembed} columns")]
    VocabMismatch { vocab: usize, unembed: usize },

    #[error("neuron {id} out of bounds (n_layers = {n_layers}, d_mlp = {d_mlp})")]
    NeuronOutOfBounds { id: String, n_layers: usize, d_mlp: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("cosine {value} lies outside [-1, 1] beyond rounding slack")]
    CosineOutOfRange { value: f64 },

    #[error("{0} is not available in the loaded model")]
    Unavailable(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("neuron universes differ: {0}")]
    UniverseMismatch(String),

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("safetensors: {0}")]
    SafeTensors(#[from] safetensors::SafeTensorError),
}

/// Exit-code family of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::UnknownPreset(_) => ErrorKind::Usage,
            Error::CosineOutOfRange { .. } | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
