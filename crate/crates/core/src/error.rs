use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("backward source must be a scalar, got shape {0:?}")]
    NonScalar(Vec<usize>),

    #[error("node {0} does not exist in this graph")]
    UnknownNode(usize),

    #[error("node {0} is not a leaf and cannot be rebound")]
    NotALeaf(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown op kind `{0}`")]
    UnknownOp(String),

    #[error("generator hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("training diverged at iteration {iteration}: {what} is not finite")]
    Diverged { iteration: u64, what: String },

    #[error("bad magic in {0}")]
    BadMagic(String),

    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
