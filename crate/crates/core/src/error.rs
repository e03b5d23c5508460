use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty graph")]
    EmptyGraph,

    #[error("adjacency is not symmetric: edge ({0}, {1}) has no reverse")]
    AsymmetricAdjacency(usize, usize),

    #[error("node id {id} out of range (n = {n})")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error(
        "graph has {n} nodes, above the dense cap {cap}: use the iterative operator"
    )]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("class {class} has only {found} visible nodes, need {need}")]
    NotEnoughLabeled {
        class: usize,
        found: usize,
        need: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("no recorded propagation trace for adjoint")]
    MissingTrace,

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("count mismatch in {path}: {msg}")]
    CountMismatch { path: String, msg: String },

    #[error("missing results for model tag '{0}'")]
    MissingTag(String),

    #[error("result sets are not paired: {0}")]
    Unpaired(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
