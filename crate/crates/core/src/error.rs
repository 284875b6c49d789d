use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("output must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("node {0} is not part of this graph")]
    UnknownNode(usize),
    #[error("input gradients require a higher-order graph")]
    FirstOrderGraph,
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("run diverged at step {step} in {phase} phase: {detail}")]
    Diverged {
        step: u64,
        phase: &'static str,
        detail: String,
    },
    #[error("checkpoint parse error on line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
