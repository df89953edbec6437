use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {what}")]
    InvalidShape { what: &'static str, shape: Vec<usize> },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("empty source sequence")]
    EmptySource,

    #[error("source length {len} exceeds maximum {max}")]
    SourceTooLong { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("refined attention collapsed: mass {mass:e} below 1e-12")]
    DegenerateGate { mass: f64 },

    #[error("median of an empty sequence")]
    EmptyMedian,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iteration}: mle={mle} local={local} global={global} total={total}")]
    NonFiniteLoss {
        iteration: usize,
        mle: f64,
        local: f64,
        global: f64,
        total: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
