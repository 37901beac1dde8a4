use crate::relmat::EntityKind;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("entity kind mismatch: left columns are `{left}`, right rows are `{right}`")]
    KindMismatch { left: EntityKind, right: EntityKind },

    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("index {index} out of bounds for {what} of size {size}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("requested {requested} parts for {available} nodes")]
    TooManyParts { requested: usize, available: usize },

    #[error("relation is not a partition: {0}")]
    NotAPartition(String),

    #[error("redistribution error: {0}")]
    Redistribution(String),

    #[error("interpolation conformity violated at fine truedof {truedof}: {existing} vs {incoming}")]
    Conformity {
        truedof: usize,
        existing: f64,
        incoming: f64,
    },

    #[error("singular local solve on agglomerate {agglomerate}: {detail}")]
    SingularLocalSolve { agglomerate: usize, detail: String },

    #[error("linear solver failed to converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("estimator error: {0}")]
    Estimator(String),

    #[error("sample {sample} at level {level} failed: {source}")]
    SampleFailed {
        level: usize,
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix market parse error at line {line}: {detail}")]
    MatrixMarket { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
