use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by any layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or code shapes do not line up for the requested operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Batch normalization in train mode needs at least two rows.
    #[error("batchnorm train mode needs a batch of at least 2 rows, got {rows}")]
    DegenerateBatch { rows: usize },

    /// Inference-mode batch normalization was asked to run before any
    /// training step populated the running statistics.
    #[error("batchnorm running statistics are unpopulated; run at least one train-mode step first")]
    UnpopulatedStats,

    /// A gradient buffer contained NaN or infinity when an update was applied.
    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },

    /// An input violated a documented value-range or structural contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is outside its allowed range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller-supplied argument is invalid for the operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A text input (GloVe table, config file) failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A binary or text artifact is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Two rows were ingested under the same id.
    #[error("duplicate id {0} during ingestion")]
    DuplicateId(u64),

    /// Training loss left the finite, bounded regime.
    #[error("training diverged at iteration {iteration}: total loss {loss}")]
    Divergence { iteration: u64, loss: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
