use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration invariant was violated; the payload names it.
    #[error("invalid config: {0}")]
    Config(&'static str),

    #[error("invalid mixture spec: {0}")]
    Spec(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("hit counts sum to {hits} but the batch has {positions} positions")]
    CountMismatch { hits: u64, positions: usize },

    #[error("class id {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("aggregation mode {0} requires equal level dims")]
    UnequalLevels(&'static str),

    #[error("no labeled entries")]
    NoLabeledEntries,

    #[error("all guided slices have zero norm")]
    AllZeroNorm,

    #[error("fewer than two clusters")]
    TooFewClusters,

    #[error("empty window")]
    EmptyWindow,

    #[error("no eligible positions")]
    NoEligiblePositions,

    #[error("version mismatch: found {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: &'static str },

    #[error("truncated stream")]
    Truncated,

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed stream: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
