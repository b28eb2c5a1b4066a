use thiserror::Error;

use crate::instance::Genome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Branch and bound ran out of nodes; the incumbent is the best string
    /// seen so far but is not certified.
    #[error("node limit of {limit} exceeded after {nodes_expanded} nodes (incumbent {:.12})", incumbent.fitness_or_nan())]
    NodeLimit {
        limit: u64,
        nodes_expanded: u64,
        incumbent: Genome,
    },

    #[error("population size cap {cap} reached without 10/10 successes")]
    PopulationCap { cap: usize },

    #[error("instance set mismatch: {0}")]
    InstanceMismatch(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
