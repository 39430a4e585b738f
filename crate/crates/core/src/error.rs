use alloc::string::String;

use crate::dataset::{PartitionTag, SampleId};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample {id}: {reason}")]
    Sample { id: SampleId, reason: String },
    #[error("sample {id}: illegal partition transition {from:?} -> {to:?}")]
    Transition {
        id: SampleId,
        from: PartitionTag,
        to: PartitionTag,
    },
    #[error("unknown sample id {0}")]
    UnknownId(SampleId),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("no cluster centers")]
    NoClusterCenters,
    #[error("neighbour pool is empty")]
    NoNeighbors,
    #[error("both weight sums are zero")]
    DegenerateScores,
}

impl Error {
    pub(crate) fn sample(id: SampleId, reason: impl Into<String>) -> Self {
        Error::Sample {
            id,
            reason: reason.into(),
        }
    }
}
