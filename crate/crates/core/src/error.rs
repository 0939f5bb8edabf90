use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no test records")]
    NoTestRecords,
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unknown class {class:?} in document {id:?}")]
    UnknownClass { id: String, class: String },
    #[error("embedding dimension mismatch in document {id:?}: expected {expected}, found {found}")]
    EmbeddingDimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("embeddings must be present on all test records or on none")]
    PartialEmbeddings,
    #[error("min_df too high: vocabulary is empty")]
    EmptyVocabulary,
    #[error("insufficient data for bucketing: {0} values, need at least 10")]
    InsufficientData(usize),
    #[error("feature {0:?} is missing for some test records")]
    MissingFeature(String),
    #[error("unknown high-level feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown class {0:?}")]
    UnknownClassName(String),
    #[error("unknown concept id {0}")]
    UnknownConcept(u32),
    #[error("concept name {0:?} already exists")]
    DuplicateConcept(String),
    #[error("invalid concept: {0}")]
    InvalidConcept(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("empty subpopulation")]
    EmptySubpopulation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projection needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}
