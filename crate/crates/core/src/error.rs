use std::path::PathBuf;

use thiserror::Error;

use crate::graph::{NodeId, Relation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {record}: node {node} is not declared")]
    DanglingReference { record: usize, node: NodeId },

    #[error("record {record}: relation {relation} cannot connect {src} to {dst}")]
    RelationSignature {
        record: usize,
        relation: Relation,
        src: NodeId,
        dst: NodeId,
    },

    #[error("record {record}: feature dimension {found} does not match {expected}")]
    FeatureDimension {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("node {0} has no feature vector")]
    MissingFeatures(NodeId),

    #[error("node {0} is declared twice")]
    DuplicateNode(NodeId),

    #[error("{kind} indices are not dense: index {missing} is missing")]
    SparseIndices { kind: String, missing: usize },

    #[error("node {0} carries no split tag")]
    Untagged(NodeId),

    #[error("node {0} is not a user")]
    NotAUser(NodeId),

    #[error("labels may only attach to sources; source {0} does not exist")]
    LabelTarget(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("llm backend error for {context}: {message}")]
    Llm { context: String, message: String },

    #[error("unknown or closed validation {0}")]
    UnknownValidation(u64),

    #[error("validation {0} was already decided differently")]
    Conflict(u64),

    #[error("unknown community {0}")]
    UnknownCommunity(u64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the CLI and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DanglingReference { .. } => "dangling_reference",
            Error::RelationSignature { .. } => "relation_signature",
            Error::FeatureDimension { .. } => "feature_dimension",
            Error::MissingFeatures(_) => "missing_features",
            Error::DuplicateNode(_) => "duplicate_node",
            Error::SparseIndices { .. } => "sparse_indices",
            Error::Untagged(_) => "untagged_node",
            Error::NotAUser(_) => "not_a_user",
            Error::LabelTarget(_) => "label_target",
            Error::NonFinite(_) => "non_finite",
            Error::Parse { .. } => "parse_error",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Precondition(_) => "precondition",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Llm { .. } => "llm_error",
            Error::UnknownValidation(_) => "unknown_validation",
            Error::Conflict(_) => "conflict",
            Error::UnknownCommunity(_) => "unknown_community",
            Error::Io { .. } => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}
