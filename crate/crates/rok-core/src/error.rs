//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph loading, linking, path search, ranking, the LLM
/// gateway, and evaluation.
#[derive(Debug, Error)]
pub enum RokError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("graph is empty")]
    EmptyGraph,

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("path endpoints must differ, got '{0}' twice")]
    DegeneratePair(String),

    #[error("empty subgraph")]
    EmptySubgraph,

    #[error("missing binding for placeholder '{0}'")]
    MissingBinding(String),

    #[error("call budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("transport failure after {retries} retries: {msg}")]
    Transport { msg: String, retries: u32 },

    #[error("no scripted response for template '{template}' (prompt hash {hash})")]
    ScriptedGap { template: String, hash: String },

    #[error("entity '{0}' missing from PageRank scores")]
    MissingScore(String),

    #[error("no gold labels in any record")]
    NoGoldLabels,

    #[error("invalid config value for '{key}': {msg}")]
    Config { key: String, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RokError>;
