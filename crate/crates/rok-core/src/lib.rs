//! Reasoning-path retrieval over knowledge graphs.
//!
//! The crate turns a natural-language question into a small, high-relevance
//! set of knowledge-graph paths and feeds them to a chat LLM as background
//! knowledge:
//!
//! 1. [`llm`] — expand the question step by step and extract key entities
//!    (one or two calls, scripted or live),
//! 2. [`linker`] — resolve the extracted mentions against the graph's
//!    entity catalog,
//! 3. [`paths`] — enumerate multi-hop simple paths between the linked
//!    entities and collect the candidate subgraph,
//! 4. [`ranker`] — score subgraph nodes with PageRank and pick the top-k
//!    paths by key-entity count and average score,
//! 5. [`paths`] again — gather first-order neighbor triples of the key
//!    entities, pruned by the same-relation rule,
//! 6. [`pipeline`] — one batched LLM call filters the neighbor triples,
//!    a final call produces the answer; the whole run is recorded in an
//!    auditable transcript.
//!
//! Everything except the live HTTP backend is deterministic and runs
//! offline; [`llm::MockBackend`] replays scripted responses so the full
//! pipeline is testable without network access.

pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod linker;
pub mod llm;
pub mod paths;
pub mod pipeline;
pub mod ranker;

/// Scalar type used for scores throughout the pipeline (similarities,
/// PageRank values, metric rates). The numeric kernels in [`ranker`] are
/// generic over `num_traits::Float`; this alias is the concrete
/// instantiation everything else works with.
pub type Score = f64;

pub use error::{Result, RokError};
pub use kg::{EntityId, KnowledgeGraph, RelationId, Triple};
