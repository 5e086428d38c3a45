//! Reranking of summary candidate pools by consensus over pseudo-references
//! combined with source consistency, and the evaluation harness around it.
//!
//! The usual flow is [`pool::load_pools`], then [`pipeline::Reranker`] to score
//! and select, then the [`eval`] module for corpus-level reports.

pub mod config;
pub mod eval;
pub mod lexical;
pub mod mbr;
pub mod pipeline;
pub mod pool;
pub mod rerank;
pub mod scorer;

pub use config::RerankConfig;
pub use pipeline::Reranker;
pub use pool::{CandidatePool, Corpus};
pub use rerank::{RerankResult, ScoreTable};
