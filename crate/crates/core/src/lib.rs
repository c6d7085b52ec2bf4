//! Detection and analysis of repeated and cross-lingual fact-checked claims.
//!
//! The crate takes fact-check records (ClaimReview-style JSON lines), cleans
//! them, attaches sentence embeddings, links claims whose cosine similarity
//! clears a threshold and reads the connected components of that graph as
//! claim clusters. On top of the clustering it runs the analysis suite:
//!
//! - [`eval`]: intra-cluster variance, inter-cluster centroid distance and
//!   verdict consistency across a threshold sweep
//! - [`homophily`]: mono/multi-lingual cluster composition against a
//!   language-resampling null model, and language-family sharing
//! - [`temporal`]: time-difference CDFs and similarity drift of unconnected pairs
//! - [`paths`]: most dissimilar member pairs, shortest paths between them and
//!   the similarity regressions on path length and language mixing
//! - [`tokens`]: relative noun-token frequencies between cluster conditions
//!
//! [`pipeline`] wires the stages together with file-based handoffs; the
//! `claimgraph` binary is a thin wrapper around it.

pub mod ann;
pub mod config;
pub mod embed_store;
mod error;
pub mod eval;
pub mod graph;
pub mod homophily;
pub mod ingest;
pub mod paths;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod temporal;
pub mod tokens;

pub use ann::{HyperplaneIndex, IndexParams, NeighborHit};
pub use config::PipelineConfig;
pub use embed_store::EmbeddingStore;
pub use error::{Error, Result};
pub use graph::{Cluster, ClusterStats, SimilarityGraph};
pub use ingest::{FactCheckRecord, RawRecord};

/// Stable identifier of a fact-check record.
pub type RecordId = u64;
