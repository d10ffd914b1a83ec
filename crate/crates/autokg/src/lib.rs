//! Automatic knowledge-graph construction for Bangla text.
//!
//! The pipeline has two phases. Construction turns raw text into a base
//! graph: entity extraction (rule-based, recorded fixture, or an external
//! LLM service), dictionary-informed node features from a pluggable
//! embedding provider, and co-occurrence/type/relation edges. Refinement
//! then denoises features with a self-supervised attention layer, extracts
//! topological and local spectral relations, fuses them with an attention
//! convolution, and prunes low-similarity edges. Graph quality is scored
//! with A-SFAS, the mean cosine similarity across connected node pairs.

pub mod bench;
pub mod config;
pub mod embed;
pub mod error;
pub mod export;
pub mod extract;
pub mod filter;
pub mod gnn;
pub mod graph;
mod hash;
pub mod llm;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeProvenance, Entity, FeatureMatrix, KnowledgeGraph, Stage};
pub use hash::derive_seed;
