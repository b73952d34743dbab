//! Multi-view retrieval over short analyst notes.
//!
//! Notes are organized in two self-organizing maps: one trained on text plus
//! entity embeddings, the other on entity plus concept embeddings. Queries are
//! routed through both maps, candidates from the neighborhoods of the two
//! best matching units are merged, and the union is ranked by a weighted
//! ticker / concept / semantic score.
//!
//! The crate also ships the synthetic corpus generator, the multi-hop question
//! generator and the benchmark harness used to compare the dual-map retriever
//! against single-view baselines.

pub mod cli;
pub mod embed;
pub mod error;
pub mod evalharness;
pub mod io;
pub mod model;
pub mod notegen;
pub mod retriever;
pub mod som;
pub mod synfaqa;
pub mod text;
pub mod universe;

pub use error::{Error, Result};
