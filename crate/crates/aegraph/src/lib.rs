pub mod config;
pub mod decomposer;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod gateway;
pub mod graph;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod resonance;
pub mod sieve;
pub mod text;
pub mod theory;

pub use embedding::Embedding;
pub use encoder::{NgramHashEncoder, RemoteEncoder, TextEncoder};
pub use error::{Error, Result};
pub use graph::{AtomEntityGraph, AtomId, DocId, EntityId};
pub use index::{Hit, VectorIndex};
pub use resonance::Strategy;
