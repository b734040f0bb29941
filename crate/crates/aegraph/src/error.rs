//! Crate-wide error type. Variants are grouped by subsystem; all carry
//! enough context to identify the offending input without a backtrace.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty text cannot be encoded")]
    EmptyText,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector index is empty")]
    EmptyIndex,

    #[error("graph error: {0}")]
    Graph(String),

    #[error("graph is not frozen; call freeze() before {0}")]
    NotFrozen(&'static str),

    #[error("graph is frozen; {0} is no longer permitted")]
    Frozen(&'static str),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),

    #[error("unbound placeholder `{placeholder}` in template `{template}`")]
    UnboundPlaceholder { template: String, placeholder: String },

    #[error("mock fixture miss for template `{template}` (bindings hash {hash:#018x}; keys: {keys})")]
    FixtureMiss {
        template: String,
        hash: u64,
        keys: String,
    },

    #[error("backend authentication rejected (status {status}); not retried")]
    Auth { status: u16 },

    #[error("backend request failed after {attempts} attempts: {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("schema violation in `{template}` payload: {violation}")]
    Schema { template: String, violation: String },

    #[error("extraction failed for {scope}: {reason}")]
    Extraction { scope: String, reason: String },

    #[error("corpus build failed: all {total} documents failed; first error: {first}")]
    BuildAllFailed { total: usize, first: String },

    #[error("corpus build produced an empty graph")]
    EmptyBuild,

    #[error("propagation did not converge after {iterations} iterations (residual {residual:.3e}, tol {tol:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("personalization vector has no seed mass and no fallback candidates")]
    NoSeedMass,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
