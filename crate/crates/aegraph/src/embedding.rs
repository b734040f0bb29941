//! Fixed-dimension unit-norm embedding vectors and cosine similarity.

use crate::error::{Error, Result};

/// A unit-norm `f64` vector. Normalized once on construction; similarity is
/// then a plain dot product, which keeps `cosine(u, v)` exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit L2 norm. A zero or non-finite vector
    /// carries no direction and is rejected.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have at least one dimension"));
        }
        let norm_sq: f64 = values.iter().map(|x| x * x).sum();
        if !norm_sq.is_finite() || norm_sq == 0.0 {
            return Err(Error::invalid(format!(
                "embedding norm must be finite and nonzero (norm^2 = {norm_sq})"
            )));
        }
        let inv = 1.0 / norm_sq.sqrt();
        Ok(Embedding(values.into_iter().map(|x| x * inv).collect()))
    }

    /// Wraps values that are already unit-norm, without renormalizing.
    /// Snapshot loading uses this so stored floats round-trip bit-exactly.
    pub(crate) fn from_unit_values(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Cosine similarity. Both inputs are unit-norm, so this is the dot
    /// product, clamped to [-1, 1] against float drift.
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let dot: f64 = self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot.clamp(-1.0, 1.0))
    }
}
