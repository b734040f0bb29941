//! Exact nearest-neighbor index: brute-force cosine over every stored
//! vector. At the scale this engine targets, exactness is worth more than
//! sublinear lookup, and it keeps retrieval rankings reproducible.

use crate::embedding::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<K> {
    pub id: K,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct VectorIndex<K: Ord + Clone> {
    dimension: usize,
    items: Vec<(K, Embedding)>, // sorted by id
}

impl<K: Ord + Clone + std::fmt::Debug> VectorIndex<K> {
    pub fn new(dimension: usize) -> Self {
        VectorIndex {
            dimension,
            items: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn add(&mut self, id: K, embedding: Embedding) -> Result<()> {
        if embedding.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: embedding.dim(),
            });
        }
        match self.items.binary_search_by(|(k, _)| k.cmp(&id)) {
            Ok(_) => Err(Error::invalid(format!("duplicate index id {id:?}"))),
            Err(pos) => {
                self.items.insert(pos, (id, embedding));
                Ok(())
            }
        }
    }

    pub fn get(&self, id: &K) -> Option<&Embedding> {
        self.items
            .binary_search_by(|(k, _)| k.cmp(id))
            .ok()
            .map(|i| &self.items[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Embedding)> {
        self.items.iter().map(|(k, e)| (k, e))
    }

    /// The k most similar stored items, descending by cosine, ties broken
    /// by ascending id. Returns exactly `min(k, len)` hits.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<Hit<K>>> {
        if k == 0 {
            return Err(Error::invalid("top_k requires k >= 1"));
        }
        if self.items.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: query.dim(),
            });
        }
        let mut hits: Vec<Hit<K>> = Vec::with_capacity(self.items.len());
        for (id, emb) in &self.items {
            hits.push(Hit {
                id: id.clone(),
                score: query.cosine(emb)?,
            });
        }
        // Scores are clamped to [-1, 1] so total order is safe.
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite scores")
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k.min(hits.len()));
        Ok(hits)
    }
}
