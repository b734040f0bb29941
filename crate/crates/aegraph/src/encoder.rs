//! Text encoders. The default is a deterministic hashed character-n-gram
//! encoder used for tests and offline runs; a remote HTTP encoder covers
//! real embedding services.

use serde::Deserialize;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::text;

pub trait TextEncoder: Send + Sync {
    fn dimension(&self) -> usize;

    /// Encodes a batch of texts into unit-norm embeddings, one per input,
    /// in input order. Any empty (or whitespace-only) text is an error:
    /// a zero-information vector has no direction.
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>>;

    fn encode(&self, text: &str) -> Result<Embedding> {
        let mut batch = self.encode_batch(&[text])?;
        Ok(batch.pop().expect("batch of one"))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic bag-of-character-n-grams encoder. Each n-gram (n = 1..=3
/// over the case-folded, whitespace-collapsed text) is hashed into one of
/// `dimension` buckets with a hash-derived sign, and the bucket sums are
/// L2-normalized. Same seed, same text, same bits, on every platform.
#[derive(Debug, Clone)]
pub struct NgramHashEncoder {
    dimension: usize,
    seed: u64,
}

impl NgramHashEncoder {
    pub const DEFAULT_DIMENSION: usize = 64;
    pub const DEFAULT_SEED: u64 = 0x5eed_a70e;

    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("encoder dimension must be positive"));
        }
        Ok(NgramHashEncoder { dimension, seed })
    }

    fn encode_one(&self, raw: &str) -> Result<Embedding> {
        let normalized = text::normalize(raw);
        if normalized.is_empty() {
            return Err(Error::EmptyText);
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut buckets = vec![0.0_f64; self.dimension];
        let mut gram = String::new();
        for n in 1..=3usize.min(chars.len()) {
            for window in chars.windows(n) {
                gram.clear();
                gram.extend(window.iter());
                let h = fnv1a(self.seed.wrapping_add(n as u64), gram.as_bytes());
                let bucket = (h % self.dimension as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                buckets[bucket] += sign;
            }
        }
        Embedding::unit(buckets)
    }
}

impl Default for NgramHashEncoder {
    fn default() -> Self {
        NgramHashEncoder {
            dimension: Self::DEFAULT_DIMENSION,
            seed: Self::DEFAULT_SEED,
        }
    }
}

impl TextEncoder for NgramHashEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.encode_one(t)).collect()
    }
}

/// Remote embedding service: POST {"inputs": [...]} to a single endpoint,
/// expect {"embeddings": [[f64; D], ...]} of equal length. Responses are
/// normalized on receipt so downstream code sees the unit-norm invariant.
pub struct RemoteEncoder {
    endpoint: String,
    auth_token: Option<String>,
    batch_size: usize,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embeddings: Vec<Vec<f64>>,
}

impl RemoteEncoder {
    pub fn new(
        endpoint: impl Into<String>,
        auth_token: Option<String>,
        batch_size: usize,
        dimension: usize,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("encoder batch size must be positive"));
        }
        Ok(RemoteEncoder {
            endpoint: endpoint.into(),
            auth_token,
            batch_size,
            dimension,
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(60))
                .build(),
        })
    }

    fn request(&self, batch: &[&str]) -> Result<Vec<Embedding>> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.auth_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = req
            .send_json(serde_json::json!({ "inputs": batch }))
            .map_err(|e| match e {
                ureq::Error::Status(status, _) if status == 401 || status == 403 => {
                    Error::Auth { status }
                }
                other => Error::Transport {
                    attempts: 1,
                    reason: other.to_string(),
                },
            })?;
        let parsed: EmbeddingResponse = resp.into_json().map_err(|e| Error::Transport {
            attempts: 1,
            reason: format!("malformed embedding response: {e}"),
        })?;
        if parsed.embeddings.len() != batch.len() {
            return Err(Error::Transport {
                attempts: 1,
                reason: format!(
                    "embedding count {} does not match batch size {}",
                    parsed.embeddings.len(),
                    batch.len()
                ),
            });
        }
        parsed
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        got: v.len(),
                    });
                }
                Embedding::unit(v)
            })
            .collect()
    }
}

impl TextEncoder for RemoteEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        for t in texts {
            if t.trim().is_empty() {
                return Err(Error::EmptyText);
            }
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            out.extend(self.request(batch)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_across_instances() {
        let a = NgramHashEncoder::default();
        let b = NgramHashEncoder::default();
        let ea = a.encode("squamous cell carcinoma").unwrap();
        let eb = b.encode("squamous cell carcinoma").unwrap();
        assert_eq!(ea.as_slice(), eb.as_slice());
    }

    #[test]
    fn seed_changes_embedding() {
        let a = NgramHashEncoder::default();
        let b = NgramHashEncoder::new(64, 999).unwrap();
        let ea = a.encode("melanoma").unwrap();
        let eb = b.encode("melanoma").unwrap();
        assert_ne!(ea.as_slice(), eb.as_slice());
    }

    #[test]
    fn empty_text_rejected() {
        let enc = NgramHashEncoder::default();
        assert!(matches!(enc.encode(""), Err(Error::EmptyText)));
        assert!(matches!(enc.encode("   \t"), Err(Error::EmptyText)));
        let r = enc.encode_batch(&["fine", ""]);
        assert!(r.is_err());
    }

    #[test]
    fn output_is_unit_norm_at_dimension() {
        let enc = NgramHashEncoder::default();
        let e = enc.encode("ultraviolet radiation").unwrap();
        assert_eq!(e.dim(), 64);
        let norm: f64 = e.as_slice().iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_duplicates_score_higher_than_unrelated() {
        let enc = NgramHashEncoder::default();
        let a = enc.encode("basal cell carcinoma").unwrap();
        let b = enc.encode("basal-cell carcinoma").unwrap();
        let c = enc.encode("chronic renal failure").unwrap();
        let near = a.cosine(&b).unwrap();
        let far = a.cosine(&c).unwrap();
        assert!(near > far, "near {near} vs far {far}");
        assert!(near > 0.8, "near-duplicate pair should clear 0.8, got {near}");
    }

    #[test]
    fn case_and_spacing_are_folded() {
        let enc = NgramHashEncoder::default();
        let a = enc.encode("Basal  Cell Carcinoma").unwrap();
        let b = enc.encode("basal cell carcinoma").unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
