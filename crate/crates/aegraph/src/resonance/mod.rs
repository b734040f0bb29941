//! Query-time scoring. A query embedding seeds a personalization
//! distribution over graph nodes (dense atom hits plus entity matches),
//! and one of six propagation strategies spreads that mass along the
//! containment, relevance, and synonym edges. Atom scores are read
//! straight off the resulting distribution.

mod solver;
mod strategies;

pub use solver::{power_iteration, ppr, ppr_with_observer, PprOutcome, PprParams};
pub use strategies::{
    katz, label_propagation, rwr, weighted_bfs, BfsParams, KatzParams, LabelPropParams, RwrParams,
};

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::graph::{AtomEntityGraph, AtomId, CompiledGraph};
use crate::index::VectorIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Ppr,
    PowerIteration,
    Rwr,
    Katz,
    LabelPropagation,
    WeightedBfs,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Ppr,
        Strategy::PowerIteration,
        Strategy::Rwr,
        Strategy::Katz,
        Strategy::LabelPropagation,
        Strategy::WeightedBfs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Ppr => "ppr",
            Strategy::PowerIteration => "power_iteration",
            Strategy::Rwr => "rwr",
            Strategy::Katz => "katz",
            Strategy::LabelPropagation => "label_propagation",
            Strategy::WeightedBfs => "weighted_bfs",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        for strategy in Strategy::ALL {
            if s == strategy.as_str() {
                return Ok(strategy);
            }
        }
        Err(Error::invalid(format!(
            "unknown propagation strategy `{s}`; expected one of ppr, power_iteration, rwr, \
             katz, label_propagation, weighted_bfs"
        )))
    }
}

/// Every knob any strategy needs, so callers configure once and switch
/// strategies freely.
#[derive(Debug, Clone, Copy)]
pub struct PropagationParams {
    pub restart: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub num_walks: usize,
    pub walk_length: usize,
    pub num_iter: usize,
    pub katz_decay: f64,
    pub bfs_decay: f64,
    pub bfs_max_hops: usize,
    pub rng_seed: u64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            restart: 0.3,
            tol: 1e-8,
            max_iter: 1000,
            num_walks: 1000,
            walk_length: 10,
            num_iter: 20,
            katz_decay: 0.1,
            bfs_decay: 0.5,
            bfs_max_hops: 3,
            rng_seed: 42,
        }
    }
}

pub fn propagate(
    strategy: Strategy,
    adj: &crate::graph::Adjacency,
    pi: &[f64],
    params: &PropagationParams,
) -> Result<Vec<f64>> {
    match strategy {
        Strategy::Ppr => {
            let p = PprParams {
                restart: params.restart,
                tol: params.tol,
                max_iter: params.max_iter,
            };
            Ok(ppr(adj, pi, &p)?.scores)
        }
        Strategy::PowerIteration => {
            let p = PprParams {
                restart: params.restart,
                tol: params.tol,
                max_iter: params.max_iter,
            };
            Ok(power_iteration(adj, pi, &p)?.scores)
        }
        Strategy::Rwr => rwr(
            adj,
            pi,
            &RwrParams {
                restart: params.restart,
                num_walks: params.num_walks,
                walk_length: params.walk_length,
                seed: params.rng_seed,
            },
        ),
        Strategy::Katz => katz(
            adj,
            pi,
            &KatzParams {
                decay: params.katz_decay,
                max_len: params.max_iter,
                tol: params.tol,
            },
        ),
        Strategy::LabelPropagation => label_propagation(
            adj,
            pi,
            &LabelPropParams {
                num_iter: params.num_iter,
            },
        ),
        Strategy::WeightedBfs => weighted_bfs(
            adj,
            pi,
            &BfsParams {
                decay: params.bfs_decay,
                max_hops: params.bfs_max_hops,
            },
        ),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeedParams {
    /// Scales atom seeds relative to entity seeds before normalization.
    pub atom_seed_weight: f64,
    pub atom_top_k: usize,
    pub entity_top_k: usize,
    pub entity_sim_threshold: f64,
    pub entity_seed_weight: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            atom_seed_weight: 0.1,
            atom_top_k: 25,
            entity_top_k: 20,
            entity_sim_threshold: 0.3,
            entity_seed_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    Atom,
    Entity,
}

#[derive(Debug, Clone)]
pub struct SeedEntry {
    pub node: usize,
    /// Normalized probability mass.
    pub mass: f64,
    /// Raw cosine similarity that earned this seed.
    pub similarity: f64,
    pub kind: SeedKind,
}

/// Sparse personalization distribution over compiled node indices.
/// Entries are sorted by node and the masses sum to 1.
#[derive(Debug, Clone)]
pub struct PersonalizationVector {
    entries: Vec<SeedEntry>,
    num_nodes: usize,
    /// True when no seed had positive mass and the vector fell back to
    /// uniform over the dense atom hits.
    pub fallback_uniform: bool,
}

impl PersonalizationVector {
    pub fn entries(&self) -> &[SeedEntry] {
        &self.entries
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut pi = vec![0.0f64; self.num_nodes];
        for e in &self.entries {
            pi[e.node] = e.mass;
        }
        pi
    }
}

/// Build the personalization vector for one query embedding.
///
/// Atom seeds come from the dense index: the top `atom_top_k` hits with
/// strictly positive similarity, scaled by `atom_seed_weight`. Entity
/// seeds come from exact similarity against every entity embedding: up
/// to `entity_top_k` entities at or above `entity_sim_threshold`, scaled
/// by `entity_seed_weight`. The combined mass is normalized to 1. If
/// nothing qualifies, falls back to uniform over the dense atom hits
/// (sign ignored) with a warning; with no atom hits at all this is an
/// error.
pub fn seed(
    query: &Embedding,
    graph: &AtomEntityGraph,
    atom_index: &VectorIndex<AtomId>,
    params: &SeedParams,
) -> Result<PersonalizationVector> {
    let compiled = graph.compiled()?;
    let atom_hits = if params.atom_top_k == 0 || atom_index.is_empty() {
        Vec::new()
    } else {
        atom_index.top_k(query, params.atom_top_k)?
    };

    let mut entries: Vec<SeedEntry> = Vec::new();
    for hit in &atom_hits {
        if hit.score <= 0.0 {
            continue;
        }
        let node = compiled.atom_node(&hit.id).ok_or_else(|| {
            Error::graph(format!("atom index hit `{}` is not in the graph", hit.id.as_str()))
        })?;
        entries.push(SeedEntry {
            node,
            mass: params.atom_seed_weight * hit.score,
            similarity: hit.score,
            kind: SeedKind::Atom,
        });
    }

    // Exact scan over entity embeddings; ties break toward the smaller id
    // to keep selection deterministic.
    let mut entity_sims: Vec<(f64, &crate::graph::EntityId)> = Vec::new();
    for entity in graph.entities() {
        let sim = query.cosine(&entity.embedding)?;
        if sim >= params.entity_sim_threshold && sim > 0.0 {
            entity_sims.push((sim, &entity.id));
        }
    }
    entity_sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    entity_sims.truncate(params.entity_top_k);
    for (sim, id) in entity_sims {
        let node = compiled
            .entity_node(id)
            .expect("entity iterated from the graph is compiled");
        entries.push(SeedEntry {
            node,
            mass: params.entity_seed_weight * sim,
            similarity: sim,
            kind: SeedKind::Entity,
        });
    }

    let total: f64 = entries.iter().map(|e| e.mass).sum();
    let fallback_uniform = if total > 0.0 {
        for e in entries.iter_mut() {
            e.mass /= total;
        }
        false
    } else {
        if atom_hits.is_empty() {
            return Err(Error::NoSeedMass);
        }
        warn!(
            "query matched nothing with positive similarity; seeding uniformly over {} atom hits",
            atom_hits.len()
        );
        let share = 1.0 / atom_hits.len() as f64;
        entries = atom_hits
            .iter()
            .map(|hit| {
                let node = compiled
                    .atom_node(&hit.id)
                    .expect("atom hit resolved above");
                SeedEntry {
                    node,
                    mass: share,
                    similarity: hit.score,
                    kind: SeedKind::Atom,
                }
            })
            .collect();
        true
    };

    entries.sort_by_key(|e| e.node);
    let vector = PersonalizationVector {
        entries,
        num_nodes: compiled.num_nodes(),
        fallback_uniform,
    };
    debug_assert!((vector.mass() - 1.0).abs() <= 1e-9);
    Ok(vector)
}

/// Project a node score vector down to atoms, in ascending atom id order.
/// Scores are not renormalized: an atom's retrieval score is exactly its
/// share of the propagated distribution.
pub fn atom_scores(scores: &[f64], compiled: &CompiledGraph) -> Vec<(AtomId, f64)> {
    compiled
        .atom_nodes()
        .map(|node| {
            let id = compiled.atom_id_of(node).expect("node in atom range");
            (id.clone(), scores[node])
        })
        .collect()
}
