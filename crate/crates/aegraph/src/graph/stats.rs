//! Structural statistics over a frozen graph. Degree and clustering are
//! computed on the simple undirected projection: every edge family
//! collapsed to unweighted node pairs, parallel edges deduplicated.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AtomEntityGraph;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_entities: usize,
    pub num_atoms: usize,
    pub num_edges: usize,
    pub num_containment: usize,
    pub num_relevance: usize,
    pub num_synonym: usize,
    pub avg_degree: f64,
    pub avg_clustering: f64,
}

pub fn compute_stats(graph: &AtomEntityGraph) -> Result<GraphStats> {
    if !graph.is_frozen() {
        return Err(Error::NotFrozen("compute_stats"));
    }
    let compiled = graph.compiled()?;
    let n = compiled.num_nodes();

    // Distinct unordered pairs across all families. A pair carrying both a
    // relevance and a synonym edge counts once here.
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut insert = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    for (atom, entity) in graph.containment_edges() {
        insert(
            compiled.atom_node(atom).expect("atom indexed"),
            compiled.entity_node(entity).expect("entity indexed"),
        );
    }
    for ((a, b), _) in graph.relevance_edges() {
        insert(
            compiled.entity_node(a).expect("entity indexed"),
            compiled.entity_node(b).expect("entity indexed"),
        );
    }
    for ((a, b), _) in graph.synonym_edges() {
        insert(
            compiled.entity_node(a).expect("entity indexed"),
            compiled.entity_node(b).expect("entity indexed"),
        );
    }

    let mut neighbors: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in &pairs {
        neighbors.entry(a).or_default().insert(b);
        neighbors.entry(b).or_default().insert(a);
    }

    let avg_degree = if n == 0 {
        0.0
    } else {
        2.0 * pairs.len() as f64 / n as f64
    };

    let mut clustering_sum = 0.0;
    for v in 0..n {
        let Some(nbrs) = neighbors.get(&v) else {
            continue; // isolated, contributes 0
        };
        let deg = nbrs.len();
        if deg < 2 {
            continue;
        }
        let mut closed = 0usize;
        let list: Vec<usize> = nbrs.iter().copied().collect();
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                if neighbors[&list[i]].contains(&list[j]) {
                    closed += 1;
                }
            }
        }
        clustering_sum += 2.0 * closed as f64 / (deg * (deg - 1)) as f64;
    }
    let avg_clustering = if n == 0 { 0.0 } else { clustering_sum / n as f64 };

    Ok(GraphStats {
        num_nodes: n,
        num_entities: compiled.num_entities(),
        num_atoms: compiled.num_atoms(),
        num_edges: pairs.len(),
        num_containment: graph.containment_edges().count(),
        num_relevance: graph.relevance_edges().count(),
        num_synonym: graph.synonym_edges().count(),
        avg_degree,
        avg_clustering,
    })
}
