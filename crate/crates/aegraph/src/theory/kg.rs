//! Embedding of predicate-labeled knowledge graphs into the atom form and
//! back. One atom per triple, carrying the triple's endpoints as its entity
//! set; parsing the atom texts recovers the original triple set exactly.
//! The reverse direction is lossy: atoms that share a relational core but
//! differ in context collapse to a single typed edge.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::graph::{AtomEntityGraph, AtomId, AtomInput, DocExtraction, DocId, EntityInput, TripleInput};

/// Embedding dimension for the structural embedding. Similarity is never
/// consulted here; every node gets the same placeholder direction.
const STRUCTURAL_DIM: usize = 2;

/// A predicate-labeled KG reduced to what matters for representability: its
/// set of (head, relation, tail) triples. Set semantics, so duplicates
/// collapse on insertion.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PredicateKg {
    pub triples: BTreeSet<(String, String, String)>,
}

impl PredicateKg {
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) {
        self.triples
            .insert((head.to_string(), relation.to_string(), tail.to_string()));
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

fn placeholder_embedding() -> Embedding {
    Embedding::unit(vec![1.0, 0.0]).expect("constant placeholder is a valid direction")
}

/// Builds the atom-form graph for a predicate KG: one atom per triple whose
/// text is the tab-joined triple and whose entity set is {head, tail}. Tab
/// is the field delimiter, so names must not contain it.
pub fn kg_to_graph(kg: &PredicateKg) -> Result<AtomEntityGraph> {
    let mut graph = AtomEntityGraph::new(STRUCTURAL_DIM);
    if kg.is_empty() {
        return Ok(graph);
    }

    let mut entity_names: BTreeSet<&str> = BTreeSet::new();
    for (head, relation, tail) in &kg.triples {
        for field in [head, relation, tail] {
            if field.contains('\t') || field.contains('\n') {
                return Err(Error::invalid(format!(
                    "name {field:?} contains the field delimiter"
                )));
            }
        }
        entity_names.insert(head);
        entity_names.insert(tail);
    }

    let embedding = placeholder_embedding();
    let entities = entity_names
        .into_iter()
        .map(|name| EntityInput {
            name: name.to_string(),
            embedding: embedding.clone(),
        })
        .collect();
    let atoms = kg
        .triples
        .iter()
        .enumerate()
        .map(|(i, (head, relation, tail))| {
            let mut names = vec![head.clone()];
            if tail != head {
                names.push(tail.clone());
            }
            AtomInput {
                id: AtomId::from(format!("kg/t{i}")),
                text: format!("{head}\t{relation}\t{tail}"),
                span_hint: None,
                entity_names: names,
                embedding: embedding.clone(),
            }
        })
        .collect();

    graph.add_document_extraction(DocExtraction {
        doc_id: DocId::from("kg"),
        entities,
        atoms,
        triples: Vec::new(),
    })?;
    Ok(graph)
}

/// Recovers the triple set from a graph built by `kg_to_graph` by parsing
/// each atom's tab-delimited text.
pub fn graph_to_kg(graph: &AtomEntityGraph) -> Result<PredicateKg> {
    let mut kg = PredicateKg::default();
    for atom in graph.atoms() {
        let mut parts = atom.text.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(head), Some(relation), Some(tail), None) => {
                kg.insert(head, relation, tail);
            }
            _ => {
                return Err(Error::invalid(format!(
                    "atom {} does not carry a tab-delimited triple",
                    atom.id
                )));
            }
        }
    }
    Ok(kg)
}

/// Random KG with at most 30 entities, 100 triple draws and 10 relation
/// labels. Draws collapse under set semantics, so the realized triple count
/// can be lower.
pub fn random_kg(seed: u64) -> PredicateKg {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let num_entities = rng.gen_range(1..=30);
    let num_labels = rng.gen_range(1..=10);
    let draws = rng.gen_range(0..=100);
    let mut kg = PredicateKg::default();
    for _ in 0..draws {
        let head = format!("e{}", rng.gen_range(0..num_entities));
        let tail = format!("e{}", rng.gen_range(0..num_entities));
        let relation = format!("r{}", rng.gen_range(0..num_labels));
        kg.insert(&head, &relation, &tail);
    }
    kg
}

/// What the context-collapse demonstration produced.
#[derive(Debug, Clone, Serialize)]
pub struct DistinguishabilityReport {
    pub atom_texts: Vec<String>,
    pub stored_atoms: usize,
    pub projected_triples: usize,
}

/// Stores two atoms that assert the same (head, relation, tail) under
/// different contexts, then projects the graph down to predicate-labeled
/// edges. The atom store keeps both statements as distinct retrievable
/// objects; the projection collapses them into one edge, so the typed-edge
/// form cannot express the contextual split.
pub fn contextual_distinguishability_demo() -> Result<DistinguishabilityReport> {
    let embedding = placeholder_embedding();
    let texts = [
        "substrate inhibits kinase during mitosis",
        "substrate inhibits kinase in quiescent cells",
    ];
    let mut graph = AtomEntityGraph::new(STRUCTURAL_DIM);
    graph.add_document_extraction(DocExtraction {
        doc_id: DocId::from("demo"),
        entities: ["substrate", "kinase"]
            .into_iter()
            .map(|name| EntityInput {
                name: name.to_string(),
                embedding: embedding.clone(),
            })
            .collect(),
        atoms: texts
            .iter()
            .enumerate()
            .map(|(i, text)| AtomInput {
                id: AtomId::from(format!("demo/a{i}")),
                text: text.to_string(),
                span_hint: None,
                entity_names: vec!["substrate".to_string(), "kinase".to_string()],
                embedding: embedding.clone(),
            })
            .collect(),
        triples: texts
            .iter()
            .map(|_| TripleInput {
                head: "substrate".to_string(),
                relation: "inhibits".to_string(),
                tail: "kinase".to_string(),
            })
            .collect(),
    })?;

    let projected: BTreeSet<(String, String, String)> = graph
        .triples()
        .map(|t| {
            (
                t.head.as_str().to_string(),
                t.relation.clone(),
                t.tail.as_str().to_string(),
            )
        })
        .collect();

    Ok(DistinguishabilityReport {
        atom_texts: texts.iter().map(|t| t.to_string()).collect(),
        stored_atoms: graph.atoms().count(),
        projected_triples: projected.len(),
    })
}
