//! The atom-entity graph: knowledge atoms (self-contained factual
//! statements) and the entities they mention, connected by three edge
//! families.
//!
//! - containment: atom <-> mentioned entity, weight exactly 1
//! - relevance: entity <-> entity, weight = number of distinct relation
//!   labels observed between the pair in either direction
//! - synonym: entity <-> entity, weight = embedding cosine, kept when the
//!   pair clears a similarity threshold within each node's top-k neighbors
//!
//! Construction is mutable and document-at-a-time; `freeze()` then compiles
//! a CSR view for propagation and locks the graph. Retrieval only ever sees
//! frozen graphs.

pub mod adjacency;
pub mod snapshot;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::text;

pub use adjacency::{Adjacency, AdjacencyBuilder};
pub use stats::{compute_stats, GraphStats};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(
            Debug,
            Clone,
            PartialEq,
            Eq,
            PartialOrd,
            Ord,
            Hash,
            serde::Serialize,
            serde::Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(EntityId);
string_id!(AtomId);
string_id!(DocId);

#[derive(Debug, Clone, PartialEq)]
pub struct EntityNode {
    pub id: EntityId,
    /// First-seen surface form; `id` holds the normalized form.
    pub canonical_name: String,
    pub mention_count: u64,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeAtom {
    pub id: AtomId,
    pub text: String,
    pub source_doc: DocId,
    /// Character range in the source document, when the extractor knows it.
    pub span_hint: Option<(usize, usize)>,
    pub entities: BTreeSet<EntityId>,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
    pub source_doc: DocId,
}

impl Triple {
    pub fn is_self_relation(&self) -> bool {
        self.head == self.tail
    }
}

/// One document's extraction output, ready for graph insertion.
/// Entity identity is the normalized canonical name; atoms and triples
/// refer to entities by name.
#[derive(Debug, Clone)]
pub struct DocExtraction {
    pub doc_id: DocId,
    pub entities: Vec<EntityInput>,
    pub atoms: Vec<AtomInput>,
    pub triples: Vec<TripleInput>,
}

#[derive(Debug, Clone)]
pub struct EntityInput {
    pub name: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone)]
pub struct AtomInput {
    pub id: AtomId,
    pub text: String,
    pub span_hint: Option<(usize, usize)>,
    pub entity_names: Vec<String>,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleInput {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl DocExtraction {
    /// Content fingerprint for ingestion idempotence: re-adding a document
    /// with an identical payload is a no-op, a changed payload is an error.
    fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
            h ^= 0xff;
            h = h.wrapping_mul(PRIME);
        };
        eat(self.doc_id.as_str().as_bytes());
        for e in &self.entities {
            eat(e.name.as_bytes());
            for &x in e.embedding.as_slice() {
                eat(&x.to_bits().to_le_bytes());
            }
        }
        for a in &self.atoms {
            eat(a.id.as_str().as_bytes());
            eat(a.text.as_bytes());
            if let Some((s, e)) = a.span_hint {
                eat(&s.to_le_bytes());
                eat(&e.to_le_bytes());
            }
            for n in &a.entity_names {
                eat(n.as_bytes());
            }
            for &x in a.embedding.as_slice() {
                eat(&x.to_bits().to_le_bytes());
            }
        }
        for t in &self.triples {
            eat(t.head.as_bytes());
            eat(t.relation.as_bytes());
            eat(t.tail.as_bytes());
        }
        h
    }
}

/// Maps between node ids and the dense indices used by propagation.
/// Entities occupy `[0, num_entities)`, atoms follow.
#[derive(Debug)]
pub struct CompiledGraph {
    pub adjacency: Adjacency,
    entity_ids: Vec<EntityId>,
    atom_ids: Vec<AtomId>,
    entity_index: BTreeMap<EntityId, usize>,
    atom_index: BTreeMap<AtomId, usize>,
}

impl CompiledGraph {
    pub fn num_nodes(&self) -> usize {
        self.entity_ids.len() + self.atom_ids.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atom_ids.len()
    }

    pub fn entity_node(&self, id: &EntityId) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn atom_node(&self, id: &AtomId) -> Option<usize> {
        self.atom_index.get(id).copied()
    }

    pub fn is_atom_node(&self, node: usize) -> bool {
        node >= self.entity_ids.len() && node < self.num_nodes()
    }

    pub fn atom_id_of(&self, node: usize) -> Option<&AtomId> {
        node.checked_sub(self.entity_ids.len())
            .and_then(|i| self.atom_ids.get(i))
    }

    pub fn entity_id_of(&self, node: usize) -> Option<&EntityId> {
        if node < self.entity_ids.len() {
            Some(&self.entity_ids[node])
        } else {
            None
        }
    }

    pub fn atom_nodes(&self) -> std::ops::Range<usize> {
        self.entity_ids.len()..self.num_nodes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynonymParams {
    pub top_k: usize,
    pub sim_threshold: f64,
}

pub struct AtomEntityGraph {
    dimension: usize,
    entities: BTreeMap<EntityId, EntityNode>,
    atoms: BTreeMap<AtomId, KnowledgeAtom>,
    triples: BTreeSet<Triple>,
    containment: BTreeSet<(AtomId, EntityId)>,
    relevance: BTreeMap<(EntityId, EntityId), u32>,
    synonym: BTreeMap<(EntityId, EntityId), f64>,
    synonym_params: Option<SynonymParams>,
    ingested: BTreeMap<DocId, u64>,
    frozen: bool,
    compiled: Option<Arc<CompiledGraph>>,
}

impl fmt::Debug for AtomEntityGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomEntityGraph")
            .field("entities", &self.entities.len())
            .field("atoms", &self.atoms.len())
            .field("triples", &self.triples.len())
            .field("containment", &self.containment.len())
            .field("relevance", &self.relevance.len())
            .field("synonym", &self.synonym.len())
            .field("frozen", &self.frozen)
            .finish()
    }
}

impl PartialEq for AtomEntityGraph {
    /// Structural equality; the compiled CSR cache is derived state and
    /// does not participate.
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.entities == other.entities
            && self.atoms == other.atoms
            && self.triples == other.triples
            && self.containment == other.containment
            && self.relevance == other.relevance
            && self.synonym == other.synonym
            && self.synonym_params == other.synonym_params
            && self.ingested == other.ingested
            && self.frozen == other.frozen
    }
}

fn ordered_pair(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl AtomEntityGraph {
    pub fn new(dimension: usize) -> Self {
        AtomEntityGraph {
            dimension,
            entities: BTreeMap::new(),
            atoms: BTreeMap::new(),
            triples: BTreeSet::new(),
            containment: BTreeSet::new(),
            relevance: BTreeMap::new(),
            synonym: BTreeMap::new(),
            synonym_params: None,
            ingested: BTreeMap::new(),
            frozen: false,
            compiled: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.entities.len() + self.atoms.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityNode> {
        self.entities.values()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &KnowledgeAtom> {
        self.atoms.values()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityNode> {
        self.entities.get(id)
    }

    pub fn atom(&self, id: &AtomId) -> Option<&KnowledgeAtom> {
        self.atoms.get(id)
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&EntityNode> {
        self.entities.get(&EntityId(text::normalize(name)))
    }

    pub fn containment_edges(&self) -> impl Iterator<Item = &(AtomId, EntityId)> {
        self.containment.iter()
    }

    pub fn relevance_edges(&self) -> impl Iterator<Item = (&(EntityId, EntityId), u32)> {
        self.relevance.iter().map(|(k, v)| (k, *v))
    }

    pub fn synonym_edges(&self) -> impl Iterator<Item = (&(EntityId, EntityId), f64)> {
        self.synonym.iter().map(|(k, v)| (k, *v))
    }

    pub fn relevance_weight(&self, a: &EntityId, b: &EntityId) -> Option<u32> {
        self.relevance
            .get(&ordered_pair(a.clone(), b.clone()))
            .copied()
    }

    pub fn synonym_weight(&self, a: &EntityId, b: &EntityId) -> Option<f64> {
        self.synonym
            .get(&ordered_pair(a.clone(), b.clone()))
            .copied()
    }

    pub fn synonym_params(&self) -> Option<SynonymParams> {
        self.synonym_params
    }

    fn check_mutable(&self, op: &'static str) -> Result<()> {
        if self.frozen {
            Err(Error::Frozen(op))
        } else {
            Ok(())
        }
    }

    /// Inserts one document's extraction. Entities merge by normalized
    /// canonical name; atoms and triples must reference entities supplied
    /// in this call or already present. Re-adding an identical document is
    /// a no-op; a same-id document with different content is rejected.
    pub fn add_document_extraction(&mut self, doc: DocExtraction) -> Result<()> {
        self.check_mutable("add_document_extraction")?;
        let fingerprint = doc.fingerprint();
        if let Some(&prev) = self.ingested.get(&doc.doc_id) {
            if prev == fingerprint {
                return Ok(());
            }
            return Err(Error::graph(format!(
                "document {} was already ingested with different content",
                doc.doc_id
            )));
        }

        // Validate before mutating so a failed call leaves no partial state.
        let mut known: BTreeSet<EntityId> = self.entities.keys().cloned().collect();
        let mut incoming: Vec<(EntityId, &EntityInput)> = Vec::new();
        for e in &doc.entities {
            let norm = text::normalize(&e.name);
            if norm.is_empty() {
                return Err(Error::graph(format!(
                    "document {}: entity name {:?} normalizes to empty",
                    doc.doc_id, e.name
                )));
            }
            if e.embedding.dim() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: e.embedding.dim(),
                });
            }
            let id = EntityId(norm);
            known.insert(id.clone());
            incoming.push((id, e));
        }
        let resolve = |name: &str, known: &BTreeSet<EntityId>| -> Result<EntityId> {
            let id = EntityId(text::normalize(name));
            if known.contains(&id) {
                Ok(id)
            } else {
                Err(Error::graph(format!(
                    "document {}: reference to unknown entity {:?}",
                    doc.doc_id, name
                )))
            }
        };
        let mut atom_rows: Vec<(&AtomInput, BTreeSet<EntityId>)> = Vec::new();
        for a in &doc.atoms {
            if a.text.trim().is_empty() {
                return Err(Error::graph(format!(
                    "document {}: atom {} has empty text",
                    doc.doc_id, a.id
                )));
            }
            if a.embedding.dim() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: a.embedding.dim(),
                });
            }
            if let Some((s, e)) = a.span_hint {
                if s >= e {
                    return Err(Error::graph(format!(
                        "document {}: atom {} span {s}..{e} is empty or inverted",
                        doc.doc_id, a.id
                    )));
                }
            }
            if self.atoms.contains_key(&a.id) {
                return Err(Error::graph(format!("duplicate atom id {}", a.id)));
            }
            let mut ids = BTreeSet::new();
            for name in &a.entity_names {
                ids.insert(resolve(name, &known)?);
            }
            atom_rows.push((a, ids));
        }
        let mut triple_rows: Vec<Triple> = Vec::new();
        for t in &doc.triples {
            if t.relation.trim().is_empty() {
                return Err(Error::graph(format!(
                    "document {}: triple with empty relation label",
                    doc.doc_id
                )));
            }
            let triple = Triple {
                head: resolve(&t.head, &known)?,
                relation: t.relation.trim().to_string(),
                tail: resolve(&t.tail, &known)?,
                source_doc: doc.doc_id.clone(),
            };
            if triple.is_self_relation() {
                log::warn!(
                    "document {}: self-relation {}({}) kept",
                    doc.doc_id,
                    triple.relation,
                    triple.head
                );
            }
            triple_rows.push(triple);
        }

        // Commit.
        let mut referenced: BTreeMap<EntityId, u64> = BTreeMap::new();
        for (_, ids) in &atom_rows {
            for id in ids {
                *referenced.entry(id.clone()).or_insert(0) += 1;
            }
        }
        for (id, input) in incoming {
            let mentions = referenced.get(&id).copied().unwrap_or(1).max(1);
            match self.entities.get_mut(&id) {
                Some(node) => node.mention_count += mentions,
                None => {
                    self.entities.insert(
                        id.clone(),
                        EntityNode {
                            id: id.clone(),
                            canonical_name: input.name.trim().to_string(),
                            mention_count: mentions,
                            embedding: input.embedding.clone(),
                        },
                    );
                }
            }
        }
        // Atoms may also reference entities that predate this document.
        for (id, count) in &referenced {
            if !doc
                .entities
                .iter()
                .any(|e| EntityId(text::normalize(&e.name)) == *id)
            {
                if let Some(node) = self.entities.get_mut(id) {
                    node.mention_count += count;
                }
            }
        }
        for (a, ids) in atom_rows {
            for id in &ids {
                self.containment.insert((a.id.clone(), id.clone()));
            }
            self.atoms.insert(
                a.id.clone(),
                KnowledgeAtom {
                    id: a.id.clone(),
                    text: a.text.clone(),
                    source_doc: doc.doc_id.clone(),
                    span_hint: a.span_hint,
                    entities: ids,
                    embedding: a.embedding.clone(),
                },
            );
        }
        for t in triple_rows {
            self.triples.insert(t);
        }
        self.ingested.insert(doc.doc_id, fingerprint);
        Ok(())
    }

    /// Rebuilds every relevance edge from the triple store: for each
    /// unordered entity pair, the weight is the count of distinct relation
    /// labels seen between them in either direction. Self-relations form no
    /// edge. Always a from-scratch recomputation, so stale weights cannot
    /// survive re-ingestion.
    pub fn build_relevance_edges(&mut self) -> Result<()> {
        self.check_mutable("build_relevance_edges")?;
        let mut labels: BTreeMap<(EntityId, EntityId), BTreeSet<&str>> = BTreeMap::new();
        for t in &self.triples {
            if t.is_self_relation() {
                continue;
            }
            let key = ordered_pair(t.head.clone(), t.tail.clone());
            labels.entry(key).or_default().insert(t.relation.as_str());
        }
        self.relevance = labels
            .into_iter()
            .map(|(k, set)| (k, set.len() as u32))
            .collect();
        Ok(())
    }

    /// Rebuilds synonym edges: for each entity, take its `top_k` most
    /// similar peers by embedding cosine (ties broken by ascending id),
    /// keep those at or above `sim_threshold`, then close symmetrically.
    pub fn build_synonym_edges(&mut self, top_k: usize, sim_threshold: f64) -> Result<()> {
        self.check_mutable("build_synonym_edges")?;
        if !(-1.0..=1.0).contains(&sim_threshold) {
            return Err(Error::invalid(format!(
                "synonym similarity threshold must be in [-1, 1], got {sim_threshold}"
            )));
        }
        self.synonym.clear();
        self.synonym_params = Some(SynonymParams {
            top_k,
            sim_threshold,
        });
        let nodes: Vec<&EntityNode> = self.entities.values().collect();
        for (i, a) in nodes.iter().enumerate() {
            let mut sims: Vec<(f64, usize)> = Vec::with_capacity(nodes.len() - 1);
            for (j, b) in nodes.iter().enumerate() {
                if i == j {
                    continue;
                }
                sims.push((a.embedding.cosine(&b.embedding)?, j));
            }
            sims.sort_by(|x, y| {
                y.0.partial_cmp(&x.0)
                    .expect("finite cosine")
                    .then_with(|| nodes[x.1].id.cmp(&nodes[y.1].id))
            });
            for &(sim, j) in sims.iter().take(top_k) {
                if sim >= sim_threshold {
                    let key = ordered_pair(a.id.clone(), nodes[j].id.clone());
                    self.synonym.insert(key, sim);
                }
            }
        }
        Ok(())
    }

    /// Locks the graph and compiles the propagation view. Idempotent:
    /// freezing a frozen graph changes nothing.
    pub fn freeze(&mut self) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        self.frozen = true;
        self.compiled = Some(Arc::new(self.compile()?));
        Ok(())
    }

    fn compile(&self) -> Result<CompiledGraph> {
        let entity_ids: Vec<EntityId> = self.entities.keys().cloned().collect();
        let atom_ids: Vec<AtomId> = self.atoms.keys().cloned().collect();
        let entity_index: BTreeMap<EntityId, usize> = entity_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let atom_base = entity_ids.len();
        let atom_index: BTreeMap<AtomId, usize> = atom_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), atom_base + i))
            .collect();
        let mut builder = Adjacency::builder(entity_ids.len() + atom_ids.len());
        for (atom, entity) in &self.containment {
            builder.add_undirected(atom_index[atom], entity_index[entity], 1.0);
        }
        for ((a, b), &w) in &self.relevance {
            builder.add_undirected(entity_index[a], entity_index[b], w as f64);
        }
        for ((a, b), &w) in &self.synonym {
            builder.add_undirected(entity_index[a], entity_index[b], w);
        }
        Ok(CompiledGraph {
            adjacency: builder.build()?,
            entity_ids,
            atom_ids,
            entity_index,
            atom_index,
        })
    }

    /// The compiled propagation view. Only available once frozen.
    pub fn compiled(&self) -> Result<&CompiledGraph> {
        self.compiled
            .as_deref()
            .ok_or(Error::NotFrozen("compiled()"))
    }

    pub(crate) fn set_loaded_state(
        dimension: usize,
        entities: BTreeMap<EntityId, EntityNode>,
        atoms: BTreeMap<AtomId, KnowledgeAtom>,
        triples: BTreeSet<Triple>,
        containment: BTreeSet<(AtomId, EntityId)>,
        relevance: BTreeMap<(EntityId, EntityId), u32>,
        synonym: BTreeMap<(EntityId, EntityId), f64>,
        synonym_params: Option<SynonymParams>,
        ingested: BTreeMap<DocId, u64>,
    ) -> Result<Self> {
        let mut g = AtomEntityGraph {
            dimension,
            entities,
            atoms,
            triples,
            containment,
            relevance,
            synonym,
            synonym_params,
            ingested,
            frozen: false,
            compiled: None,
        };
        g.freeze()?;
        Ok(g)
    }

    pub(crate) fn ingested_docs(&self) -> &BTreeMap<DocId, u64> {
        &self.ingested
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{NgramHashEncoder, TextEncoder};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn enc() -> NgramHashEncoder {
        NgramHashEncoder::default()
    }

    fn entity(name: &str) -> EntityInput {
        EntityInput {
            name: name.to_string(),
            embedding: enc().encode(name).unwrap(),
        }
    }

    fn atom(id: &str, text: &str, names: &[&str]) -> AtomInput {
        AtomInput {
            id: AtomId::from(id),
            text: text.to_string(),
            span_hint: None,
            entity_names: names.iter().map(|s| s.to_string()).collect(),
            embedding: enc().encode(text).unwrap(),
        }
    }

    fn triple(h: &str, r: &str, t: &str) -> TripleInput {
        TripleInput {
            head: h.to_string(),
            relation: r.to_string(),
            tail: t.to_string(),
        }
    }

    fn two_doc_graph() -> AtomEntityGraph {
        let mut g = AtomEntityGraph::new(64);
        g.add_document_extraction(DocExtraction {
            doc_id: DocId::from("d1"),
            entities: vec![entity("Basal Cell Carcinoma"), entity("UV radiation")],
            atoms: vec![atom(
                "d1/a0",
                "Basal cell carcinoma is linked to UV radiation exposure.",
                &["Basal Cell Carcinoma", "UV radiation"],
            )],
            triples: vec![
                triple("Basal Cell Carcinoma", "caused_by", "UV radiation"),
                triple("UV radiation", "risk_factor_for", "Basal Cell Carcinoma"),
                triple("Basal Cell Carcinoma", "caused_by", "UV radiation"),
            ],
        })
        .unwrap();
        g.add_document_extraction(DocExtraction {
            doc_id: DocId::from("d2"),
            entities: vec![entity("basal  cell carcinoma"), entity("Mohs surgery")],
            atoms: vec![atom(
                "d2/a0",
                "Mohs surgery offers high cure rates for basal cell carcinoma.",
                &["Mohs surgery", "basal cell carcinoma"],
            )],
            triples: vec![triple("basal cell carcinoma", "treated_by", "Mohs surgery")],
        })
        .unwrap();
        g
    }

    #[test]
    fn entities_merge_by_normalized_name() {
        let g = two_doc_graph();
        assert_eq!(g.num_entities(), 3);
        let bcc = g.entity_by_name("BASAL CELL CARCINOMA").unwrap();
        assert_eq!(bcc.canonical_name, "Basal Cell Carcinoma"); // first-seen form
        assert_eq!(bcc.mention_count, 2); // one atom mention per document
    }

    #[test]
    fn containment_count_is_sum_of_atom_entity_sets() {
        let g = two_doc_graph();
        let expected: usize = g.atoms().map(|a| a.entities.len()).sum();
        assert_eq!(g.containment_edges().count(), expected);
        assert_eq!(expected, 4);
    }

    #[test]
    fn relevance_counts_distinct_labels_across_directions() {
        let mut g = two_doc_graph();
        g.build_relevance_edges().unwrap();
        // caused_by and risk_factor_for (one per direction, duplicate dropped)
        let w = g
            .relevance_weight(
                &EntityId::from("basal cell carcinoma"),
                &EntityId::from("uv radiation"),
            )
            .unwrap();
        assert_eq!(w, 2);
        let w2 = g
            .relevance_weight(
                &EntityId::from("basal cell carcinoma"),
                &EntityId::from("mohs surgery"),
            )
            .unwrap();
        assert_eq!(w2, 1);
        assert!(g
            .relevance_weight(
                &EntityId::from("uv radiation"),
                &EntityId::from("mohs surgery")
            )
            .is_none());
    }

    #[test]
    fn relevance_matches_bruteforce_oracle_on_random_triples() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let encoder = enc();
        for _ in 0..30 {
            let n_entities = rng.gen_range(2..10);
            let names: Vec<String> = (0..n_entities).map(|i| format!("ent {i}")).collect();
            let labels = ["r0", "r1", "r2", "r3"];
            let mut g = AtomEntityGraph::new(64);
            let mut raw: Vec<(String, String, String)> = Vec::new();
            let n_triples = rng.gen_range(0..25);
            for _ in 0..n_triples {
                let h = names[rng.gen_range(0..n_entities)].clone();
                let t = names[rng.gen_range(0..n_entities)].clone();
                let r = labels[rng.gen_range(0..labels.len())].to_string();
                raw.push((h, t, r));
            }
            g.add_document_extraction(DocExtraction {
                doc_id: DocId::from("doc"),
                entities: names
                    .iter()
                    .map(|n| EntityInput {
                        name: n.clone(),
                        embedding: encoder.encode(n).unwrap(),
                    })
                    .collect(),
                atoms: vec![],
                triples: raw
                    .iter()
                    .map(|(h, t, r)| TripleInput {
                        head: h.clone(),
                        relation: r.clone(),
                        tail: t.clone(),
                    })
                    .collect(),
            })
            .unwrap();
            g.build_relevance_edges().unwrap();

            // Oracle: per unordered pair, set of labels in either direction.
            let mut oracle: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
            for (h, t, r) in &raw {
                if h == t {
                    continue;
                }
                let key = if h < t {
                    (h.clone(), t.clone())
                } else {
                    (t.clone(), h.clone())
                };
                oracle.entry(key).or_default().insert(r.clone());
            }
            let got: BTreeMap<(String, String), u32> = g
                .relevance_edges()
                .map(|((a, b), w)| ((a.0.clone(), b.0.clone()), w))
                .collect();
            let want: BTreeMap<(String, String), u32> = oracle
                .into_iter()
                .map(|(k, v)| (k, v.len() as u32))
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn synonym_edges_match_thresholded_knn_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            let mut g = AtomEntityGraph::new(8);
            let mut embeddings: Vec<(String, Embedding)> = Vec::new();
            let mut doc_entities = Vec::new();
            for i in 0..n {
                let name = format!("e{i:02}");
                let emb = loop {
                    let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if let Ok(e) = Embedding::unit(v) {
                        break e;
                    }
                };
                embeddings.push((name.clone(), emb.clone()));
                doc_entities.push(EntityInput {
                    name,
                    embedding: emb,
                });
            }
            g.add_document_extraction(DocExtraction {
                doc_id: DocId::from("doc"),
                entities: doc_entities,
                atoms: vec![],
                triples: vec![],
            })
            .unwrap();
            let top_k = rng.gen_range(1..5);
            let tau = 0.3;
            g.build_synonym_edges(top_k, tau).unwrap();

            // Oracle: per-node KNN lists, then symmetric union, threshold tau.
            let mut oracle: BTreeMap<(String, String), f64> = BTreeMap::new();
            for (i, (ni, ei)) in embeddings.iter().enumerate() {
                let mut sims: Vec<(f64, &String)> = embeddings
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (nj, ej))| (ei.cosine(ej).unwrap(), nj))
                    .collect();
                sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
                for (sim, nj) in sims.into_iter().take(top_k) {
                    if sim >= tau {
                        let key = if ni < nj {
                            (ni.clone(), (*nj).clone())
                        } else {
                            ((*nj).clone(), ni.clone())
                        };
                        oracle.insert(key, sim);
                    }
                }
            }
            let got: BTreeMap<(String, String), f64> = g
                .synonym_edges()
                .map(|((a, b), w)| ((a.0.clone(), b.0.clone()), w))
                .collect();
            assert_eq!(got, oracle);
            // No self-edges, weights at or above tau.
            for ((a, b), w) in g.synonym_edges() {
                assert_ne!(a, b);
                assert!(w >= tau);
            }
        }
    }

    #[test]
    fn idempotent_reingest_and_conflicting_reingest() {
        let g1 = two_doc_graph();
        let mut g2 = two_doc_graph();
        // Identical payload: no-op.
        g2.add_document_extraction(DocExtraction {
            doc_id: DocId::from("d1"),
            entities: vec![entity("Basal Cell Carcinoma"), entity("UV radiation")],
            atoms: vec![atom(
                "d1/a0",
                "Basal cell carcinoma is linked to UV radiation exposure.",
                &["Basal Cell Carcinoma", "UV radiation"],
            )],
            triples: vec![
                triple("Basal Cell Carcinoma", "caused_by", "UV radiation"),
                triple("UV radiation", "risk_factor_for", "Basal Cell Carcinoma"),
                triple("Basal Cell Carcinoma", "caused_by", "UV radiation"),
            ],
        })
        .unwrap();
        assert_eq!(g1, g2);
        // Same doc id, different payload: rejected.
        let err = g2
            .add_document_extraction(DocExtraction {
                doc_id: DocId::from("d1"),
                entities: vec![entity("Something Else")],
                atoms: vec![],
                triples: vec![],
            })
            .unwrap_err();
        assert!(err.to_string().contains("different content"));
    }

    #[test]
    fn unknown_entity_reference_rejected() {
        let mut g = AtomEntityGraph::new(64);
        let err = g
            .add_document_extraction(DocExtraction {
                doc_id: DocId::from("d1"),
                entities: vec![entity("melanoma")],
                atoms: vec![atom("d1/a0", "text", &["melanoma", "missing entity"])],
                triples: vec![],
            })
            .unwrap_err();
        assert!(err.to_string().contains("missing entity"));
        // Failed call left no partial state.
        assert_eq!(g.num_entities(), 0);
        assert_eq!(g.num_atoms(), 0);
    }

    #[test]
    fn duplicate_atom_id_rejected() {
        let mut g = two_doc_graph();
        let err = g
            .add_document_extraction(DocExtraction {
                doc_id: DocId::from("d3"),
                entities: vec![entity("melanoma")],
                atoms: vec![atom("d1/a0", "other text", &["melanoma"])],
                triples: vec![],
            })
            .unwrap_err();
        assert!(err.to_string().contains("duplicate atom id"));
    }

    #[test]
    fn cross_document_entity_reference_is_allowed() {
        let mut g = two_doc_graph();
        g.add_document_extraction(DocExtraction {
            doc_id: DocId::from("d3"),
            entities: vec![],
            atoms: vec![atom(
                "d3/a0",
                "Follow-up notes on basal cell carcinoma.",
                &["Basal Cell Carcinoma"],
            )],
            triples: vec![],
        })
        .unwrap();
        assert_eq!(g.num_atoms(), 3);
        assert_eq!(g.entity_by_name("basal cell carcinoma").unwrap().mention_count, 3);
    }

    #[test]
    fn freeze_locks_mutation_and_is_idempotent() {
        let mut g = two_doc_graph();
        g.build_relevance_edges().unwrap();
        g.build_synonym_edges(2047, 0.8).unwrap();
        g.freeze().unwrap();
        assert!(g.is_frozen());
        g.freeze().unwrap(); // no-op
        let err = g
            .add_document_extraction(DocExtraction {
                doc_id: DocId::from("d9"),
                entities: vec![],
                atoms: vec![],
                triples: vec![],
            })
            .unwrap_err();
        assert!(matches!(err, Error::Frozen(_)));
        assert!(matches!(
            g.build_relevance_edges(),
            Err(Error::Frozen(_))
        ));
    }

    #[test]
    fn compiled_view_orders_entities_before_atoms() {
        let mut g = two_doc_graph();
        g.build_relevance_edges().unwrap();
        g.freeze().unwrap();
        let c = g.compiled().unwrap();
        assert_eq!(c.num_nodes(), g.num_nodes());
        assert_eq!(c.num_entities(), 3);
        assert_eq!(c.num_atoms(), 2);
        let bcc = c.entity_node(&EntityId::from("basal cell carcinoma")).unwrap();
        assert!(bcc < c.num_entities());
        let a0 = c.atom_node(&AtomId::from("d1/a0")).unwrap();
        assert!(c.is_atom_node(a0));
        assert_eq!(c.atom_id_of(a0).unwrap().as_str(), "d1/a0");
        // Containment weight is exactly 1 in both directions.
        let e_uv = c.entity_node(&EntityId::from("uv radiation")).unwrap();
        let w = c
            .adjacency
            .out_edges(a0)
            .find(|&(t, _)| t == e_uv)
            .map(|(_, w)| w)
            .unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn compiled_unavailable_before_freeze() {
        let g = two_doc_graph();
        assert!(matches!(g.compiled(), Err(Error::NotFrozen(_))));
    }
}
