//! On-disk graph format: a directory with a JSON manifest, one
//! newline-delimited JSON record file per node and edge family, and a
//! single binary blob holding every embedding as little-endian f64.
//! Keeping floats out of the text files makes round-trips bit-exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::graph::{
    AtomEntityGraph, AtomId, DocId, EntityId, KnowledgeAtom, SynonymParams, Triple,
};

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const ENTITIES: &str = "entities.ndjson";
const ATOMS: &str = "atoms.ndjson";
const TRIPLES: &str = "triples.ndjson";
const EDGES_CONTAINMENT: &str = "edges_containment.ndjson";
const EDGES_RELEVANCE: &str = "edges_relevance.ndjson";
const EDGES_SYNONYM: &str = "edges_synonym.ndjson";
const BLOB: &str = "embeddings.bin";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dimension: usize,
    synonym_params: Option<(usize, f64)>,
    ingested_docs: BTreeMap<String, u64>,
    counts: Counts,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct Counts {
    entities: usize,
    atoms: usize,
    triples: usize,
    containment: usize,
    relevance: usize,
    synonym: usize,
}

#[derive(Serialize, Deserialize)]
struct EntityRec {
    id: String,
    name: String,
    mentions: u64,
    emb_off: usize,
    emb_len: usize,
}

#[derive(Serialize, Deserialize)]
struct AtomRec {
    id: String,
    text: String,
    doc: String,
    span: Option<(usize, usize)>,
    entities: Vec<String>,
    emb_off: usize,
    emb_len: usize,
}

#[derive(Serialize, Deserialize)]
struct TripleRec {
    head: String,
    relation: String,
    tail: String,
    doc: String,
}

#[derive(Serialize, Deserialize)]
struct ContainmentRec {
    atom: String,
    entity: String,
    weight: u32,
}

#[derive(Serialize, Deserialize)]
struct RelevanceRec {
    a: String,
    b: String,
    weight: u32,
}

#[derive(Serialize, Deserialize)]
struct SynonymRec {
    a: String,
    b: String,
    weight: f64,
}

struct BlobWriter {
    bytes: Vec<u8>,
}

impl BlobWriter {
    fn new() -> Self {
        BlobWriter { bytes: Vec::new() }
    }

    /// Appends the embedding, returning (element offset, element count).
    fn push(&mut self, emb: &Embedding) -> (usize, usize) {
        let off = self.bytes.len() / 8;
        for &x in emb.as_slice() {
            self.bytes.extend_from_slice(&x.to_le_bytes());
        }
        (off, emb.dim())
    }
}

fn write_ndjson<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| {
            Error::Snapshot(format!(
                "{}:{}: malformed record: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes a frozen graph to `dir`. Deterministic: identical graphs produce
/// byte-identical directories.
pub fn save(graph: &AtomEntityGraph, dir: &Path) -> Result<()> {
    if !graph.is_frozen() {
        return Err(Error::NotFrozen("snapshot::save"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut blob = BlobWriter::new();
    let entity_recs: Vec<EntityRec> = graph
        .entities()
        .map(|e| {
            let (emb_off, emb_len) = blob.push(&e.embedding);
            EntityRec {
                id: e.id.0.clone(),
                name: e.canonical_name.clone(),
                mentions: e.mention_count,
                emb_off,
                emb_len,
            }
        })
        .collect();
    let atom_recs: Vec<AtomRec> = graph
        .atoms()
        .map(|a| {
            let (emb_off, emb_len) = blob.push(&a.embedding);
            AtomRec {
                id: a.id.0.clone(),
                text: a.text.clone(),
                doc: a.source_doc.0.clone(),
                span: a.span_hint,
                entities: a.entities.iter().map(|e| e.0.clone()).collect(),
                emb_off,
                emb_len,
            }
        })
        .collect();

    write_ndjson(&dir.join(ENTITIES), entity_recs.into_iter())?;
    write_ndjson(&dir.join(ATOMS), atom_recs.into_iter())?;
    write_ndjson(
        &dir.join(TRIPLES),
        graph.triples().map(|t| TripleRec {
            head: t.head.0.clone(),
            relation: t.relation.clone(),
            tail: t.tail.0.clone(),
            doc: t.source_doc.0.clone(),
        }),
    )?;
    write_ndjson(
        &dir.join(EDGES_CONTAINMENT),
        graph.containment_edges().map(|(a, e)| ContainmentRec {
            atom: a.0.clone(),
            entity: e.0.clone(),
            weight: 1,
        }),
    )?;
    write_ndjson(
        &dir.join(EDGES_RELEVANCE),
        graph.relevance_edges().map(|((a, b), w)| RelevanceRec {
            a: a.0.clone(),
            b: b.0.clone(),
            weight: w,
        }),
    )?;
    write_ndjson(
        &dir.join(EDGES_SYNONYM),
        graph.synonym_edges().map(|((a, b), w)| SynonymRec {
            a: a.0.clone(),
            b: b.0.clone(),
            weight: w,
        }),
    )?;

    let blob_path = dir.join(BLOB);
    fs::write(&blob_path, &blob.bytes)
        .map_err(|e| Error::io(blob_path.display().to_string(), e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dimension: graph.dimension(),
        synonym_params: graph.synonym_params().map(|p| (p.top_k, p.sim_threshold)),
        ingested_docs: graph
            .ingested_docs()
            .iter()
            .map(|(k, v)| (k.0.clone(), *v))
            .collect(),
        counts: Counts {
            entities: graph.num_entities(),
            atoms: graph.num_atoms(),
            triples: graph.triples().count(),
            containment: graph.containment_edges().count(),
            relevance: graph.relevance_edges().count(),
            synonym: graph.synonym_edges().count(),
        },
    };
    let manifest_path = dir.join(MANIFEST);
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(&manifest_path, body)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))
}

fn slice_blob(blob: &[f64], off: usize, len: usize, dim: usize, what: &str) -> Result<Embedding> {
    if len != dim {
        return Err(Error::Snapshot(format!(
            "{what}: embedding length {len} does not match dimension {dim}"
        )));
    }
    let end = off.checked_add(len).ok_or_else(|| {
        Error::Snapshot(format!("{what}: embedding offset overflow"))
    })?;
    if end > blob.len() {
        return Err(Error::Snapshot(format!(
            "{what}: embedding range {off}..{end} exceeds blob of {} values",
            blob.len()
        )));
    }
    Ok(Embedding::from_unit_values(blob[off..end].to_vec()))
}

/// Loads a snapshot directory into a frozen graph.
pub fn load(dir: &Path) -> Result<AtomEntityGraph> {
    let manifest_path = dir.join(MANIFEST);
    let manifest_text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::Snapshot(format!("malformed manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported snapshot format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }

    let blob_path = dir.join(BLOB);
    let mut raw = Vec::new();
    fs::File::open(&blob_path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(blob_path.display().to_string(), e))?;
    if raw.len() % 8 != 0 {
        return Err(Error::Snapshot(format!(
            "embedding blob length {} is not a multiple of 8",
            raw.len()
        )));
    }
    let blob: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let dim = manifest.dimension;
    let mut entities = BTreeMap::new();
    for rec in read_ndjson::<EntityRec>(&dir.join(ENTITIES))? {
        let embedding = slice_blob(&blob, rec.emb_off, rec.emb_len, dim, &rec.id)?;
        let id = EntityId(rec.id);
        entities.insert(
            id.clone(),
            crate::graph::EntityNode {
                id,
                canonical_name: rec.name,
                mention_count: rec.mentions,
                embedding,
            },
        );
    }
    let mut atoms = BTreeMap::new();
    for rec in read_ndjson::<AtomRec>(&dir.join(ATOMS))? {
        let embedding = slice_blob(&blob, rec.emb_off, rec.emb_len, dim, &rec.id)?;
        let id = AtomId(rec.id);
        atoms.insert(
            id.clone(),
            KnowledgeAtom {
                id,
                text: rec.text,
                source_doc: DocId(rec.doc),
                span_hint: rec.span,
                entities: rec.entities.into_iter().map(EntityId).collect(),
                embedding,
            },
        );
    }
    let mut triples = BTreeSet::new();
    for rec in read_ndjson::<TripleRec>(&dir.join(TRIPLES))? {
        triples.insert(Triple {
            head: EntityId(rec.head),
            relation: rec.relation,
            tail: EntityId(rec.tail),
            source_doc: DocId(rec.doc),
        });
    }
    let mut containment = BTreeSet::new();
    for rec in read_ndjson::<ContainmentRec>(&dir.join(EDGES_CONTAINMENT))? {
        if rec.weight != 1 {
            return Err(Error::Snapshot(format!(
                "containment edge {} -> {} has weight {}, expected 1",
                rec.atom, rec.entity, rec.weight
            )));
        }
        containment.insert((AtomId(rec.atom), EntityId(rec.entity)));
    }
    let mut relevance = BTreeMap::new();
    for rec in read_ndjson::<RelevanceRec>(&dir.join(EDGES_RELEVANCE))? {
        relevance.insert((EntityId(rec.a), EntityId(rec.b)), rec.weight);
    }
    let mut synonym = BTreeMap::new();
    for rec in read_ndjson::<SynonymRec>(&dir.join(EDGES_SYNONYM))? {
        synonym.insert((EntityId(rec.a), EntityId(rec.b)), rec.weight);
    }

    let counts = Counts {
        entities: entities.len(),
        atoms: atoms.len(),
        triples: triples.len(),
        containment: containment.len(),
        relevance: relevance.len(),
        synonym: synonym.len(),
    };
    if counts != manifest.counts {
        return Err(Error::Snapshot(format!(
            "record counts {counts:?} disagree with manifest {:?}; snapshot is truncated or edited",
            manifest.counts
        )));
    }

    // Integrity: edges must reference stored nodes.
    for (a, e) in &containment {
        if !atoms.contains_key(a) || !entities.contains_key(e) {
            return Err(Error::Snapshot(format!(
                "containment edge ({a}, {e}) references a missing node"
            )));
        }
    }
    for (a, b) in relevance.keys().chain(synonym.keys()) {
        if !entities.contains_key(a) || !entities.contains_key(b) {
            return Err(Error::Snapshot(format!(
                "entity edge ({a}, {b}) references a missing entity"
            )));
        }
    }

    AtomEntityGraph::set_loaded_state(
        dim,
        entities,
        atoms,
        triples,
        containment,
        relevance,
        synonym,
        manifest
            .synonym_params
            .map(|(top_k, sim_threshold)| SynonymParams {
                top_k,
                sim_threshold,
            }),
        manifest
            .ingested_docs
            .into_iter()
            .map(|(k, v)| (DocId(k), v))
            .collect(),
    )
}
