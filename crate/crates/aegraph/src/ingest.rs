//! Corpus ingestion: token-window chunking, model-driven extraction, and
//! graph assembly. Extraction failures are isolated per chunk; a build
//! only fails outright when every document yields nothing.

use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;

use crate::encoder::TextEncoder;
use crate::error::{Error, Result};
use crate::gateway::{bindings, schema, LlmGateway, TemplateName};
use crate::graph::{AtomEntityGraph, AtomId, AtomInput, DocExtraction, DocId, EntityInput, TripleInput};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: DocId,
    pub text: String,
}

/// Reads every `.txt` file in `dir` as one document; the file stem is the
/// document id. Ordering does not matter, build_graph sorts by id.
pub fn read_corpus_dir(dir: &std::path::Path) -> Result<Vec<Document>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut docs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("unusable file name {}", path.display())))?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        docs.push(Document {
            id: DocId(stem.to_string()),
            text,
        });
    }
    if docs.is_empty() {
        return Err(Error::invalid(format!(
            "no .txt documents found in {}",
            dir.display()
        )));
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy)]
pub struct ChunkParams {
    /// Window length in whitespace tokens.
    pub size: usize,
    /// Tokens shared with the previous window.
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            size: 256,
            overlap: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte span of the chunk in the original document.
    pub char_start: usize,
    pub char_end: usize,
}

/// Byte spans of whitespace-separated tokens.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Sliding token windows. Window i covers tokens
/// `[i * (size - overlap), min(start + size, total))`; the window that
/// reaches the end of the document is the last one, so every chunk after
/// the first carries more than `overlap` tokens of new material and the
/// original token stream can be rebuilt by dropping each later chunk's
/// first `overlap` tokens.
pub fn chunk(doc_text: &str, params: &ChunkParams) -> Result<Vec<Chunk>> {
    if params.size == 0 {
        return Err(Error::invalid("chunk size must be at least 1 token"));
    }
    if params.overlap >= params.size {
        return Err(Error::invalid(format!(
            "chunk overlap {} must be smaller than chunk size {}",
            params.overlap, params.size
        )));
    }
    let spans = token_spans(doc_text);
    let total = spans.len();
    if total == 0 {
        return Ok(Vec::new());
    }
    let stride = params.size - params.overlap;
    let mut chunks = Vec::new();
    let mut index = 0;
    loop {
        let start = index * stride;
        let end = (start + params.size).min(total);
        let char_start = spans[start].0;
        let char_end = spans[end - 1].1;
        chunks.push(Chunk {
            index,
            text: doc_text[char_start..char_end].to_string(),
            token_start: start,
            token_end: end,
            char_start,
            char_end,
        });
        if start + params.size >= total {
            return Ok(chunks);
        }
        index += 1;
    }
}

/// One atom as extracted from a chunk, with its span already translated
/// to document coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkAtom {
    pub text: String,
    pub entity_names: Vec<String>,
    pub span_hint: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkExtraction {
    /// Surface forms as reported by entity recognition, deduplicated by
    /// normalized form (first surface form wins).
    pub entities: Vec<String>,
    pub atoms: Vec<ChunkAtom>,
    pub triples: Vec<TripleInput>,
}

/// Runs entity recognition and unified extraction over one chunk and
/// validates the result strictly: every atom and triple must reference
/// only recognized entities, and every atom needs at least one. Any
/// violation fails the whole chunk, which the caller records and skips.
pub fn extract(gateway: &LlmGateway, doc_id: &DocId, chunk: &Chunk) -> Result<ChunkExtraction> {
    let scope = format!("doc {} chunk {}", doc_id.as_str(), chunk.index);
    let fail = |reason: String| Error::Extraction {
        scope: scope.clone(),
        reason,
    };

    let (ner, _) = gateway.complete_parsed(
        TemplateName::Ner,
        &bindings(&[("document", &chunk.text)]),
        schema::parse_ner,
    )?;
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut entities: Vec<String> = Vec::new();
    for name in &ner.entities {
        let key = text::normalize(name);
        if key.is_empty() {
            return Err(fail(format!("entity name {name:?} is empty after normalization")));
        }
        if let std::collections::btree_map::Entry::Vacant(slot) = seen.entry(key) {
            slot.insert(name.clone());
            entities.push(name.clone());
        }
    }

    let entity_list = serde_json::to_string(&entities)?;
    let (payload, _) = gateway.complete_parsed(
        TemplateName::UnifiedExtraction,
        &bindings(&[("document", &chunk.text), ("entities", &entity_list)]),
        schema::parse_extraction,
    )?;

    let mut atoms = Vec::new();
    for (i, atom) in payload.atoms.iter().enumerate() {
        if atom.text.trim().is_empty() {
            return Err(fail(format!("atom {i} has empty text")));
        }
        if atom.entities.is_empty() {
            return Err(fail(format!("atom {i} references no entities")));
        }
        let mut names = Vec::new();
        for name in &atom.entities {
            let key = text::normalize(name);
            match seen.get(&key) {
                Some(surface) => names.push(surface.clone()),
                None => {
                    return Err(fail(format!(
                        "atom {i} references unrecognized entity {name:?}"
                    )))
                }
            }
        }
        // Spans are hints; a malformed one is dropped rather than failing
        // the chunk.
        let span_hint = atom.span.and_then(|(s, e)| {
            let valid = s < e
                && e <= chunk.text.len()
                && chunk.text.is_char_boundary(s)
                && chunk.text.is_char_boundary(e);
            if valid {
                Some((chunk.char_start + s, chunk.char_start + e))
            } else {
                log::debug!("{scope}: atom {i} span ({s}, {e}) out of bounds; dropping hint");
                None
            }
        });
        atoms.push(ChunkAtom {
            text: atom.text.clone(),
            entity_names: names,
            span_hint,
        });
    }

    let mut triples = Vec::new();
    for (i, t) in payload.triples.iter().enumerate() {
        if t.relation.trim().is_empty() {
            return Err(fail(format!("triple {i} has an empty relation")));
        }
        let head = seen
            .get(&text::normalize(&t.head))
            .ok_or_else(|| fail(format!("triple {i} head {:?} is unrecognized", t.head)))?;
        let tail = seen
            .get(&text::normalize(&t.tail))
            .ok_or_else(|| fail(format!("triple {i} tail {:?} is unrecognized", t.tail)))?;
        triples.push(TripleInput {
            head: head.clone(),
            relation: t.relation.clone(),
            tail: tail.clone(),
        });
    }

    Ok(ChunkExtraction {
        entities,
        atoms,
        triples,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BuildParams {
    pub chunk: ChunkParams,
    pub synonym_top_k: usize,
    pub synonym_sim_threshold: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            chunk: ChunkParams::default(),
            synonym_top_k: 2047,
            synonym_sim_threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildFailure {
    pub doc_id: String,
    pub chunk_index: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub docs_total: usize,
    pub docs_failed: usize,
    pub chunks_total: usize,
    pub chunks_failed: usize,
    pub entities: usize,
    pub atoms: usize,
    pub triples: usize,
    pub containment_edges: usize,
    pub relevance_edges: usize,
    pub synonym_edges: usize,
    pub failures: Vec<BuildFailure>,
}

/// Builds the full graph from a corpus. Documents are processed in id
/// order so the result is independent of input ordering; atom ids encode
/// document, chunk, and position (`{doc}/c{chunk}/a{atom}`), so rebuilds
/// of the same corpus are identical byte for byte.
pub fn build_graph(
    corpus: &[Document],
    gateway: &LlmGateway,
    encoder: &dyn TextEncoder,
    params: &BuildParams,
) -> Result<(AtomEntityGraph, BuildReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyBuild);
    }
    let mut order: Vec<&Document> = corpus.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in order.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::invalid(format!(
                "duplicate document id `{}` in corpus",
                pair[0].id.as_str()
            )));
        }
    }

    let mut graph = AtomEntityGraph::new(encoder.dimension());
    let mut failures: Vec<BuildFailure> = Vec::new();
    let mut docs_failed = 0usize;
    let mut chunks_total = 0usize;
    let mut chunks_failed = 0usize;

    for doc in &order {
        let chunks = chunk(&doc.text, &params.chunk)?;
        chunks_total += chunks.len();
        if chunks.is_empty() {
            docs_failed += 1;
            failures.push(BuildFailure {
                doc_id: doc.id.as_str().to_string(),
                chunk_index: None,
                reason: "document has no tokens".into(),
            });
            continue;
        }

        // First surface form wins across chunks, keyed by normalized name.
        let mut entity_surfaces: BTreeMap<String, String> = BTreeMap::new();
        let mut entity_order: Vec<String> = Vec::new();
        let mut atoms: Vec<(AtomId, ChunkAtom)> = Vec::new();
        let mut triples: Vec<TripleInput> = Vec::new();
        for c in &chunks {
            match extract(gateway, &doc.id, c) {
                Ok(extraction) => {
                    for name in extraction.entities {
                        let key = text::normalize(&name);
                        if let std::collections::btree_map::Entry::Vacant(slot) =
                            entity_surfaces.entry(key)
                        {
                            slot.insert(name.clone());
                            entity_order.push(name);
                        }
                    }
                    for (ai, atom) in extraction.atoms.into_iter().enumerate() {
                        let id = AtomId(format!("{}/c{}/a{}", doc.id.as_str(), c.index, ai));
                        atoms.push((id, atom));
                    }
                    triples.extend(extraction.triples);
                }
                Err(e) => {
                    chunks_failed += 1;
                    warn!("skipping chunk: {e}");
                    failures.push(BuildFailure {
                        doc_id: doc.id.as_str().to_string(),
                        chunk_index: Some(c.index),
                        reason: e.to_string(),
                    });
                }
            }
        }

        if entity_order.is_empty() && atoms.is_empty() {
            docs_failed += 1;
            failures.push(BuildFailure {
                doc_id: doc.id.as_str().to_string(),
                chunk_index: None,
                reason: "no chunk produced a usable extraction".into(),
            });
            continue;
        }

        let entity_texts: Vec<&str> = entity_order.iter().map(|s| s.as_str()).collect();
        let entity_embeddings = encoder.encode_batch(&entity_texts)?;
        let atom_texts: Vec<&str> = atoms.iter().map(|(_, a)| a.text.as_str()).collect();
        let atom_embeddings = encoder.encode_batch(&atom_texts)?;

        let extraction = DocExtraction {
            doc_id: doc.id.clone(),
            entities: entity_order
                .into_iter()
                .zip(entity_embeddings)
                .map(|(name, embedding)| EntityInput { name, embedding })
                .collect(),
            atoms: atoms
                .into_iter()
                .zip(atom_embeddings)
                .map(|((id, a), embedding)| AtomInput {
                    id,
                    text: a.text,
                    span_hint: a.span_hint,
                    entity_names: a.entity_names,
                    embedding,
                })
                .collect(),
            triples,
        };
        if let Err(e) = graph.add_document_extraction(extraction) {
            docs_failed += 1;
            warn!("skipping document {}: {e}", doc.id.as_str());
            failures.push(BuildFailure {
                doc_id: doc.id.as_str().to_string(),
                chunk_index: None,
                reason: e.to_string(),
            });
        }
    }

    if docs_failed == order.len() {
        let first = failures
            .first()
            .map(|f| f.reason.clone())
            .unwrap_or_else(|| "unknown".into());
        return Err(Error::BuildAllFailed {
            total: order.len(),
            first,
        });
    }
    if graph.num_nodes() == 0 {
        return Err(Error::EmptyBuild);
    }

    graph.build_relevance_edges()?;
    graph.build_synonym_edges(params.synonym_top_k, params.synonym_sim_threshold)?;
    graph.freeze()?;

    let report = BuildReport {
        docs_total: order.len(),
        docs_failed,
        chunks_total,
        chunks_failed,
        entities: graph.num_entities(),
        atoms: graph.num_atoms(),
        triples: graph.triples().count(),
        containment_edges: graph.containment_edges().count(),
        relevance_edges: graph.relevance_edges().count(),
        synonym_edges: graph.synonym_edges().count(),
        failures,
    };
    Ok((graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::NgramHashEncoder;
    use crate::gateway::MockBackend;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_document_is_one_chunk() {
        let doc = words(256);
        let chunks = chunk(&doc, &ChunkParams::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_start, 0);
        assert_eq!(chunks[0].token_end, 256);
        assert_eq!(chunks[0].text, doc);
    }

    #[test]
    fn overflow_produces_overlapping_windows() {
        let doc = words(300);
        let chunks = chunk(&doc, &ChunkParams::default()).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!((chunks[0].token_start, chunks[0].token_end), (0, 256));
        assert_eq!((chunks[1].token_start, chunks[1].token_end), (224, 300));
    }

    #[test]
    fn empty_document_yields_no_chunks() {
        assert!(chunk("", &ChunkParams::default()).unwrap().is_empty());
        assert!(chunk("   \n\t ", &ChunkParams::default()).unwrap().is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(chunk("a b", &ChunkParams { size: 0, overlap: 0 }).is_err());
        assert!(chunk("a b", &ChunkParams { size: 4, overlap: 4 }).is_err());
        assert!(chunk("a b", &ChunkParams { size: 4, overlap: 9 }).is_err());
    }

    #[test]
    fn chunk_text_is_a_slice_of_the_document() {
        let doc = "alpha  beta\n\ngamma\tdelta epsilon";
        let chunks = chunk(doc, &ChunkParams { size: 3, overlap: 1 }).unwrap();
        assert_eq!(chunks.len(), 2);
        for c in &chunks {
            assert_eq!(c.text, &doc[c.char_start..c.char_end]);
        }
        assert_eq!(chunks[0].text, "alpha  beta\n\ngamma");
        assert_eq!(chunks[1].text, "gamma\tdelta epsilon");
    }

    #[test]
    fn dropping_overlap_reconstructs_the_token_stream() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..40 {
            let total = rng.gen_range(1..600);
            let size = rng.gen_range(2..64);
            let overlap = rng.gen_range(0..size);
            let doc = words(total);
            let params = ChunkParams { size, overlap };
            let chunks = chunk(&doc, &params).unwrap();
            let mut rebuilt: Vec<String> = Vec::new();
            for (i, c) in chunks.iter().enumerate() {
                let toks: Vec<String> = c.text.split_whitespace().map(String::from).collect();
                assert_eq!(toks.len(), c.token_end - c.token_start);
                let skip = if i == 0 { 0 } else { overlap };
                assert!(
                    i == 0 || toks.len() > overlap,
                    "chunk {i} of {} carries no new tokens (size {size}, overlap {overlap}, total {total})",
                    chunks.len()
                );
                rebuilt.extend(toks.into_iter().skip(skip));
            }
            let original: Vec<String> = doc.split_whitespace().map(String::from).collect();
            assert_eq!(rebuilt, original, "size {size} overlap {overlap} total {total}");
        }
    }

    fn extraction_fixture(doc_text: &str, ner: &str, extraction: &str) -> LlmGateway {
        let mut mock = MockBackend::new();
        mock.respond(TemplateName::Ner, bindings(&[("document", doc_text)]), ner);
        mock.respond_on(
            TemplateName::UnifiedExtraction,
            &["document"],
            bindings(&[("document", doc_text)]),
            extraction,
        );
        LlmGateway::mock(mock)
    }

    fn one_chunk(text: &str) -> Chunk {
        let mut chunks = chunk(text, &ChunkParams::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        chunks.pop().unwrap()
    }

    #[test]
    fn extract_validates_and_translates_spans() {
        let doc = "Aspirin blocks COX-1. Children with influenza risk Reye syndrome.";
        let gw = extraction_fixture(
            doc,
            r#"{"entities": ["Aspirin", "COX-1", "Reye syndrome"]}"#,
            r#"{"atoms": [
                {"text": "Aspirin blocks COX-1", "entities": ["aspirin", "COX-1"], "span": [0, 21]},
                {"text": "Reye syndrome risk in children", "entities": ["Reye syndrome"], "span": [900, 950]}
            ],
            "triples": [{"head": "Aspirin", "relation": "inhibits", "tail": "COX-1"}]}"#,
        );
        let out = extract(&gw, &DocId("d".into()), &one_chunk(doc)).unwrap();
        assert_eq!(out.entities, vec!["Aspirin", "COX-1", "Reye syndrome"]);
        assert_eq!(out.atoms.len(), 2);
        // Lowercase "aspirin" resolves to the recognized surface form.
        assert_eq!(out.atoms[0].entity_names, vec!["Aspirin", "COX-1"]);
        assert_eq!(out.atoms[0].span_hint, Some((0, 21)));
        // Out-of-bounds span is dropped, atom kept.
        assert_eq!(out.atoms[1].span_hint, None);
        assert_eq!(out.triples.len(), 1);
    }

    #[test]
    fn extract_rejects_unknown_entity_references() {
        let doc = "some text";
        let gw = extraction_fixture(
            doc,
            r#"{"entities": ["Known"]}"#,
            r#"{"atoms": [{"text": "t", "entities": ["Mystery"]}], "triples": []}"#,
        );
        let err = extract(&gw, &DocId("d".into()), &one_chunk(doc)).unwrap_err();
        match err {
            Error::Extraction { scope, reason } => {
                assert_eq!(scope, "doc d chunk 0");
                assert!(reason.contains("Mystery"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn extract_rejects_atoms_without_entities() {
        let doc = "more text";
        let gw = extraction_fixture(
            doc,
            r#"{"entities": ["A"]}"#,
            r#"{"atoms": [{"text": "floating claim", "entities": []}], "triples": []}"#,
        );
        assert!(extract(&gw, &DocId("d".into()), &one_chunk(doc)).is_err());
    }

    #[test]
    fn extract_rejects_triples_with_unknown_endpoints() {
        let doc = "third text";
        let gw = extraction_fixture(
            doc,
            r#"{"entities": ["A"]}"#,
            r#"{"atoms": [{"text": "t", "entities": ["A"]}],
               "triples": [{"head": "A", "relation": "r", "tail": "B"}]}"#,
        );
        assert!(extract(&gw, &DocId("d".into()), &one_chunk(doc)).is_err());
    }

    #[test]
    fn extract_deduplicates_ner_surface_forms() {
        let doc = "dedup text";
        let gw = extraction_fixture(
            doc,
            r#"{"entities": ["Aspirin", "aspirin", "ASPIRIN  "]}"#,
            r#"{"atoms": [{"text": "t", "entities": ["aspirin"]}], "triples": []}"#,
        );
        let out = extract(&gw, &DocId("d".into()), &one_chunk(doc)).unwrap();
        assert_eq!(out.entities, vec!["Aspirin"]);
        assert_eq!(out.atoms[0].entity_names, vec!["Aspirin"]);
    }

    fn tiny_corpus() -> Vec<Document> {
        vec![
            Document {
                id: DocId("doc-b".into()),
                text: "Aspirin irreversibly blocks COX-1 in platelets.".into(),
            },
            Document {
                id: DocId("doc-a".into()),
                text: "Reye syndrome follows aspirin use in children.".into(),
            },
        ]
    }

    fn tiny_gateway() -> LlmGateway {
        let mut mock = MockBackend::new();
        mock.respond_on(
            TemplateName::Ner,
            &["document"],
            bindings(&[("document", "Aspirin irreversibly blocks COX-1 in platelets.")]),
            r#"{"entities": ["Aspirin", "COX-1"]}"#,
        );
        mock.respond_on(
            TemplateName::UnifiedExtraction,
            &["document"],
            bindings(&[("document", "Aspirin irreversibly blocks COX-1 in platelets.")]),
            r#"{"atoms": [{"text": "Aspirin irreversibly inhibits COX-1", "entities": ["Aspirin", "COX-1"], "span": [0, 33]}],
               "triples": [{"head": "Aspirin", "relation": "inhibits", "tail": "COX-1"}]}"#,
        );
        mock.respond_on(
            TemplateName::Ner,
            &["document"],
            bindings(&[("document", "Reye syndrome follows aspirin use in children.")]),
            r#"{"entities": ["Reye syndrome", "Aspirin"]}"#,
        );
        mock.respond_on(
            TemplateName::UnifiedExtraction,
            &["document"],
            bindings(&[("document", "Reye syndrome follows aspirin use in children.")]),
            r#"{"atoms": [{"text": "Aspirin use precedes Reye syndrome", "entities": ["Aspirin", "Reye syndrome"]}],
               "triples": [{"head": "Aspirin", "relation": "associated_with", "tail": "Reye syndrome"}]}"#,
        );
        LlmGateway::mock(mock)
    }

    #[test]
    fn build_graph_assembles_and_freezes() {
        let encoder = NgramHashEncoder::default();
        let (graph, report) =
            build_graph(&tiny_corpus(), &tiny_gateway(), &encoder, &BuildParams::default())
                .unwrap();
        assert!(graph.is_frozen());
        assert_eq!(report.docs_total, 2);
        assert_eq!(report.docs_failed, 0);
        assert_eq!(report.chunks_total, 2);
        assert_eq!(report.entities, 3);
        assert_eq!(report.atoms, 2);
        assert_eq!(report.triples, 2);
        assert_eq!(report.containment_edges, 4);
        // aspirin-cox1 and aspirin-reye, one relation label each
        assert_eq!(report.relevance_edges, 2);
        assert!(report.failures.is_empty());
        // Atom ids encode doc, chunk, and position.
        assert!(graph.atom(&AtomId("doc-a/c0/a0".into())).is_some());
        assert!(graph.atom(&AtomId("doc-b/c0/a0".into())).is_some());
    }

    #[test]
    fn build_graph_is_order_independent() {
        let encoder = NgramHashEncoder::default();
        let corpus = tiny_corpus();
        let mut reversed = corpus.clone();
        reversed.reverse();
        let (g1, _) =
            build_graph(&corpus, &tiny_gateway(), &encoder, &BuildParams::default()).unwrap();
        let (g2, _) =
            build_graph(&reversed, &tiny_gateway(), &encoder, &BuildParams::default()).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn failed_chunks_are_skipped_and_reported() {
        let encoder = NgramHashEncoder::default();
        let mut corpus = tiny_corpus();
        corpus.push(Document {
            id: DocId("doc-c".into()),
            text: "This document has no fixture coverage.".into(),
        });
        let (graph, report) =
            build_graph(&corpus, &tiny_gateway(), &encoder, &BuildParams::default()).unwrap();
        assert_eq!(report.docs_total, 3);
        assert_eq!(report.docs_failed, 1);
        assert_eq!(report.chunks_failed, 1);
        assert_eq!(report.failures.len(), 2); // chunk failure + doc failure
        assert_eq!(graph.num_atoms(), 2);
    }

    #[test]
    fn all_documents_failing_is_an_error() {
        let encoder = NgramHashEncoder::default();
        let corpus = vec![Document {
            id: DocId("lonely".into()),
            text: "no fixtures for this".into(),
        }];
        let err = build_graph(
            &corpus,
            &LlmGateway::mock(MockBackend::new()),
            &encoder,
            &BuildParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BuildAllFailed { total: 1, .. }));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let encoder = NgramHashEncoder::default();
        let err = build_graph(
            &[],
            &LlmGateway::mock(MockBackend::new()),
            &encoder,
            &BuildParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyBuild));
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let encoder = NgramHashEncoder::default();
        let corpus = vec![
            Document {
                id: DocId("same".into()),
                text: "a".into(),
            },
            Document {
                id: DocId("same".into()),
                text: "b".into(),
            },
        ];
        assert!(build_graph(
            &corpus,
            &LlmGateway::mock(MockBackend::new()),
            &encoder,
            &BuildParams::default(),
        )
        .is_err());
    }
}
