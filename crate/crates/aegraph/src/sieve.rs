//! Candidate selection and evidence assembly. Per-query score vectors
//! become top-K candidate sets, the sets are merged with max-score
//! semantics, a model call prunes the merged set against the original
//! question, and the survivors are grouped into per-document citation
//! units that feed grounded generation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{bindings, schema, LlmGateway, TemplateName};
use crate::graph::{AtomEntityGraph, AtomId, DocId};
use crate::text;

/// One merged candidate: best score across the queries that surfaced it,
/// plus which effective-set positions those were.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredAtom {
    pub atom: AtomId,
    pub score: f64,
    pub sources: Vec<usize>,
}

/// Top K positively-scored atoms, descending score, ties broken by
/// ascending atom id. All-zero scores produce an empty set with a
/// warning rather than an error.
pub fn top_k_atoms(scores: &[(AtomId, f64)], k: usize) -> Result<Vec<(AtomId, f64)>> {
    if k == 0 {
        return Err(Error::invalid("top-k requires k >= 1"));
    }
    let mut positive: Vec<&(AtomId, f64)> = scores.iter().filter(|(_, s)| *s > 0.0).collect();
    if positive.is_empty() {
        warn!("no atom carries positive score; candidate set is empty");
        return Ok(Vec::new());
    }
    positive.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    positive.truncate(k);
    Ok(positive.into_iter().cloned().collect())
}

/// Union of per-query candidate sets. A duplicate atom keeps its maximum
/// score and remembers every query index that surfaced it. The result is
/// ordered by descending score with ascending-id ties, which also fixes
/// the candidate numbering the filter sees.
pub fn merge(sets: &[Vec<(AtomId, f64)>]) -> Vec<ScoredAtom> {
    let mut best: BTreeMap<&AtomId, (f64, Vec<usize>)> = BTreeMap::new();
    for (qi, set) in sets.iter().enumerate() {
        for (atom, score) in set {
            match best.get_mut(atom) {
                Some(entry) => {
                    entry.0 = entry.0.max(*score);
                    entry.1.push(qi);
                }
                None => {
                    best.insert(atom, (*score, vec![qi]));
                }
            }
        }
    }
    let mut merged: Vec<ScoredAtom> = best
        .into_iter()
        .map(|(atom, (score, sources))| ScoredAtom {
            atom: atom.clone(),
            score,
            sources,
        })
        .collect();
    merged.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.atom.cmp(&b.atom))
    });
    merged
}

/// Model-based relevance pruning against the ORIGINAL question (never a
/// sub-query). Candidates are numbered from 0 in merged order; the reply
/// lists indices to keep. Out-of-range indices are discarded with a
/// warning. If the reply is malformed even after one repair attempt the
/// filter fails open and keeps everything, because silently losing
/// evidence is worse than passing noise.
pub fn filter(
    gateway: &LlmGateway,
    graph: &AtomEntityGraph,
    original_question: &str,
    merged: &[ScoredAtom],
) -> Result<(Vec<ScoredAtom>, bool)> {
    if merged.is_empty() {
        return Ok((Vec::new(), false));
    }
    let mut listing = String::new();
    for (i, c) in merged.iter().enumerate() {
        let atom = graph
            .atom(&c.atom)
            .ok_or_else(|| Error::graph(format!("candidate `{}` is not in the graph", c.atom)))?;
        listing.push_str(&format!("{i}. {}\n", atom.text));
    }
    let reply = gateway.complete_parsed(
        TemplateName::AtomFilter,
        &bindings(&[
            ("question", original_question),
            ("candidates", listing.trim_end()),
        ]),
        schema::parse_filter,
    );
    match reply {
        Ok((payload, _)) => {
            let mut keep = vec![false; merged.len()];
            for idx in payload.keep {
                if idx >= 0 && (idx as usize) < merged.len() {
                    keep[idx as usize] = true;
                } else {
                    warn!(
                        "filter kept index {idx} outside 0..{}; discarding it",
                        merged.len()
                    );
                }
            }
            let kept: Vec<ScoredAtom> = merged
                .iter()
                .zip(keep.iter())
                .filter(|(_, &k)| k)
                .map(|(c, _)| c.clone())
                .collect();
            Ok((kept, false))
        }
        Err(Error::Schema { violation, .. }) => {
            warn!(
                "RELEVANCE FILTER FAILED OPEN: reply stayed malformed after one repair \
                 ({violation}); keeping all {} candidates",
                merged.len()
            );
            Ok((merged.to_vec(), true))
        }
        Err(other) => Err(other),
    }
}

/// A group of atoms cited as one numbered evidence item. All members
/// share a source document; members with overlapping spans are fused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitationUnit {
    pub source_doc: DocId,
    pub atom_ids: Vec<AtomId>,
    /// Deduplicated member texts joined in document (span) order.
    pub text: String,
    pub best_score: f64,
    /// Covering span when every member carries one.
    pub span: Option<(usize, usize)>,
}

/// Groups filtered atoms by source document and fuses overlapping spans
/// within each document into single citation units. Atoms without span
/// hints stay separate units. Units are ordered by descending best
/// member score (ties by first atom id) regardless of document.
pub fn aggregate(graph: &AtomEntityGraph, filtered: &[ScoredAtom]) -> Result<Vec<CitationUnit>> {
    struct Member<'a> {
        id: &'a AtomId,
        text: &'a str,
        score: f64,
        span: Option<(usize, usize)>,
    }
    let mut by_doc: BTreeMap<&DocId, Vec<Member>> = BTreeMap::new();
    for c in filtered {
        let atom = graph
            .atom(&c.atom)
            .ok_or_else(|| Error::graph(format!("filtered atom `{}` is not in the graph", c.atom)))?;
        by_doc.entry(&atom.source_doc).or_default().push(Member {
            id: &c.atom,
            text: &atom.text,
            score: c.score,
            span: atom.span_hint,
        });
    }

    let mut units: Vec<CitationUnit> = Vec::new();
    for (doc, mut members) in by_doc {
        // Spanned members first, in document order; spanless members
        // afterwards by id. Each spanless member is its own unit.
        members.sort_by(|a, b| match (a.span, b.span) {
            (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.id.cmp(b.id)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.id.cmp(b.id),
        });
        let mut open: Option<(usize, usize, Vec<&Member>)> = None;
        let flush = |group: Vec<&Member>, span: Option<(usize, usize)>, units: &mut Vec<CitationUnit>| {
            let mut texts: Vec<&str> = Vec::new();
            for m in &group {
                if !texts.contains(&m.text) {
                    texts.push(m.text);
                }
            }
            units.push(CitationUnit {
                source_doc: doc.clone(),
                atom_ids: group.iter().map(|m| m.id.clone()).collect(),
                text: texts.join(" "),
                best_score: group
                    .iter()
                    .map(|m| m.score)
                    .fold(f64::NEG_INFINITY, f64::max),
                span,
            });
        };
        for m in &members {
            match m.span {
                Some((s, e)) => match open.take() {
                    Some((os, oe, mut group)) if s < oe => {
                        group.push(m);
                        open = Some((os, oe.max(e), group));
                    }
                    Some((os, oe, group)) => {
                        flush(group, Some((os, oe)), &mut units);
                        open = Some((s, e, vec![m]));
                    }
                    None => open = Some((s, e, vec![m])),
                },
                None => {
                    if let Some((os, oe, group)) = open.take() {
                        flush(group, Some((os, oe)), &mut units);
                    }
                    flush(vec![m], None, &mut units);
                }
            }
        }
        if let Some((os, oe, group)) = open.take() {
            flush(group, Some((os, oe)), &mut units);
        }
    }

    units.sort_by(|a, b| {
        b.best_score
            .partial_cmp(&a.best_score)
            .unwrap()
            .then_with(|| a.atom_ids[0].cmp(&b.atom_ids[0]))
    });
    Ok(units)
}

/// Enforces the context token budget by dropping the lowest-scored units
/// until the total serialized size fits. Returns the surviving units and
/// how many were dropped.
pub fn budget(units: Vec<CitationUnit>, max_tokens: usize) -> (Vec<CitationUnit>, usize) {
    let mut kept = units;
    let mut dropped = 0usize;
    let mut total: usize = kept.iter().map(|u| text::count_tokens(&u.text)).sum();
    while total > max_tokens && !kept.is_empty() {
        let last = kept.pop().expect("non-empty");
        total -= text::count_tokens(&last.text);
        dropped += 1;
    }
    if dropped > 0 {
        warn!("context budget {max_tokens} tokens: dropped {dropped} lowest-scored citation units");
    }
    (kept, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    Abstract,
    Precise,
}

impl AnswerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnswerMode::Abstract => "abstract",
            AnswerMode::Precise => "precise",
        }
    }

    fn template(&self) -> TemplateName {
        match self {
            AnswerMode::Abstract => TemplateName::AbstractQa,
            AnswerMode::Precise => TemplateName::PreciseQa,
        }
    }
}

impl fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abstract" => Ok(AnswerMode::Abstract),
            "precise" => Ok(AnswerMode::Precise),
            other => Err(Error::invalid(format!(
                "unknown answer mode `{other}`; expected abstract or precise"
            ))),
        }
    }
}

/// Serializes citation units as numbered evidence for the QA templates.
/// An empty unit list becomes an explicit no-evidence notice so the model
/// cannot mistake missing retrieval for an empty document.
pub fn render_evidence(units: &[CitationUnit]) -> String {
    if units.is_empty() {
        return "No supporting evidence was retrieved for this question.".to_string();
    }
    let mut out = String::new();
    for (i, u) in units.iter().enumerate() {
        out.push_str(&format!("[{}] ({}) {}\n", i + 1, u.source_doc, u.text));
    }
    out.trim_end().to_string()
}

pub fn generate(
    gateway: &LlmGateway,
    question: &str,
    units: &[CitationUnit],
    mode: AnswerMode,
) -> Result<String> {
    let evidence = render_evidence(units);
    let response = gateway.complete(
        mode.template(),
        &bindings(&[("question", question), ("evidence", &evidence)]),
    )?;
    Ok(response.raw.trim().to_string())
}

/// Everything retrieval produced for one query, in pipeline order.
/// Wall-clock timing deliberately lives outside this structure so its
/// serialization is byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceBundle {
    /// Candidate sets aligned with the effective query set.
    pub per_query: Vec<Vec<(AtomId, f64)>>,
    pub merged: Vec<ScoredAtom>,
    pub filtered: Vec<ScoredAtom>,
    pub filter_failed_open: bool,
    /// Post-budget citation units, the A* set.
    pub units: Vec<CitationUnit>,
    pub units_dropped_by_budget: usize,
}

impl EvidenceBundle {
    /// The subset relation chain that must always hold:
    /// unit members ⊆ filtered ⊆ merged.
    pub fn is_monotone(&self) -> bool {
        let merged: Vec<&AtomId> = self.merged.iter().map(|c| &c.atom).collect();
        let filtered: Vec<&AtomId> = self.filtered.iter().map(|c| &c.atom).collect();
        filtered.iter().all(|a| merged.contains(a))
            && self
                .units
                .iter()
                .flat_map(|u| u.atom_ids.iter())
                .all(|a| filtered.contains(&a))
    }
}
