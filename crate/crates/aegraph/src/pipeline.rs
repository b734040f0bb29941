//! End-to-end query answering over a frozen graph: plan the query, retrieve
//! candidates per effective query, sieve them into citation units, generate
//! the grounded answer, and wrap everything in one serializable record.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::warn;
use serde::Serialize;

use crate::config::RunConfig;
use crate::decomposer::{self, QueryPlan};
use crate::encoder::TextEncoder;
use crate::error::Result;
use crate::gateway::{LlmGateway, UsageTotals};
use crate::graph::{AtomEntityGraph, AtomId};
use crate::index::VectorIndex;
use crate::resonance;
use crate::sieve::{self, EvidenceBundle};

/// Wall-clock milliseconds per pipeline stage. Lives outside the evidence
/// bundle so determinism checks can compare bundles byte for byte.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub plan_ms: f64,
    pub retrieve_ms: f64,
    pub sieve_ms: f64,
    pub generate_ms: f64,
    pub total_ms: f64,
}

/// One query's full result: the plan, the evidence chain with scores and
/// provenance, the answer, and this query's timing and token cost. Written
/// one record per line in batch output.
#[derive(Debug, Clone, Serialize)]
pub struct QueryRecord {
    pub query: String,
    pub plan: QueryPlan,
    pub evidence: EvidenceBundle,
    pub answer: String,
    pub timing: StageTimings,
    /// Gateway usage attributed to this query. Exact when queries run one
    /// at a time; under concurrent batches, concurrent calls may blend into
    /// each other's deltas while batch totals stay exact.
    pub usage: UsageTotals,
}

/// Query-serving state assembled once per loaded graph: the dense atom
/// index plus handles to the gateway and encoder.
pub struct QueryEngine<'a> {
    graph: &'a AtomEntityGraph,
    gateway: &'a LlmGateway,
    encoder: &'a dyn TextEncoder,
    atom_index: VectorIndex<AtomId>,
    config: RunConfig,
}

impl<'a> QueryEngine<'a> {
    /// Requires a frozen graph and a validated config; builds the dense
    /// retrieval index over all atom embeddings.
    pub fn new(
        graph: &'a AtomEntityGraph,
        gateway: &'a LlmGateway,
        encoder: &'a dyn TextEncoder,
        config: RunConfig,
    ) -> Result<Self> {
        config.validate()?;
        graph.compiled()?;
        if encoder.dimension() != graph.dimension() {
            return Err(crate::error::Error::DimensionMismatch {
                expected: graph.dimension(),
                got: encoder.dimension(),
            });
        }
        let mut atom_index = VectorIndex::new(graph.dimension());
        for atom in graph.atoms() {
            atom_index.add(atom.id.clone(), atom.embedding.clone())?;
        }
        Ok(QueryEngine {
            graph,
            gateway,
            encoder,
            atom_index,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Plan, retrieve, sieve, generate. Retrieval for the effective queries
    /// runs concurrently; everything after the merge is sequential.
    pub fn answer_query(&self, query: &str) -> Result<QueryRecord> {
        let start = Instant::now();
        let usage_before = self.gateway.usage();

        let plan = decomposer::plan(self.gateway, query, &self.config.decompose_params())?;
        let after_plan = Instant::now();

        let texts: Vec<&str> = plan.effective_set.iter().map(|s| s.as_str()).collect();
        let embeddings = self.encoder.encode_batch(&texts)?;

        let graph = self.graph;
        let compiled = graph.compiled()?;
        let atom_index = &self.atom_index;
        let seed_params = self.config.seed_params();
        let prop_params = self.config.propagation_params();
        let strategy = self.config.propagation_method;
        let k = self.config.retrieval_top_k;
        let per_query: Result<Vec<Vec<(AtomId, f64)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = embeddings
                .iter()
                .map(|embedding| {
                    let seed_params = &seed_params;
                    let prop_params = &prop_params;
                    scope.spawn(move || {
                        let pi = resonance::seed(embedding, graph, atom_index, seed_params)?;
                        let scores =
                            resonance::propagate(strategy, &compiled.adjacency, &pi.dense(), prop_params)?;
                        let ranked = resonance::atom_scores(&scores, compiled);
                        sieve::top_k_atoms(&ranked, k)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("retrieval thread panicked"))
                .collect()
        });
        let per_query = per_query?;
        let after_retrieve = Instant::now();

        let merged = sieve::merge(&per_query);
        let (filtered, filter_failed_open) =
            sieve::filter(self.gateway, graph, query, &merged)?;
        let aggregated = sieve::aggregate(graph, &filtered)?;
        let (units, units_dropped_by_budget) =
            sieve::budget(aggregated, self.config.context_budget_tokens);
        let after_sieve = Instant::now();

        let answer = sieve::generate(self.gateway, query, &units, self.config.answer_mode)?;
        let after_generate = Instant::now();

        let evidence = EvidenceBundle {
            per_query,
            merged,
            filtered,
            filter_failed_open,
            units,
            units_dropped_by_budget,
        };
        if !evidence.is_monotone() {
            warn!("evidence sets lost monotonicity for query {query:?}");
        }

        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        Ok(QueryRecord {
            query: query.to_string(),
            plan,
            evidence,
            answer,
            timing: StageTimings {
                plan_ms: ms(start, after_plan),
                retrieve_ms: ms(after_plan, after_retrieve),
                sieve_ms: ms(after_retrieve, after_sieve),
                generate_ms: ms(after_sieve, after_generate),
                total_ms: ms(start, after_generate),
            },
            usage: usage_delta(usage_before, self.gateway.usage()),
        })
    }

    /// Answers a batch over a bounded worker pool. Results come back in
    /// input order regardless of which worker finished first.
    pub fn answer_batch(&self, queries: &[String], workers: usize) -> Vec<Result<QueryRecord>> {
        if queries.is_empty() {
            return Vec::new();
        }
        let workers = workers.clamp(1, queries.len());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<QueryRecord>>>> =
            queries.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= queries.len() {
                        break;
                    }
                    let record = self.answer_query(&queries[i]);
                    *slots[i].lock().expect("result slot poisoned") = Some(record);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("result slot poisoned")
                    .expect("every index was claimed by a worker")
            })
            .collect()
    }
}

fn usage_delta(before: UsageTotals, after: UsageTotals) -> UsageTotals {
    UsageTotals {
        calls: after.calls.saturating_sub(before.calls),
        prompt_tokens: after.prompt_tokens.saturating_sub(before.prompt_tokens),
        completion_tokens: after.completion_tokens.saturating_sub(before.completion_tokens),
    }
}
