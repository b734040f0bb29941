//! Complexity-gated query decomposition. Simple queries pass through
//! untouched; structurally complex ones gain up to `max_sub_questions`
//! facet-targeted sub-queries that are retrieved alongside the original.

use log::warn;
use serde::Serialize;

use crate::error::Result;
use crate::gateway::{bindings, schema, LlmGateway, TemplateName};
use crate::text;

#[derive(Debug, Clone, Copy)]
pub struct DecomposeParams {
    /// Complexity at or above this decomposes (the boundary decomposes).
    pub complexity_threshold: f64,
    pub max_sub_questions: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            complexity_threshold: 6.5,
            max_sub_questions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubQuery {
    pub text: String,
    /// Which facet of the original question this targets.
    pub focus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPlan {
    pub original: String,
    pub complexity: f64,
    pub sub_queries: Vec<SubQuery>,
    /// The original query first, then any sub-queries, in model order.
    pub effective_set: Vec<String>,
}

/// One scoring call; the result is clamped into [0, 10].
pub fn score_complexity(
    gateway: &LlmGateway,
    question: &str,
    params: &DecomposeParams,
) -> Result<f64> {
    let max = params.max_sub_questions.to_string();
    let (raw, _) = gateway.complete_parsed(
        TemplateName::Decomposition,
        &bindings(&[
            ("mode", "score"),
            ("question", question),
            ("max_sub_questions", &max),
        ]),
        schema::parse_complexity,
    )?;
    if !(0.0..=10.0).contains(&raw) {
        warn!("complexity score {raw} outside [0, 10]; clamping");
    }
    Ok(raw.clamp(0.0, 10.0))
}

pub fn plan(gateway: &LlmGateway, question: &str, params: &DecomposeParams) -> Result<QueryPlan> {
    let complexity = score_complexity(gateway, question, params)?;
    let mut sub_queries: Vec<SubQuery> = Vec::new();
    if complexity >= params.complexity_threshold {
        let max = params.max_sub_questions.to_string();
        let (subs, _) = gateway.complete_parsed(
            TemplateName::Decomposition,
            &bindings(&[
                ("mode", "expand"),
                ("question", question),
                ("max_sub_questions", &max),
            ]),
            schema::parse_sub_questions,
        )?;
        if subs.len() > params.max_sub_questions {
            warn!(
                "decomposition returned {} sub-queries; keeping the first {}",
                subs.len(),
                params.max_sub_questions
            );
        }
        let original_key = text::normalize(question);
        for s in subs.into_iter().take(params.max_sub_questions) {
            // A sub-query that restates the original adds nothing but a
            // duplicate retrieval pass.
            if text::normalize(&s.text) == original_key {
                warn!("dropping sub-query identical to the original question");
                continue;
            }
            sub_queries.push(SubQuery {
                text: s.text,
                focus: s.focus,
            });
        }
    }
    let mut effective_set = Vec::with_capacity(1 + sub_queries.len());
    effective_set.push(question.to_string());
    effective_set.extend(sub_queries.iter().map(|s| s.text.clone()));
    Ok(QueryPlan {
        original: question.to_string(),
        complexity,
        sub_queries,
        effective_set,
    })
}
