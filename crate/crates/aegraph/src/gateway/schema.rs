//! Typed payload parsing for model responses. Each parser names the first
//! schema violation it finds; extraneous keys pass through unremarked.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::gateway::TemplateName;

#[derive(Debug, Clone, PartialEq)]
pub struct NerPayload {
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedAtom {
    pub text: String,
    pub entities: Vec<String>,
    pub span: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionPayload {
    pub atoms: Vec<ExtractedAtom>,
    pub triples: Vec<ExtractedTriple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubQuestionPayload {
    pub text: String,
    pub focus: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPayload {
    pub keep: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaimCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

fn violation(template: TemplateName, msg: impl Into<String>) -> Error {
    Error::Schema {
        template: template.to_string(),
        violation: msg.into(),
    }
}

/// Strips a markdown code fence if the whole payload is wrapped in one;
/// models add them habitually and they carry no information.
fn strip_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let Some(end) = rest.rfind("```") else {
        return trimmed;
    };
    let body = &rest[..end];
    // Drop the optional language tag on the opening fence line.
    match body.find('\n') {
        Some(nl) => body[nl + 1..].trim(),
        None => body.trim(),
    }
}

fn parse_json(template: TemplateName, text: &str) -> Result<Value> {
    serde_json::from_str(strip_fence(text))
        .map_err(|e| violation(template, format!("response is not valid JSON: {e}")))
}

fn require<'v>(template: TemplateName, obj: &'v Value, key: &str) -> Result<&'v Value> {
    obj.get(key)
        .ok_or_else(|| violation(template, format!("missing required key `{key}`")))
}

fn require_at<'v>(
    template: TemplateName,
    obj: &'v Value,
    key: &str,
    path: &str,
) -> Result<&'v Value> {
    obj.get(key)
        .ok_or_else(|| violation(template, format!("missing required key `{path}`")))
}

fn as_string(template: TemplateName, v: &Value, what: &str) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| violation(template, format!("`{what}` must be a string")))
}

pub fn parse_ner(text: &str) -> Result<NerPayload> {
    const T: TemplateName = TemplateName::Ner;
    let root = parse_json(T, text)?;
    let list = require(T, &root, "entities")?
        .as_array()
        .ok_or_else(|| violation(T, "`entities` must be an array"))?;
    let mut entities = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        entities.push(as_string(T, item, &format!("entities[{i}]"))?);
    }
    Ok(NerPayload { entities })
}

pub fn parse_extraction(text: &str) -> Result<ExtractionPayload> {
    const T: TemplateName = TemplateName::UnifiedExtraction;
    let root = parse_json(T, text)?;
    let atom_list = require(T, &root, "atoms")?
        .as_array()
        .ok_or_else(|| violation(T, "`atoms` must be an array"))?;
    let mut atoms = Vec::with_capacity(atom_list.len());
    for (i, item) in atom_list.iter().enumerate() {
        let text_field = as_string(
            T,
            require_at(T, item, "text", &format!("atoms[{i}].text"))?,
            &format!("atoms[{i}].text"),
        )?;
        let ents = require_at(T, item, "entities", &format!("atoms[{i}].entities"))?
            .as_array()
            .ok_or_else(|| violation(T, format!("`atoms[{i}].entities` must be an array")))?;
        let mut entities = Vec::with_capacity(ents.len());
        for (j, e) in ents.iter().enumerate() {
            entities.push(as_string(T, e, &format!("atoms[{i}].entities[{j}]"))?);
        }
        let span = match item.get("span") {
            None | Some(Value::Null) => None,
            Some(v) => {
                let pair = v
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| violation(T, format!("`atoms[{i}].span` must be [start, end]")))?;
                let s = pair[0].as_u64().ok_or_else(|| {
                    violation(T, format!("`atoms[{i}].span[0]` must be a non-negative integer"))
                })?;
                let e = pair[1].as_u64().ok_or_else(|| {
                    violation(T, format!("`atoms[{i}].span[1]` must be a non-negative integer"))
                })?;
                Some((s as usize, e as usize))
            }
        };
        atoms.push(ExtractedAtom {
            text: text_field,
            entities,
            span,
        });
    }
    let triple_list = require(T, &root, "triples")?
        .as_array()
        .ok_or_else(|| violation(T, "`triples` must be an array"))?;
    let mut triples = Vec::with_capacity(triple_list.len());
    for (i, item) in triple_list.iter().enumerate() {
        triples.push(ExtractedTriple {
            head: as_string(
                T,
                require_at(T, item, "head", &format!("triples[{i}].head"))?,
                &format!("triples[{i}].head"),
            )?,
            relation: as_string(
                T,
                require_at(T, item, "relation", &format!("triples[{i}].relation"))?,
                &format!("triples[{i}].relation"),
            )?,
            tail: as_string(
                T,
                require_at(T, item, "tail", &format!("triples[{i}].tail"))?,
                &format!("triples[{i}].tail"),
            )?,
        });
    }
    Ok(ExtractionPayload { atoms, triples })
}

pub fn parse_complexity(text: &str) -> Result<f64> {
    const T: TemplateName = TemplateName::Decomposition;
    let root = parse_json(T, text)?;
    require(T, &root, "complexity")?
        .as_f64()
        .ok_or_else(|| violation(T, "`complexity` must be a number"))
}

pub fn parse_sub_questions(text: &str) -> Result<Vec<SubQuestionPayload>> {
    const T: TemplateName = TemplateName::Decomposition;
    let root = parse_json(T, text)?;
    let list = require(T, &root, "sub_questions")?
        .as_array()
        .ok_or_else(|| violation(T, "`sub_questions` must be an array"))?;
    let mut out = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        out.push(SubQuestionPayload {
            text: as_string(
                T,
                require_at(T, item, "text", &format!("sub_questions[{i}].text"))?,
                &format!("sub_questions[{i}].text"),
            )?,
            focus: as_string(
                T,
                require_at(T, item, "focus", &format!("sub_questions[{i}].focus"))?,
                &format!("sub_questions[{i}].focus"),
            )?,
        });
    }
    Ok(out)
}

pub fn parse_filter(text: &str) -> Result<FilterPayload> {
    const T: TemplateName = TemplateName::AtomFilter;
    let root = parse_json(T, text)?;
    let list = require(T, &root, "keep")?
        .as_array()
        .ok_or_else(|| violation(T, "`keep` must be an array"))?;
    let mut keep = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        keep.push(
            item.as_i64()
                .ok_or_else(|| violation(T, format!("`keep[{i}]` must be an integer")))?,
        );
    }
    Ok(FilterPayload { keep })
}

pub fn parse_claim_counts(text: &str) -> Result<ClaimCounts> {
    const T: TemplateName = TemplateName::ClaimVerify;
    let root = parse_json(T, text)?;
    let field = |key: &str| -> Result<u64> {
        require(T, &root, key)?
            .as_u64()
            .ok_or_else(|| violation(T, format!("`{key}` must be a non-negative integer")))
    };
    Ok(ClaimCounts {
        tp: field("tp")?,
        fp: field("fp")?,
        fn_: field("fn")?,
    })
}
