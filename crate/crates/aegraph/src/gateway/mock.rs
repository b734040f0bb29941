//! Deterministic offline backend. Responses come from a fixture table
//! keyed by (template, hash of bindings); a miss is a hard error so tests
//! can never silently invent model output.
//!
//! An entry may declare `key_fields` to match on a projection of the
//! bindings (for example only `question`), which keeps fixtures writable
//! by hand when other bindings carry machine-assembled text.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendCall, BackendReply, Bindings, TemplateName, TokenUsage};
use crate::text;

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureEntry {
    pub template: String,
    #[serde(default)]
    pub key_fields: Option<Vec<String>>,
    pub bindings: Bindings,
    pub response: String,
}

#[derive(Deserialize)]
struct FixtureFile {
    entries: Vec<FixtureEntry>,
}

struct ProjectedEntry {
    template: TemplateName,
    fields: Vec<String>,
    hash: u64,
    response: String,
}

#[derive(Default)]
pub struct MockBackend {
    exact: HashMap<(TemplateName, u64), String>,
    projected: Vec<ProjectedEntry>,
}

pub fn hash_bindings(bindings: &Bindings) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in bindings {
        for &b in k.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(PRIME);
        for &b in v.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0x1e;
        h = h.wrapping_mul(PRIME);
    }
    h
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: FixtureFile = serde_json::from_str(&body)
            .map_err(|e| Error::config(format!("fixture file {}: {e}", path.display())))?;
        let mut backend = Self::new();
        for entry in file.entries {
            backend.add_entry(entry)?;
        }
        Ok(backend)
    }

    pub fn add_entry(&mut self, entry: FixtureEntry) -> Result<()> {
        let template = TemplateName::parse(&entry.template)?;
        match entry.key_fields {
            None => {
                self.exact
                    .insert((template, hash_bindings(&entry.bindings)), entry.response);
            }
            Some(fields) => {
                let projection: Bindings = fields
                    .iter()
                    .filter_map(|f| entry.bindings.get(f).map(|v| (f.clone(), v.clone())))
                    .collect();
                if projection.len() != fields.len() {
                    return Err(Error::config(format!(
                        "fixture for {template}: key_fields {fields:?} not all present in bindings"
                    )));
                }
                self.projected.push(ProjectedEntry {
                    template,
                    fields,
                    hash: hash_bindings(&projection),
                    response: entry.response,
                });
            }
        }
        Ok(())
    }

    /// Registers a response matched on the full binding set.
    pub fn respond(&mut self, template: TemplateName, bindings: Bindings, response: &str) {
        self.exact
            .insert((template, hash_bindings(&bindings)), response.to_string());
    }

    /// Registers a response matched on a projection of the bindings.
    pub fn respond_on(
        &mut self,
        template: TemplateName,
        key_fields: &[&str],
        bindings: Bindings,
        response: &str,
    ) {
        let projection: Bindings = key_fields
            .iter()
            .filter_map(|f| bindings.get(*f).map(|v| (f.to_string(), v.clone())))
            .collect();
        assert_eq!(projection.len(), key_fields.len(), "key fields must be bound");
        self.projected.push(ProjectedEntry {
            template,
            fields: key_fields.iter().map(|s| s.to_string()).collect(),
            hash: hash_bindings(&projection),
            response: response.to_string(),
        });
    }

    fn lookup(&self, template: TemplateName, bindings: &Bindings) -> Option<&str> {
        let full = hash_bindings(bindings);
        if let Some(r) = self.exact.get(&(template, full)) {
            return Some(r);
        }
        for entry in &self.projected {
            if entry.template != template {
                continue;
            }
            let projection: Bindings = entry
                .fields
                .iter()
                .filter_map(|f| bindings.get(f).map(|v| (f.clone(), v.clone())))
                .collect();
            if projection.len() == entry.fields.len() && hash_bindings(&projection) == entry.hash {
                return Some(&entry.response);
            }
        }
        None
    }
}

impl Backend for MockBackend {
    fn complete(&self, call: &BackendCall<'_>) -> Result<BackendReply> {
        match self.lookup(call.template, call.bindings) {
            Some(response) => Ok(BackendReply {
                text: response.to_string(),
                usage: TokenUsage {
                    prompt_tokens: text::count_tokens(call.prompt) as u64,
                    completion_tokens: text::count_tokens(response) as u64,
                },
            }),
            None => Err(Error::FixtureMiss {
                template: call.template.to_string(),
                hash: hash_bindings(call.bindings),
                keys: call
                    .bindings
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }

    fn kind(&self) -> &'static str {
        "mock"
    }
}
