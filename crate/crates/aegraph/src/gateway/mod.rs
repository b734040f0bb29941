//! Prompted-model gateway. Every model interaction flows through one of
//! the named templates below, so prompts stay auditable and responses stay
//! reproducible under the mock backend.

pub mod mock;
pub mod remote;
pub mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub use mock::MockBackend;
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    Ner,
    UnifiedExtraction,
    Decomposition,
    AtomFilter,
    AbstractQa,
    PreciseQa,
    ClaimVerify,
}

impl TemplateName {
    pub const ALL: [TemplateName; 7] = [
        TemplateName::Ner,
        TemplateName::UnifiedExtraction,
        TemplateName::Decomposition,
        TemplateName::AtomFilter,
        TemplateName::AbstractQa,
        TemplateName::PreciseQa,
        TemplateName::ClaimVerify,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateName::Ner => "ner",
            TemplateName::UnifiedExtraction => "unified_extraction",
            TemplateName::Decomposition => "decomposition",
            TemplateName::AtomFilter => "atom_filter",
            TemplateName::AbstractQa => "abstract_qa",
            TemplateName::PreciseQa => "precise_qa",
            TemplateName::ClaimVerify => "claim_verify",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub text: String,
}

/// Binding values substituted for `{{placeholder}}` markers.
pub type Bindings = BTreeMap<String, String>;

pub fn bindings(pairs: &[(&str, &str)]) -> Bindings {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl PromptTemplate {
    /// Substitutes every `{{name}}` marker. Unbound markers are an error;
    /// extra bindings are permitted and ignored. Single braces pass
    /// through untouched, so JSON examples in template text need no
    /// escaping.
    pub fn render(&self, bindings: &Bindings) -> Result<String> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                return Err(Error::UnboundPlaceholder {
                    template: self.name.to_string(),
                    placeholder: "unterminated {{".to_string(),
                });
            };
            let key = &after[..end];
            match bindings.get(key) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(Error::UnboundPlaceholder {
                        template: self.name.to_string(),
                        placeholder: key.to_string(),
                    })
                }
            }
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The built-in templates, compiled in from `templates/*.txt`. A registry
/// holds exactly one template per name.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        let texts: [(TemplateName, &str); 7] = [
            (TemplateName::Ner, include_str!("../../templates/ner.txt")),
            (
                TemplateName::UnifiedExtraction,
                include_str!("../../templates/unified_extraction.txt"),
            ),
            (
                TemplateName::Decomposition,
                include_str!("../../templates/decomposition.txt"),
            ),
            (
                TemplateName::AtomFilter,
                include_str!("../../templates/atom_filter.txt"),
            ),
            (
                TemplateName::AbstractQa,
                include_str!("../../templates/abstract_qa.txt"),
            ),
            (
                TemplateName::PreciseQa,
                include_str!("../../templates/precise_qa.txt"),
            ),
            (
                TemplateName::ClaimVerify,
                include_str!("../../templates/claim_verify.txt"),
            ),
        ];
        for (name, text) in texts {
            templates.insert(
                name,
                PromptTemplate {
                    name,
                    text: text.to_string(),
                },
            );
        }
        TemplateRegistry { templates }
    }

    /// Overrides built-ins with `<name>.txt` files found in `dir`, so
    /// deployments can edit prompts without rebuilding.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut reg = Self::builtin();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                reg.templates.insert(name, PromptTemplate { name, text });
            }
        }
        Ok(reg)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub raw: String,
    pub usage: TokenUsage,
    pub latency: Duration,
}

pub struct BackendCall<'a> {
    pub template: TemplateName,
    pub prompt: &'a str,
    pub bindings: &'a Bindings,
}

#[derive(Debug)]
pub struct BackendReply {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait Backend: Send + Sync {
    fn complete(&self, call: &BackendCall<'_>) -> Result<BackendReply>;
    fn kind(&self) -> &'static str;
}

/// Counting semaphore bounding concurrent in-flight backend calls.
struct InFlightGate {
    state: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl InFlightGate {
    fn new(cap: usize) -> Self {
        InFlightGate {
            state: Mutex::new(0),
            cv: Condvar::new(),
            cap: cap.max(1),
        }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        let mut in_flight = self.state.lock().expect("gate poisoned");
        while *in_flight >= self.cap {
            in_flight = self.cv.wait(in_flight).expect("gate poisoned");
        }
        *in_flight += 1;
        InFlightPermit { gate: self }
    }
}

struct InFlightPermit<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.gate.state.lock().expect("gate poisoned");
        *in_flight -= 1;
        self.gate.cv.notify_one();
    }
}

pub struct LlmGateway {
    registry: TemplateRegistry,
    backend: Box<dyn Backend>,
    gate: InFlightGate,
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl LlmGateway {
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

    pub fn new(registry: TemplateRegistry, backend: Box<dyn Backend>, max_in_flight: usize) -> Self {
        LlmGateway {
            registry,
            backend,
            gate: InFlightGate::new(max_in_flight),
            calls: AtomicU64::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    pub fn mock(backend: MockBackend) -> Self {
        Self::new(
            TemplateRegistry::builtin(),
            Box::new(backend),
            Self::DEFAULT_MAX_IN_FLIGHT,
        )
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    pub fn registry(&self) -> &TemplateRegistry {
        &self.registry
    }

    /// Renders the named template with `bindings` and sends it to the
    /// backend. Token usage is added to the gateway totals. A `__repair`
    /// binding, when present, is appended to the rendered prompt so a
    /// corrective re-ask differs from the original request.
    pub fn complete(&self, name: TemplateName, bindings: &Bindings) -> Result<LlmResponse> {
        let mut prompt = self.registry.get(name).render(bindings)?;
        if let Some(note) = bindings.get("__repair") {
            prompt.push_str("\n\n");
            prompt.push_str(note);
        }
        let started = Instant::now();
        let reply = {
            let _permit = self.gate.acquire();
            self.backend.complete(&BackendCall {
                template: name,
                prompt: &prompt,
                bindings,
            })?
        };
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_tokens
            .fetch_add(reply.usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(reply.usage.completion_tokens, Ordering::Relaxed);
        Ok(LlmResponse {
            raw: reply.text,
            usage: reply.usage,
            latency: started.elapsed(),
        })
    }

    /// `complete` plus schema validation. A response that fails to parse
    /// is re-asked exactly once with a corrective note; a second failure
    /// surfaces the violation.
    pub fn complete_parsed<T>(
        &self,
        name: TemplateName,
        bindings: &Bindings,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<(T, LlmResponse)> {
        let first = self.complete(name, bindings)?;
        match parse(&first.raw) {
            Ok(v) => Ok((v, first)),
            Err(violation) => {
                log::warn!("{name}: response failed validation ({violation}); re-asking once");
                let mut repair = bindings.clone();
                repair.insert(
                    "__repair".to_string(),
                    format!(
                        "The previous reply was rejected: {violation}. \
                         Reply again, following the required format exactly."
                    ),
                );
                let second = self.complete(name, &repair)?;
                match parse(&second.raw) {
                    Ok(v) => Ok((v, second)),
                    Err(second_violation) => Err(second_violation),
                }
            }
        }
    }

    /// Cumulative usage since construction. Monotone: every completed call
    /// adds its exact per-call counts.
    pub fn usage(&self) -> UsageTotals {
        UsageTotals {
            calls: self.calls.load(Ordering::Relaxed),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}
