//! Remote backend speaking the common chat-completion wire shape:
//! POST {model, messages, temperature: 0} and read back
//! choices[0].message.content plus usage counters.
//!
//! Transient failures (transport errors, 429, 5xx) are retried up to
//! `max_attempts` with exponential backoff. Authentication failures and
//! other 4xx responses fail fast: retrying them cannot succeed.

use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendCall, BackendReply, TokenUsage};
use crate::text;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            max_attempts: 3,
            backoff_base: Duration::from_millis(200),
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::config("remote backend requires an endpoint URL"));
        }
        if config.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(RemoteBackend { config, agent })
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<BackendReply, AttemptError> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Status(status, _) if status == 401 || status == 403 => {
                AttemptError::Fatal(Error::Auth { status })
            }
            ureq::Error::Status(status, _) if status == 429 || status >= 500 => {
                AttemptError::Transient(format!("status {status}"))
            }
            ureq::Error::Status(status, _) => AttemptError::Fatal(Error::Transport {
                attempts: 1,
                reason: format!("status {status}; not retriable"),
            }),
            ureq::Error::Transport(t) => AttemptError::Transient(t.to_string()),
        })?;
        let parsed: ChatResponse = resp
            .into_json()
            .map_err(|e| AttemptError::Transient(format!("malformed response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Transient("response had no choices".to_string()))?;
        let usage = match parsed.usage {
            Some(u) => TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            },
            // Some servers omit usage; fall back to a whitespace estimate
            // so accounting stays monotone.
            None => TokenUsage {
                prompt_tokens: text::count_tokens(prompt) as u64,
                completion_tokens: text::count_tokens(&choice.message.content) as u64,
            },
        };
        Ok(BackendReply {
            text: choice.message.content,
            usage,
        })
    }
}

enum AttemptError {
    Transient(String),
    Fatal(Error),
}

impl Backend for RemoteBackend {
    fn complete(&self, call: &BackendCall<'_>) -> Result<BackendReply> {
        let mut last_reason = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(call.prompt) {
                Ok(reply) => return Ok(reply),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(reason)) => {
                    log::warn!(
                        "remote call for {} attempt {attempt}/{} failed: {reason}",
                        call.template,
                        self.config.max_attempts
                    );
                    last_reason = reason;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts: self.config.max_attempts,
            reason: last_reason,
        })
    }

    fn kind(&self) -> &'static str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{bindings, TemplateName};
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// One-shot HTTP server that answers each connection with the next
    /// scripted (status, body) pair and counts requests served.
    fn spawn_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let hits_clone = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                hits_clone.fetch_add(1, Ordering::SeqCst);
                // Drain the request head and body enough to keep clients happy.
                let mut buf = [0u8; 65536];
                let _ = stream.read(&mut buf);
                let reason = match status {
                    200 => "OK",
                    401 => "Unauthorized",
                    404 => "Not Found",
                    _ => "Error",
                };
                let resp = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn backend(endpoint: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            endpoint,
            model: "test-model".into(),
            api_key: Some("sk-test".into()),
            max_attempts: 3,
            backoff_base: Duration::from_millis(1),
            timeout: Duration::from_secs(5),
        })
        .unwrap()
    }

    fn call_bindings() -> crate::gateway::Bindings {
        bindings(&[("document", "d")])
    }

    fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 4}
        })
        .to_string()
    }

    #[test]
    fn success_parses_content_and_usage() {
        let (endpoint, hits) = spawn_server(vec![(200, ok_body("hello"))]);
        let b = backend(endpoint);
        let binds = call_bindings();
        let reply = b
            .complete(&BackendCall {
                template: TemplateName::Ner,
                prompt: "p",
                bindings: &binds,
            })
            .unwrap();
        assert_eq!(reply.text, "hello");
        assert_eq!(reply.usage.prompt_tokens, 10);
        assert_eq!(reply.usage.completion_tokens, 4);
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transient_errors_are_retried_then_succeed() {
        let (endpoint, hits) = spawn_server(vec![
            (500, "{}".into()),
            (429, "{}".into()),
            (200, ok_body("ok")),
        ]);
        let b = backend(endpoint);
        let binds = call_bindings();
        let reply = b
            .complete(&BackendCall {
                template: TemplateName::Ner,
                prompt: "p",
                bindings: &binds,
            })
            .unwrap();
        assert_eq!(reply.text, "ok");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn attempts_are_bounded() {
        let (endpoint, hits) = spawn_server(vec![
            (500, "{}".into()),
            (500, "{}".into()),
            (500, "{}".into()),
            (500, "{}".into()),
        ]);
        let b = backend(endpoint);
        let binds = call_bindings();
        let err = b
            .complete(&BackendCall {
                template: TemplateName::Ner,
                prompt: "p",
                bindings: &binds,
            })
            .unwrap_err();
        match err {
            Error::Transport { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (endpoint, hits) = spawn_server(vec![(401, "{}".into()), (200, ok_body("nope"))]);
        let b = backend(endpoint);
        let binds = call_bindings();
        let err = b
            .complete(&BackendCall {
                template: TemplateName::Ner,
                prompt: "p",
                bindings: &binds,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Auth { status: 401 }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn other_4xx_is_not_retried() {
        let (endpoint, hits) = spawn_server(vec![(404, "{}".into()), (200, ok_body("nope"))]);
        let b = backend(endpoint);
        let binds = call_bindings();
        let err = b
            .complete(&BackendCall {
                template: TemplateName::Ner,
                prompt: "p",
                bindings: &binds,
            })
            .unwrap_err();
        assert!(err.to_string().contains("not retriable"), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
