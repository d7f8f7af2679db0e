//! Clients for the three model roles: context generator (`llm`), question
//! generator (`qg`) and reader. Every role speaks the same small JSON wire
//! protocol, and every transport sits behind [`Transport`] so a replay
//! fixture or a test closure can stand in for the network.
//!
//! Native wire protocol, one `POST` per request:
//!
//! | role   | request                            | response                                       |
//! |--------|------------------------------------|------------------------------------------------|
//! | llm    | `{"prompt": str}`                  | `{"text": str}`                                |
//! | qg     | `{"context": str}`                 | `{"pairs": [{"question": str, "answer": str}]}` |
//! | reader | `{"context": str, "question": str}` | `{"answer": str}`                              |
//!
//! Sampling parameters from [`BackendConfig::sampling`] are merged into the
//! request body unchanged.

mod batch;
mod client;
mod fingerprint;
mod http;
mod replay;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use batch::run_batch;
pub use client::{BackendClient, BackendResponse, CallInfo, Reply};
pub use fingerprint::{canonical_json, fingerprint};
pub use http::HttpTransport;
pub use replay::{FixtureEntry, ReplayFixture, ReplayTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Llm,
    Qg,
    Reader,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Llm => "llm",
            Role::Qg => "qg",
            Role::Reader => "reader",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adapter {
    Native,
    OpenaiChat,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub role: Role,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_token_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_adapter")]
    pub adapter: Adapter,
    /// Model name sent by the openai-chat adapter.
    #[serde(default)]
    pub model: Option<String>,
    /// Passed through into every request body (temperature, top_p, ...).
    #[serde(default)]
    pub sampling: Map<String, Value>,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    1.0
}
fn default_concurrency() -> usize {
    4
}
fn default_adapter() -> Adapter {
    Adapter::Native
}

impl BackendConfig {
    pub fn new(role: Role, adapter: Adapter, endpoint_url: impl Into<String>) -> Self {
        BackendConfig {
            role,
            endpoint_url: endpoint_url.into(),
            auth_token_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_secs: default_backoff(),
            max_concurrency: default_concurrency(),
            adapter,
            model: None,
            sampling: Map::new(),
        }
    }

    pub fn replay(role: Role) -> Self {
        Self::new(role, Adapter::Replay, "")
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: String| Err(BackendError::Config(format!("{} backend: {msg}", self.role)));
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad(format!("timeout must be > 0, got {}", self.timeout_secs));
        }
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be >= 1".into());
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return bad(format!("backoff_base must be >= 0, got {}", self.backoff_base_secs));
        }
        if self.adapter == Adapter::OpenaiChat && self.role != Role::Llm {
            return bad("the openai-chat adapter only serves the llm role".into());
        }
        Ok(())
    }

    /// The request body as sent on the wire by the native adapter, and as
    /// fingerprinted for replay.
    pub fn request_body(&self, request: &Request) -> Value {
        let mut body = match request.wire_body() {
            Value::Object(map) => map,
            _ => unreachable!("wire bodies are objects"),
        };
        for (k, v) in &self.sampling {
            body.entry(k.clone()).or_insert_with(|| v.clone());
        }
        Value::Object(body)
    }

    pub fn fingerprint(&self, request: &Request) -> String {
        fingerprint(request.role(), &self.request_body(request))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Request {
    Complete { prompt: String },
    GenerateQuestions { context: String },
    Answer { context: String, question: String },
}

impl Request {
    pub fn role(&self) -> Role {
        match self {
            Request::Complete { .. } => Role::Llm,
            Request::GenerateQuestions { .. } => Role::Qg,
            Request::Answer { .. } => Role::Reader,
        }
    }

    pub fn wire_body(&self) -> Value {
        match self {
            Request::Complete { prompt } => json!({ "prompt": prompt }),
            Request::GenerateQuestions { context } => json!({ "context": context }),
            Request::Answer { context, question } => {
                json!({ "context": context, "question": question })
            }
        }
    }
}

/// A raw question/answer candidate exactly as the QG backend emitted it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("no replay fixture for fingerprint {0}")]
    Unmatched(String),
    #[error("malformed backend payload: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Transport failures, timeouts, 429 and 5xx are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Unmatched(_) | TransportError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend config: {0}")]
    Config(String),
    #[error("{expected} request sent to a {actual} backend")]
    RoleMismatch { expected: Role, actual: Role },
    #[error("environment variable {0} holding the auth token is not set")]
    MissingToken(String),
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted {
        attempts: u32,
        last: TransportError,
        backoff_secs: Vec<f64>,
    },
    #[error("authentication failed (HTTP {code}): {body}")]
    Auth { code: u16, body: String },
    #[error("request rejected (HTTP {code}): {body}")]
    Rejected { code: u16, body: String },
    #[error("malformed backend payload: {0}")]
    Malformed(String),
    #[error("no replay fixture for fingerprint {0}")]
    Unmatched(String),
}

impl BackendError {
    pub fn attempts(&self) -> u32 {
        match self {
            BackendError::Exhausted { attempts, .. } => *attempts,
            BackendError::Config(_)
            | BackendError::RoleMismatch { .. }
            | BackendError::MissingToken(_) => 0,
            _ => 1,
        }
    }
}

/// Anything that can carry one request body to a backend and bring back its
/// JSON payload in native shape. Closures implement it, which is how tests
/// build instrumented mocks.
pub trait Transport: Send + Sync {
    fn send(&self, role: Role, body: &Value) -> Result<Value, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(Role, &Value) -> Result<Value, TransportError> + Send + Sync,
{
    fn send(&self, role: Role, body: &Value) -> Result<Value, TransportError> {
        self(role, body)
    }
}

pub(crate) fn parse_text(payload: &Value, field: &str) -> Result<String, BackendError> {
    payload
        .get(field)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::Malformed(format!("expected string field {field:?} in {payload}")))
}

pub(crate) fn parse_pairs(payload: &Value) -> Result<Vec<GeneratedPair>, BackendError> {
    let pairs = payload
        .get("pairs")
        .ok_or_else(|| BackendError::Malformed(format!("expected field \"pairs\" in {payload}")))?;
    serde_json::from_value(pairs.clone())
        .map_err(|e| BackendError::Malformed(format!("bad \"pairs\" list: {e}")))
}

/// The response a lenient replay serves when nothing matches.
pub(crate) fn empty_payload(role: Role) -> Value {
    match role {
        Role::Llm => json!({ "text": "" }),
        Role::Qg => json!({ "pairs": [] }),
        Role::Reader => json!({ "answer": "" }),
    }
}
