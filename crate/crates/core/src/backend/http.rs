use std::time::Duration;

use serde_json::{json, Value};

use super::{Adapter, BackendConfig, BackendError, Role, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wire {
    Native,
    OpenaiChat,
}

/// JSON-over-HTTP transport for the native and openai-chat adapters.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
    wire: Wire,
    model: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token from the configured environment variable, if any.
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        if config.endpoint_url.is_empty() {
            return Err(BackendError::Config(format!(
                "{} backend: endpoint_url is required for network adapters",
                config.role
            )));
        }
        let token = match &config.auth_token_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingToken(var.clone()))?),
            None => None,
        };
        let wire = match config.adapter {
            Adapter::OpenaiChat => Wire::OpenaiChat,
            _ => Wire::Native,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            url: config.endpoint_url.clone(),
            token,
            wire,
            model: config.model.clone(),
        })
    }

    fn outgoing(&self, body: &Value) -> Value {
        match self.wire {
            Wire::Native => body.clone(),
            Wire::OpenaiChat => openai_chat_body(self.model.as_deref(), body),
        }
    }
}

/// Maps a native llm body onto a chat-completions request. Sampling fields
/// other than `prompt` are copied to the top level.
fn openai_chat_body(model: Option<&str>, body: &Value) -> Value {
    let mut out = serde_json::Map::new();
    if let Some(model) = model {
        out.insert("model".into(), json!(model));
    }
    if let Value::Object(fields) = body {
        for (k, v) in fields {
            if k == "prompt" {
                out.insert("messages".into(), json!([{ "role": "user", "content": v }]));
            } else {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    Value::Object(out)
}

fn openai_chat_text(payload: &Value) -> Result<Value, TransportError> {
    payload
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(|text| json!({ "text": text }))
        .ok_or_else(|| TransportError::Malformed(format!("no choices[0].message.content in {payload}")))
}

impl Transport for HttpTransport {
    fn send(&self, _role: Role, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.client.post(&self.url).json(&self.outgoing(body));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(TransportError::Status { code: status.as_u16(), body: text });
        }
        let payload: Value = serde_json::from_str(&text)
            .map_err(|e| TransportError::Malformed(format!("response is not JSON: {e}")))?;
        match self.wire {
            Wire::Native => Ok(payload),
            Wire::OpenaiChat => openai_chat_text(&payload),
        }
    }
}
