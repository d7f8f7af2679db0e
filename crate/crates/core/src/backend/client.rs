use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::debug;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    parse_pairs, parse_text, run_batch, Adapter, BackendConfig, BackendError, GeneratedPair,
    HttpTransport, ReplayFixture, ReplayTransport, Request, Transport, TransportError,
};

/// Observed cost of one logical call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallInfo {
    pub latency_secs: f64,
    pub attempt_count: u32,
    pub request_fingerprint: String,
    /// Delay slept before each retry, in order.
    pub backoff_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply<T> {
    pub value: T,
    pub info: CallInfo,
}

pub type BackendResponse = Reply<Value>;

/// A configured backend. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct BackendClient {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient").field("config", &self.config).finish()
    }
}

impl BackendClient {
    /// Builds the transport named by `config.adapter`. A replay fixture, when
    /// given, is consulted first; outside strict mode misses fall through to
    /// the network adapter.
    pub fn connect(
        config: BackendConfig,
        replay: Option<Arc<ReplayFixture>>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let transport: Arc<dyn Transport> = match (config.adapter, replay) {
            (Adapter::Replay, Some(fixture)) => Arc::new(ReplayTransport::new(fixture, None)),
            (Adapter::Replay, None) => {
                return Err(BackendError::Config(format!(
                    "{} backend uses the replay adapter but no fixture file was given",
                    config.role
                )))
            }
            (_, Some(fixture)) if fixture.strict => Arc::new(ReplayTransport::new(fixture, None)),
            (_, Some(fixture)) => {
                let live: Arc<dyn Transport> = Arc::new(HttpTransport::new(&config)?);
                Arc::new(ReplayTransport::new(fixture, Some(live)))
            }
            (_, None) => Arc::new(HttpTransport::new(&config)?),
        };
        Ok(BackendClient { config, transport })
    }

    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(BackendClient { config, transport })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Sends one request, retrying retryable failures with exponential
    /// backoff: the n-th retry waits `backoff_base * 2^(n-1)` seconds.
    pub fn send(&self, request: &Request) -> Result<BackendResponse, BackendError> {
        if request.role() != self.config.role {
            return Err(BackendError::RoleMismatch {
                expected: request.role(),
                actual: self.config.role,
            });
        }
        let body = self.config.request_body(request);
        let request_fingerprint = super::fingerprint(self.config.role, &body);
        let started = Instant::now();
        let mut backoff_secs = Vec::new();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(self.config.role, &body) {
                Ok(value) => {
                    return Ok(Reply {
                        value,
                        info: CallInfo {
                            latency_secs: started.elapsed().as_secs_f64(),
                            attempt_count: attempt,
                            request_fingerprint,
                            backoff_secs,
                        },
                    })
                }
                Err(err) if err.is_retryable() && attempt <= self.config.max_retries => {
                    let delay = self.config.backoff_base_secs * 2f64.powi(attempt as i32 - 1);
                    debug!("{} attempt {attempt} failed ({err}); retrying in {delay:.3}s", self.config.role);
                    backoff_secs.push(delay);
                    thread::sleep(Duration::from_secs_f64(delay));
                }
                Err(err) if err.is_retryable() => {
                    return Err(BackendError::Exhausted {
                        attempts: attempt,
                        last: err,
                        backoff_secs,
                    })
                }
                Err(err) => return Err(classify(err)),
            }
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<Reply<String>, BackendError> {
        let reply = self.send(&Request::Complete { prompt: prompt.to_string() })?;
        Ok(Reply { value: parse_text(&reply.value, "text")?, info: reply.info })
    }

    /// Raw candidate pairs, unfiltered.
    pub fn generate_questions(&self, context: &str) -> Result<Reply<Vec<GeneratedPair>>, BackendError> {
        let reply = self.send(&Request::GenerateQuestions { context: context.to_string() })?;
        Ok(Reply { value: parse_pairs(&reply.value)?, info: reply.info })
    }

    pub fn answer_question(&self, context: &str, question: &str) -> Result<Reply<String>, BackendError> {
        let reply = self.send(&Request::Answer {
            context: context.to_string(),
            question: question.to_string(),
        })?;
        Ok(Reply { value: parse_text(&reply.value, "answer")?, info: reply.info })
    }

    /// Runs `requests` with at most `max_concurrency` in flight. Results come
    /// back in input order; failures stay per item.
    pub fn run_batch(&self, requests: &[Request]) -> Vec<Result<BackendResponse, BackendError>> {
        run_batch(self.config.max_concurrency, requests, |r| self.send(r))
    }
}

fn classify(err: TransportError) -> BackendError {
    match err {
        TransportError::Status { code: code @ (401 | 403), body } => BackendError::Auth { code, body },
        TransportError::Status { code, body } => BackendError::Rejected { code, body },
        TransportError::Unmatched(fp) => BackendError::Unmatched(fp),
        TransportError::Malformed(msg) => BackendError::Malformed(msg),
        other => BackendError::Malformed(other.to_string()),
    }
}
