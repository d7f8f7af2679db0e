//! Deterministic replay of canned backend responses.
//!
//! A fixture file is JSON lines, one `{"fingerprint": str, "response": obj}`
//! per line. Fingerprints hash the role and the canonical request body, so
//! entries survive key reordering in the request.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{empty_payload, BackendConfig, Request, Role, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub fingerprint: String,
    pub response: Value,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayFixture {
    entries: Vec<FixtureEntry>,
    index: HashMap<String, usize>,
    /// When set, an unmatched fingerprint is an error.
    pub strict: bool,
}

impl ReplayFixture {
    pub fn new(strict: bool) -> Self {
        ReplayFixture { strict, ..Default::default() }
    }

    pub fn parse_jsonl(text: &str, strict: bool) -> Result<Self, String> {
        let mut fixture = Self::new(strict);
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| format!("replay fixture line {}: {e}", n + 1))?;
            fixture.push(entry);
        }
        Ok(fixture)
    }

    pub fn load(path: &Path, strict: bool) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse_jsonl(&text, strict)
    }

    /// Adds an entry. A later entry with the same fingerprint replaces the
    /// earlier one.
    pub fn push(&mut self, entry: FixtureEntry) {
        match self.index.get(&entry.fingerprint) {
            Some(&i) => self.entries[i] = entry,
            None => {
                self.index.insert(entry.fingerprint.clone(), self.entries.len());
                self.entries.push(entry);
            }
        }
    }

    /// Records `response` as the answer to `request` under `config`.
    pub fn record(&mut self, config: &BackendConfig, request: &Request, response: Value) {
        self.push(FixtureEntry {
            fingerprint: config.fingerprint(request),
            response,
        });
    }

    pub fn get(&self, fingerprint: &str) -> Option<&Value> {
        self.index.get(fingerprint).map(|&i| &self.entries[i].response)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("fixture entries serialize"));
            out.push('\n');
        }
        out
    }
}

/// Serves fixture hits. Misses go to `fallback` when present; otherwise a
/// strict fixture errors and a lenient one serves an empty response.
pub struct ReplayTransport {
    fixture: Arc<ReplayFixture>,
    fallback: Option<Arc<dyn Transport>>,
    misses: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(fixture: Arc<ReplayFixture>, fallback: Option<Arc<dyn Transport>>) -> Self {
        ReplayTransport { fixture, fallback, misses: AtomicUsize::new(0) }
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl Transport for ReplayTransport {
    fn send(&self, role: Role, body: &Value) -> Result<Value, TransportError> {
        let fp = super::fingerprint(role, body);
        if let Some(response) = self.fixture.get(&fp) {
            return Ok(response.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        if self.fixture.strict {
            return Err(TransportError::Unmatched(fp));
        }
        match &self.fallback {
            Some(live) => live.send(role, body),
            None => {
                warn!("replay miss for {role} request {fp}; serving an empty response");
                Ok(empty_payload(role))
            }
        }
    }
}
