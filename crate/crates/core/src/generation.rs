//! Context generation: prompt an LLM with a seed question, clip the
//! generated paragraph to a word budget, and log full provenance.
//!
//! Clipping is a hard word-boundary cut, so a clipped context may end
//! mid-sentence. A word is a maximal run of non-whitespace characters; the
//! same rule backs `mean_context_words` in dataset statistics.

use std::collections::HashMap;
use std::io::{self, Write};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendClient, Request};
use crate::provenance::JsonlWriter;
use crate::squad::{ContextRef, SeedQuestion};
use crate::text;

pub const DEFAULT_PROMPT_TEMPLATE: &str =
    "Generate a paragraph which answers the following question: {question}";
pub const DEFAULT_MAX_WORDS: usize = 250;
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("seed question is empty")]
    EmptyQuestion,
    #[error("prompt template must contain {{question}}: {0:?}")]
    BadTemplate(String),
    #[error("max_words must be at least 1")]
    ZeroWordBudget,
}

/// Prompt template with a `{question}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self, GenerationError> {
        let template = template.into();
        if !template.contains("{question}") {
            return Err(GenerationError::BadTemplate(template));
        }
        Ok(PromptTemplate(template))
    }

    /// Embeds the trimmed question verbatim.
    pub fn render(&self, question: &str) -> Result<String, GenerationError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(GenerationError::EmptyQuestion);
        }
        Ok(self.0.replacen("{question}", question, 1))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate(DEFAULT_PROMPT_TEMPLATE.to_string())
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = GenerationError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> String {
        t.0
    }
}

pub fn build_prompt(question: &str) -> Result<String, GenerationError> {
    PromptTemplate::default().render(question)
}

/// First `max_words` words of `text`, joined by single spaces. Idempotent.
pub fn clip_context(text: &str, max_words: usize) -> String {
    text::words(text).take(max_words).collect::<Vec<_>>().join(" ")
}

/// Wall-clock facts about a record. Excluded from determinism checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub created_at: String,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub record_version: u32,
    pub seed_question_id: String,
    pub seed_question: String,
    pub source: ContextRef,
    pub prompt: String,
    pub raw_text: String,
    pub clipped_context: String,
    pub word_count: usize,
    pub backend_fingerprint: String,
    pub sampling_seed: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timing: Timing,
}

impl GenerationRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Copy with timing zeroed, for byte-level comparisons across runs.
    pub fn without_timing(&self) -> Self {
        GenerationRecord {
            timing: Timing { created_at: String::new(), latency_secs: 0.0 },
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub template: PromptTemplate,
    pub max_words: usize,
    pub run_seed: u64,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            template: PromptTemplate::default(),
            max_words: DEFAULT_MAX_WORDS,
            run_seed: 0,
        }
    }
}

/// Successful records from an earlier run, keyed by backend fingerprint.
pub type ResumeIndex = HashMap<String, GenerationRecord>;

pub fn resume_index(records: impl IntoIterator<Item = GenerationRecord>) -> ResumeIndex {
    records
        .into_iter()
        .filter(GenerationRecord::is_ok)
        .map(|r| (r.backend_fingerprint.clone(), r))
        .collect()
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// One record per seed, in seed order. Backend failures become error
/// records. Every record is appended to `log` before this returns. Seeds
/// whose request fingerprint appears in `resume` are not sent again.
pub fn generate_contexts<W: Write>(
    seeds: &[SeedQuestion],
    client: &BackendClient,
    opts: &GenerationOptions,
    resume: &ResumeIndex,
    log: &mut JsonlWriter<W>,
) -> io::Result<Vec<GenerationRecord>> {
    if opts.max_words == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, GenerationError::ZeroWordBudget));
    }
    let prompts: Vec<Result<String, GenerationError>> =
        seeds.iter().map(|s| opts.template.render(&s.qa.question)).collect();
    let pending: Vec<usize> = prompts
        .iter()
        .enumerate()
        .filter(|(_, p)| match p {
            Ok(prompt) => !resume.contains_key(&fingerprint_for(client, prompt)),
            Err(_) => false,
        })
        .map(|(i, _)| i)
        .collect();
    let requests: Vec<Request> = pending
        .iter()
        .map(|&i| Request::Complete { prompt: prompts[i].clone().expect("filtered") })
        .collect();
    let mut replies: HashMap<usize, _> = pending.into_iter().zip(client.run_batch(&requests)).collect();

    let mut records = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let base = |prompt: String, fingerprint: String| GenerationRecord {
            record_version: RECORD_VERSION,
            seed_question_id: seed.qa.id.clone(),
            seed_question: seed.qa.question.clone(),
            source: seed.context.clone(),
            prompt,
            raw_text: String::new(),
            clipped_context: String::new(),
            word_count: 0,
            backend_fingerprint: fingerprint,
            sampling_seed: opts.run_seed,
            attempt_count: 0,
            error: None,
            timing: Timing { created_at: now(), latency_secs: 0.0 },
        };
        let record = match &prompts[i] {
            Err(e) => GenerationRecord { error: Some(e.to_string()), ..base(String::new(), String::new()) },
            Ok(prompt) => {
                let fp = fingerprint_for(client, prompt);
                match replies.remove(&i) {
                    None => {
                        let previous = &resume[&fp];
                        GenerationRecord {
                            seed_question_id: seed.qa.id.clone(),
                            source: seed.context.clone(),
                            ..previous.clone()
                        }
                    }
                    Some(Ok(reply)) => {
                        let mut rec = base(prompt.clone(), fp);
                        rec.attempt_count = reply.info.attempt_count;
                        rec.timing.latency_secs = reply.info.latency_secs;
                        match crate::backend::parse_text(&reply.value, "text") {
                            Ok(raw) => {
                                rec.clipped_context = clip_context(&raw, opts.max_words);
                                rec.word_count = text::word_count(&rec.clipped_context);
                                rec.raw_text = raw;
                            }
                            Err(e) => rec.error = Some(e.to_string()),
                        }
                        rec
                    }
                    Some(Err(e)) => GenerationRecord {
                        attempt_count: e.attempts(),
                        error: Some(e.to_string()),
                        ..base(prompt.clone(), fp)
                    },
                }
            }
        };
        log.append(&record)?;
        records.push(record);
    }
    log.flush()?;
    Ok(records)
}

fn fingerprint_for(client: &BackendClient, prompt: &str) -> String {
    client.config().fingerprint(&Request::Complete { prompt: prompt.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendConfig, Role, Transport, TransportError};
    use crate::squad::{AnswerSpan, QaPair};
    use serde_json::{json, Value};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn prompt_uses_default_template() {
        assert_eq!(
            build_prompt("What type of creature is the American bison?").unwrap(),
            "Generate a paragraph which answers the following question: What type of creature is the American bison?"
        );
        assert_eq!(
            build_prompt("What is Punjab's biggest festival?  \n").unwrap(),
            "Generate a paragraph which answers the following question: What is Punjab's biggest festival?"
        );
        assert_eq!(build_prompt("  "), Err(GenerationError::EmptyQuestion));
    }

    #[test]
    fn custom_template_needs_placeholder() {
        assert!(PromptTemplate::new("no slot").is_err());
        let t = PromptTemplate::new("Q: {question}\nParagraph:").unwrap();
        assert_eq!(t.render("why?").unwrap(), "Q: why?\nParagraph:");
    }

    #[test]
    fn clipping() {
        let long: String = (0..300).map(|i| format!("w{i} ")).collect();
        let clipped = clip_context(&long, 250);
        assert_eq!(text::word_count(&clipped), 250);
        assert!(clipped.ends_with("w249"));
        assert_eq!(clip_context("  a\tb\n\nc  ", 250), "a b c");
        assert_eq!(clip_context(&clipped, 250), clipped);
    }

    fn seed(id: &str, question: &str) -> SeedQuestion {
        SeedQuestion {
            context: ContextRef { article: 0, paragraph: 0, title: "T".into() },
            qa: QaPair {
                id: id.into(),
                question: question.into(),
                answers: vec![AnswerSpan { text: "x".into(), answer_start: 0 }],
            },
        }
    }

    fn counting_llm(words: usize) -> (Arc<AtomicUsize>, BackendClient) {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let t: Arc<dyn Transport> = Arc::new(move |_: Role, body: &Value| {
            seen.fetch_add(1, Ordering::SeqCst);
            let prompt = body["prompt"].as_str().unwrap();
            if prompt.contains("fail") {
                return Err(TransportError::Status { code: 400, body: "no".into() });
            }
            let text: Vec<String> = (0..words).map(|i| format!("word{i}")).collect();
            Ok(json!({"text": text.join(" ")}))
        });
        let mut cfg = BackendConfig::replay(Role::Llm);
        cfg.max_retries = 0;
        (calls, BackendClient::with_transport(cfg, t).unwrap())
    }

    #[test]
    fn records_follow_seed_order_and_clip() {
        let (_, client) = counting_llm(400);
        let seeds = vec![seed("a", "first?"), seed("b", "please fail?"), seed("c", "third?")];
        let mut log = JsonlWriter::new(Vec::new());
        let recs = generate_contexts(&seeds, &client, &GenerationOptions::default(), &ResumeIndex::new(), &mut log)
            .unwrap();
        assert_eq!(recs.iter().map(|r| r.seed_question_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(recs[0].word_count, 250);
        assert!(recs[1].error.is_some());
        assert!(recs[2].is_ok());
        assert_eq!(log.lines(), 3);
    }

    #[test]
    fn empty_seed_list() {
        let (calls, client) = counting_llm(5);
        let mut log = JsonlWriter::new(Vec::new());
        let recs = generate_contexts(&[], &client, &GenerationOptions::default(), &ResumeIndex::new(), &mut log).unwrap();
        assert!(recs.is_empty());
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn resume_skips_known_fingerprints() {
        let (calls, client) = counting_llm(5);
        let seeds = vec![seed("a", "first?"), seed("b", "second?")];
        let opts = GenerationOptions::default();
        let mut log = JsonlWriter::new(Vec::new());
        let first = generate_contexts(&seeds[..1], &client, &opts, &ResumeIndex::new(), &mut log).unwrap();
        let index = resume_index(first.clone());
        let again = generate_contexts(&seeds, &client, &opts, &index, &mut log).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(again[0], first[0]);
        assert_eq!(again[1].word_count, 5);
    }
}
