//! Turns generated contexts into filtered extractive QA pairs.
//!
//! Each raw (question, answer) pair from the QG backend is aligned to the
//! first case-sensitive occurrence of its trimmed answer in the generated
//! context, falling back to a case-insensitive search. Aligned candidates are
//! then checked for round-trip consistency: a reader answers the generated
//! question against the generated context, and the pair is kept only if the
//! reader reproduces the generated answer.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendClient, GeneratedPair, Request};
use crate::generation::GenerationRecord;
use crate::metrics::{exact_match, normalize_answer, token_f1};
use crate::provenance::JsonlWriter;
use crate::squad::{AnswerSpan, Article, Paragraph, QaDataset, QaPair};
use crate::text;

pub const DEFAULT_PER_CONTEXT_CAP: usize = 10;
pub const GENERATED_TITLE_PREFIX: &str = "SQUAD-G:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("answer is empty or whitespace")]
    Blank,
    #[error("answer {0:?} does not occur in the context")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub span: AnswerSpan,
    /// Case-sensitive occurrences of the answer in the context.
    pub occurrences: usize,
    /// Set when only the case-insensitive search matched.
    pub case_fallback: bool,
}

pub fn align_answer_span(context: &str, answer_text: &str) -> Result<AnswerSpan, AlignError> {
    align(context, answer_text).map(|a| a.span)
}

pub fn align(context: &str, answer_text: &str) -> Result<Alignment, AlignError> {
    let answer = answer_text.trim();
    if answer.is_empty() || context.trim().is_empty() {
        return Err(AlignError::Blank);
    }
    if let Some(byte) = context.find(answer) {
        return Ok(Alignment {
            span: AnswerSpan {
                text: answer.to_string(),
                answer_start: text::char_index_of_byte(context, byte),
            },
            occurrences: context.matches(answer).count(),
            case_fallback: false,
        });
    }
    let needle: Vec<char> = answer.chars().collect();
    let haystack: Vec<char> = context.chars().collect();
    if needle.len() > haystack.len() {
        return Err(AlignError::NotFound(answer.to_string()));
    }
    let same = |a: char, b: char| a == b || a.to_lowercase().eq(b.to_lowercase());
    (0..=haystack.len() - needle.len())
        .find(|&start| needle.iter().zip(&haystack[start..]).all(|(&n, &h)| same(n, h)))
        .map(|start| Alignment {
            span: AnswerSpan {
                text: haystack[start..start + needle.len()].iter().collect(),
                answer_start: start,
            },
            occurrences: 0,
            case_fallback: true,
        })
        .ok_or_else(|| AlignError::NotFound(answer.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    /// `seed_question_id` of the owning generation record.
    pub context_ref: String,
    pub question: String,
    pub answer_text: String,
    pub aligned_span: Option<AnswerSpan>,
    #[serde(default)]
    pub occurrences: usize,
    #[serde(default)]
    pub case_fallback: bool,
}

/// Candidates for one record: the first `cap` raw pairs, each aligned.
pub fn build_candidates(record: &GenerationRecord, pairs: &[GeneratedPair], cap: usize) -> Vec<CandidatePair> {
    pairs
        .iter()
        .take(cap)
        .map(|p| {
            let alignment = align(&record.clipped_context, &p.answer).ok();
            CandidatePair {
                context_ref: record.seed_question_id.clone(),
                question: p.question.clone(),
                answer_text: p.answer.clone(),
                occurrences: alignment.as_ref().map_or(0, |a| a.occurrences),
                case_fallback: alignment.as_ref().is_some_and(|a| a.case_fallback),
                aligned_span: alignment.map(|a| a.span),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Exact,
    F1Threshold { tau: f64 },
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Exact => f.write_str("exact"),
            Criterion::F1Threshold { tau } => write!(f, "f1_threshold({tau})"),
        }
    }
}

impl Criterion {
    pub fn keeps(&self, reader_answer: &str, answer_text: &str) -> bool {
        match *self {
            Criterion::Exact => exact_match(reader_answer, answer_text) == 1,
            Criterion::F1Threshold { tau } => token_f1(reader_answer, answer_text) >= tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoSpan,
    RoundtripFail,
    EmptyQuestion,
    EmptyAnswer,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub candidate: CandidatePair,
    pub reader_answer: String,
    /// Token F1 of the reader's answer against the generated answer.
    pub score: f64,
    pub criterion: Criterion,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<DropReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FilterDecision {
    pub fn kept(&self) -> bool {
        self.verdict == Verdict::Keep
    }

    fn dropped(candidate: CandidatePair, criterion: Criterion, reason: DropReason) -> Self {
        FilterDecision {
            candidate,
            reader_answer: String::new(),
            score: 0.0,
            criterion,
            verdict: Verdict::Drop,
            drop_reason: Some(reason),
            note: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FilterOptions {
    pub criterion: Criterion,
    /// Abort on the first reader failure instead of dropping the candidate.
    pub hard_fail: bool,
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("candidate refers to unknown generation record {0:?}")]
    UnknownRecord(String),
    #[error("reader failed on {question:?}: {source}")]
    Reader {
        question: String,
        #[source]
        source: crate::backend::BackendError,
    },
    #[error("decision log: {0}")]
    Io(#[from] io::Error),
}

/// Decides every candidate, in order, and appends each decision to `log`.
/// Blank, unaligned and repeated candidates are dropped without a reader
/// call; the rest are answered by `reader` in one bounded batch.
pub fn roundtrip_filter<W: Write>(
    records: &[GenerationRecord],
    candidates: Vec<CandidatePair>,
    reader: &BackendClient,
    opts: FilterOptions,
    log: &mut JsonlWriter<W>,
) -> Result<Vec<FilterDecision>, FilterError> {
    let contexts: HashMap<&str, &str> = records
        .iter()
        .map(|r| (r.seed_question_id.as_str(), r.clipped_context.as_str()))
        .collect();
    let criterion = opts.criterion;
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut decisions: Vec<Option<FilterDecision>> = Vec::with_capacity(candidates.len());
    let mut queries: Vec<(usize, Request)> = Vec::new();
    let mut pending: Vec<CandidatePair> = Vec::new();

    for cand in candidates {
        let context = *contexts
            .get(cand.context_ref.as_str())
            .ok_or_else(|| FilterError::UnknownRecord(cand.context_ref.clone()))?;
        let reason = if cand.question.trim().is_empty() {
            Some(DropReason::EmptyQuestion)
        } else if cand.answer_text.trim().is_empty() {
            Some(DropReason::EmptyAnswer)
        } else if cand.aligned_span.is_none() {
            Some(DropReason::NoSpan)
        } else if !seen.insert((
            cand.context_ref.clone(),
            normalize_answer(&cand.question),
            normalize_answer(&cand.answer_text),
        )) {
            Some(DropReason::Duplicate)
        } else {
            None
        };
        match reason {
            Some(r) => decisions.push(Some(FilterDecision::dropped(cand, criterion, r))),
            None => {
                queries.push((
                    decisions.len(),
                    Request::Answer { context: context.to_string(), question: cand.question.clone() },
                ));
                decisions.push(None);
                pending.push(cand);
            }
        }
    }

    let requests: Vec<Request> = queries.iter().map(|(_, r)| r.clone()).collect();
    let replies = reader.run_batch(&requests);
    for (((slot, _), cand), reply) in queries.into_iter().zip(pending).zip(replies) {
        let answer = reply.and_then(|r| crate::backend::parse_text(&r.value, "answer"));
        let decision = match answer {
            Ok(answer) => {
                let keep = criterion.keeps(&answer, &cand.answer_text);
                FilterDecision {
                    score: token_f1(&answer, &cand.answer_text),
                    reader_answer: answer,
                    criterion,
                    verdict: if keep { Verdict::Keep } else { Verdict::Drop },
                    drop_reason: (!keep).then_some(DropReason::RoundtripFail),
                    note: None,
                    candidate: cand,
                }
            }
            Err(source) if opts.hard_fail => {
                return Err(FilterError::Reader { question: cand.question, source })
            }
            Err(err) => FilterDecision {
                note: Some(format!("reader error: {err}")),
                ..FilterDecision::dropped(cand, criterion, DropReason::RoundtripFail)
            },
        };
        decisions[slot] = Some(decision);
    }

    let decisions: Vec<FilterDecision> = decisions.into_iter().map(|d| d.expect("decided")).collect();
    for d in &decisions {
        log.append(d)?;
    }
    log.flush()?;
    Ok(decisions)
}

/// Builds the generated dataset: one paragraph per record with at least one
/// kept pair, ids `gen-{seed_question_id}-{k}`, and one article per source
/// title (`SQUAD-G:{title}`) in order of first appearance.
pub fn assemble_generated_dataset(records: &[GenerationRecord], decisions: &[FilterDecision]) -> QaDataset {
    let mut kept: HashMap<&str, Vec<&FilterDecision>> = HashMap::new();
    for d in decisions.iter().filter(|d| d.kept()) {
        kept.entry(d.candidate.context_ref.as_str()).or_default().push(d);
    }
    let mut articles: Vec<Article> = Vec::new();
    let mut by_title: HashMap<String, usize> = HashMap::new();
    for record in records {
        let Some(pairs) = kept.get(record.seed_question_id.as_str()) else {
            continue;
        };
        let qas = pairs
            .iter()
            .enumerate()
            .map(|(k, d)| QaPair {
                id: format!("gen-{}-{k}", record.seed_question_id),
                question: d.candidate.question.trim().to_string(),
                answers: vec![d.candidate.aligned_span.clone().expect("kept pairs are aligned")],
            })
            .collect();
        let title = format!("{GENERATED_TITLE_PREFIX}{}", record.source.title);
        let idx = *by_title.entry(title.clone()).or_insert_with(|| {
            articles.push(Article { title, paragraphs: Vec::new() });
            articles.len() - 1
        });
        articles[idx].paragraphs.push(Paragraph { context: record.clipped_context.clone(), qas });
    }
    QaDataset::new(articles)
}
