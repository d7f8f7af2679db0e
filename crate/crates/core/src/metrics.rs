//! SQuAD v1.1 Exact Match and token F1.
//!
//! Normalization matches the official v1.1 evaluation script: lowercase,
//! strip punctuation, drop the articles `a`/`an`/`the`, collapse whitespace.
//! The punctuation set is ASCII `string.punctuation` plus every Unicode
//! character in a `P*` general category, so curly quotes and long dashes are stripped
//! the same way `"` and `-` are. When both strings normalize to no tokens F1
//! is 1.0, which keeps EM=1 ⇒ F1=1.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::squad::QaDataset;

/// `string.punctuation` from Python.
pub const ASCII_PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// QA id → predicted answer text.
pub type PredictionSet = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("score_prediction needs at least one gold answer")]
    NoGolds,
    #[error("prediction file must be a flat JSON object of id → answer string: {0}")]
    Predictions(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub em: u8,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    /// Percentage, 0–100.
    pub em: f64,
    /// Percentage, 0–100.
    pub f1: f64,
    pub num_questions: usize,
    pub per_question: BTreeMap<String, QuestionScore>,
    pub missing_predictions: Vec<String>,
    /// Prediction ids with no gold question. Reported, never scored.
    #[serde(default)]
    pub unknown_predictions: Vec<String>,
}

pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return ASCII_PUNCTUATION.contains(c);
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").unwrap())
}

pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered.chars().filter(|&c| !is_punctuation(c)).collect();
    let no_articles = articles().replace_all(&stripped, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred = normalize_answer(pred);
    let gold = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return if pred_tokens.len() == gold_tokens.len() { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred_tokens {
        if let Some(n) = gold_counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max EM and max F1 over the gold answers, taken independently.
pub fn score_prediction<S: AsRef<str>>(pred: &str, golds: &[S]) -> Result<QuestionScore, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::NoGolds);
    }
    let mut best = QuestionScore { em: 0, f1: 0.0 };
    for gold in golds {
        best.em = best.em.max(exact_match(pred, gold.as_ref()));
        best.f1 = best.f1.max(token_f1(pred, gold.as_ref()));
    }
    Ok(best)
}

pub fn parse_predictions(bytes: &[u8]) -> Result<PredictionSet, MetricsError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Scores every gold question. Missing predictions score zero.
pub fn evaluate_dataset(name: &str, gold: &QaDataset, preds: &PredictionSet) -> EvalReport {
    let mut per_question = BTreeMap::new();
    let mut missing = Vec::new();
    let (mut em_sum, mut f1_sum) = (0.0, 0.0);
    let mut num_questions = 0;
    for qa in gold.qas() {
        num_questions += 1;
        let score = match preds.get(&qa.id) {
            Some(pred) if !qa.answers.is_empty() => {
                let golds: Vec<&str> = qa.answers.iter().map(|a| a.text.as_str()).collect();
                score_prediction(pred, &golds).expect("golds non-empty")
            }
            Some(_) => QuestionScore { em: 0, f1: 0.0 },
            None => {
                missing.push(qa.id.clone());
                QuestionScore { em: 0, f1: 0.0 }
            }
        };
        em_sum += f64::from(score.em);
        f1_sum += score.f1;
        per_question.insert(qa.id.clone(), score);
    }
    let unknown = preds
        .keys()
        .filter(|id| !per_question.contains_key(*id))
        .cloned()
        .collect();
    let pct = |sum: f64| {
        if num_questions == 0 {
            0.0
        } else {
            100.0 * sum / num_questions as f64
        }
    };
    EvalReport {
        dataset_name: name.to_string(),
        em: pct(em_sum),
        f1: pct(f1_sum),
        num_questions,
        per_question,
        missing_predictions: missing,
        unknown_predictions: unknown,
    }
}

/// Rounds half-up to one decimal place. The small bias absorbs binary
/// representation error, so 84.65 renders as 84.7.
pub fn round_one_decimal(x: f64) -> f64 {
    (x * 10.0 + 0.5 + 1e-9).floor() / 10.0
}

pub fn format_score(x: f64) -> String {
    format!("{:.1}", round_one_decimal(x))
}
