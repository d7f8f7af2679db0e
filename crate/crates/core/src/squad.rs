//! SQuAD v1.1 datasets: parsing, validation, serialization, statistics and
//! seed-question sampling.
//!
//! `answer_start` is a character offset counted in Unicode scalar values, the
//! same unit Python string indexing uses. It is never a byte offset: for
//! `"Gurú Nanak"`, `"Nanak"` starts at 5 although it starts at byte 6.
//!
//! Validation is strict by default. [`Validation::Lenient`] drops offending
//! QAs (and paragraphs left with an empty context) and reports each drop as a
//! warning instead of failing, which is useful for noisy third-party files.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub const SQUAD_VERSION: &str = "1.1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaDataset {
    pub version: String,
    #[serde(rename = "data")]
    pub articles: Vec<Article>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<QaPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answers: Vec<AnswerSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    /// Offset into the owning context, in Unicode scalar values.
    pub answer_start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_articles: usize,
    pub num_contexts: usize,
    pub num_qas: usize,
    pub mean_context_words: f64,
    pub mean_answers_per_qa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Validation {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed dataset JSON: {0}")]
    Syntax(serde_json::Error),
    #[error("dataset does not match the SQuAD v1.1 schema: {0}")]
    Schema(serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationIssue),
    #[error("article {article} paragraph {paragraph} has no questions to sample from")]
    NoQuestions { article: usize, paragraph: usize },
}

impl From<serde_json::Error> for DatasetError {
    fn from(err: serde_json::Error) -> Self {
        match err.classify() {
            serde_json::error::Category::Data => DatasetError::Schema(err),
            _ => DatasetError::Syntax(err),
        }
    }
}

/// A single validation failure. In lenient mode these become warnings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationIssue {
    #[error("article {article} paragraph {paragraph}: empty context")]
    EmptyContext { article: usize, paragraph: usize },
    #[error("qa {id}: empty question")]
    EmptyQuestion { id: String },
    #[error("qa {id}: no answers")]
    NoAnswers { id: String },
    #[error(
        "qa {id}: answer {index} expected {expected:?} at offset {start}, context reads {found:?}"
    )]
    SpanMismatch {
        id: String,
        index: usize,
        start: usize,
        expected: String,
        found: String,
    },
    #[error("duplicate qa id {id}")]
    DuplicateId { id: String },
}

/// One seed question: a QA drawn from a paragraph, with a reference back to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedQuestion {
    pub context: ContextRef,
    pub qa: QaPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRef {
    pub article: usize,
    pub paragraph: usize,
    pub title: String,
}

impl Default for QaDataset {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl QaDataset {
    pub fn new(articles: Vec<Article>) -> Self {
        QaDataset {
            version: SQUAD_VERSION.to_string(),
            articles,
        }
    }

    pub fn num_qas(&self) -> usize {
        self.qas().count()
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.articles.iter().flat_map(|a| a.paragraphs.iter())
    }

    pub fn qas(&self) -> impl Iterator<Item = &QaPair> {
        self.paragraphs().flat_map(|p| p.qas.iter())
    }

    /// Iterates `(context, qa)` in file order.
    pub fn qas_with_context(&self) -> impl Iterator<Item = (&str, &QaPair)> {
        self.paragraphs()
            .flat_map(|p| p.qas.iter().map(move |qa| (p.context.as_str(), qa)))
    }

    /// Checks every invariant and returns the first violation.
    pub fn validate(&self) -> Result<(), ValidationIssue> {
        let mut ids = HashSet::new();
        for (a, article) in self.articles.iter().enumerate() {
            for (p, para) in article.paragraphs.iter().enumerate() {
                check_context(a, p, para)?;
                for qa in &para.qas {
                    check_qa(&para.context, qa)?;
                    if !ids.insert(qa.id.as_str()) {
                        return Err(ValidationIssue::DuplicateId { id: qa.id.clone() });
                    }
                }
            }
        }
        Ok(())
    }

    /// Removes every invalid QA and empty-context paragraph, returning what
    /// was dropped. The first occurrence of a duplicated id is kept.
    pub fn retain_valid(&mut self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let mut ids = HashSet::new();
        for (a, article) in self.articles.iter_mut().enumerate() {
            let mut p = 0;
            article.paragraphs.retain_mut(|para| {
                let idx = p;
                p += 1;
                if let Err(issue) = check_context(a, idx, para) {
                    issues.push(issue);
                    return false;
                }
                let context = para.context.as_str();
                para.qas.retain(|qa| {
                    if let Err(issue) = check_qa(context, qa) {
                        issues.push(issue);
                        return false;
                    }
                    if !ids.insert(qa.id.clone()) {
                        issues.push(ValidationIssue::DuplicateId { id: qa.id.clone() });
                        return false;
                    }
                    true
                });
                true
            });
        }
        issues
    }

    /// Prefixes every QA id with `{tag}:`.
    pub fn namespaced(mut self, tag: &str) -> Self {
        for article in &mut self.articles {
            for para in &mut article.paragraphs {
                for qa in &mut para.qas {
                    qa.id = namespace_id(tag, &qa.id);
                }
            }
        }
        self
    }
}

pub fn namespace_id(tag: &str, id: &str) -> String {
    format!("{tag}:{id}")
}

fn check_context(article: usize, paragraph: usize, para: &Paragraph) -> Result<(), ValidationIssue> {
    if para.context.is_empty() {
        return Err(ValidationIssue::EmptyContext { article, paragraph });
    }
    Ok(())
}

fn check_qa(context: &str, qa: &QaPair) -> Result<(), ValidationIssue> {
    if qa.question.trim().is_empty() {
        return Err(ValidationIssue::EmptyQuestion { id: qa.id.clone() });
    }
    if qa.answers.is_empty() {
        return Err(ValidationIssue::NoAnswers { id: qa.id.clone() });
    }
    for (index, answer) in qa.answers.iter().enumerate() {
        check_span(context, answer).map_err(|found| ValidationIssue::SpanMismatch {
            id: qa.id.clone(),
            index,
            start: answer.answer_start,
            expected: answer.text.clone(),
            found,
        })?;
    }
    Ok(())
}

/// Checks the extractive invariant. On failure returns what the context
/// actually holds at the span (possibly truncated at the end of the context).
pub fn check_span(context: &str, span: &AnswerSpan) -> Result<(), String> {
    let len = text::char_len(&span.text);
    match text::char_slice(context, span.answer_start, len) {
        Some(found) if found == span.text => Ok(()),
        Some(found) => Err(found.to_string()),
        None => Err(context
            .chars()
            .skip(span.answer_start)
            .take(len)
            .collect()),
    }
}

pub fn parse_dataset(bytes: &[u8]) -> Result<QaDataset, DatasetError> {
    let dataset: QaDataset = serde_json::from_slice(bytes)?;
    dataset.validate()?;
    Ok(dataset)
}

/// Parses with the given validation mode. Lenient mode returns the issues that
/// caused QAs or paragraphs to be dropped.
pub fn parse_dataset_with(
    bytes: &[u8],
    mode: Validation,
) -> Result<(QaDataset, Vec<ValidationIssue>), DatasetError> {
    match mode {
        Validation::Strict => parse_dataset(bytes).map(|d| (d, Vec::new())),
        Validation::Lenient => {
            let mut dataset: QaDataset = serde_json::from_slice(bytes)?;
            let issues = dataset.retain_valid();
            Ok((dataset, issues))
        }
    }
}

/// Compact JSON, UTF-8, no escaping of non-ASCII text. Deterministic.
pub fn serialize_dataset(dataset: &QaDataset) -> Vec<u8> {
    serde_json::to_vec(dataset).expect("dataset serialization cannot fail")
}

pub fn dataset_stats(dataset: &QaDataset) -> DatasetStats {
    let num_contexts = dataset.paragraphs().count();
    let num_qas = dataset.num_qas();
    let total_words: usize = dataset.paragraphs().map(|p| text::word_count(&p.context)).sum();
    let total_answers: usize = dataset.qas().map(|qa| qa.answers.len()).sum();
    DatasetStats {
        num_articles: dataset.articles.len(),
        num_contexts,
        num_qas,
        mean_context_words: mean(total_words, num_contexts),
        mean_answers_per_qa: mean(total_answers, num_qas),
    }
}

fn mean(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// Picks one QA per paragraph, uniformly at random, in paragraph order.
pub fn sample_seed_questions(
    dataset: &QaDataset,
    seed: u64,
) -> Result<Vec<SeedQuestion>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dataset.paragraphs().count());
    for (a, article) in dataset.articles.iter().enumerate() {
        for (p, para) in article.paragraphs.iter().enumerate() {
            if para.qas.is_empty() {
                return Err(DatasetError::NoQuestions {
                    article: a,
                    paragraph: p,
                });
            }
            let pick = rng.gen_range(0..para.qas.len());
            out.push(SeedQuestion {
                context: ContextRef {
                    article: a,
                    paragraph: p,
                    title: article.title.clone(),
                },
                qa: para.qas[pick].clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qa(id: &str, question: &str, text: &str, start: usize) -> QaPair {
        QaPair {
            id: id.into(),
            question: question.into(),
            answers: vec![AnswerSpan {
                text: text.into(),
                answer_start: start,
            }],
        }
    }

    fn grid(contexts: usize, per: usize) -> QaDataset {
        let paragraphs = (0..contexts)
            .map(|c| Paragraph {
                context: format!("context number {c}"),
                qas: (0..per)
                    .map(|q| qa(&format!("c{c}q{q}"), "which number?", "number", 8))
                    .collect(),
            })
            .collect();
        QaDataset::new(vec![Article {
            title: "grid".into(),
            paragraphs,
        }])
    }

    const MINIMAL: &str = r#"{"version":"1.1","data":[{"title":"Bison","paragraphs":[{"context":"The American bison is a large bovid.","qas":[{"id":"q1","question":"What is a large bovid?","answers":[{"text":"American bison","answer_start":4}]}]}]}]}"#;

    #[test]
    fn parses_minimal_dataset() {
        let d = parse_dataset(MINIMAL.as_bytes()).unwrap();
        let stats = dataset_stats(&d);
        assert_eq!((stats.num_articles, stats.num_contexts, stats.num_qas), (1, 1, 1));
        assert_eq!(stats.mean_context_words, 7.0);
        assert_eq!(stats.mean_answers_per_qa, 1.0);
    }

    #[test]
    fn span_mismatch_names_the_qa() {
        let raw = r#"{"version":"1.1","data":[{"title":"t","paragraphs":[{"context":"Bison roam.","qas":[{"id":"bad-1","question":"what?","answers":[{"text":"bison","answer_start":0}]}]}]}]}"#;
        match parse_dataset(raw.as_bytes()) {
            Err(DatasetError::Invalid(ValidationIssue::SpanMismatch { id, found, expected, .. })) => {
                assert_eq!(id, "bad-1");
                assert_eq!(found, "Bison");
                assert_eq!(expected, "bison");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids_and_syntax_errors() {
        let mut d = grid(2, 1);
        d.articles[0].paragraphs[1].qas[0].id = "c0q0".into();
        let bytes = serialize_dataset(&d);
        assert!(matches!(
            parse_dataset(&bytes),
            Err(DatasetError::Invalid(ValidationIssue::DuplicateId { .. }))
        ));
        assert!(matches!(parse_dataset(b"{\"version\":"), Err(DatasetError::Syntax(_))));
        assert!(matches!(
            parse_dataset(br#"{"version":"1.1","data":[{"paragraphs":[]}]}"#),
            Err(DatasetError::Schema(_))
        ));
    }

    #[test]
    fn span_past_end_is_rejected() {
        let mut d = grid(1, 1);
        d.articles[0].paragraphs[0].qas[0].answers[0].answer_start = 100;
        assert!(matches!(d.validate(), Err(ValidationIssue::SpanMismatch { .. })));
    }

    #[test]
    fn lenient_mode_drops_bad_qas() {
        let mut d = grid(2, 2);
        d.articles[0].paragraphs[0].qas[1].answers[0].answer_start = 0;
        d.articles[0].paragraphs[1].qas[0].question = "  ".into();
        d.articles[0].paragraphs[1].context.clear();
        let bytes = serialize_dataset(&d);
        assert!(parse_dataset(&bytes).is_err());
        let (clean, issues) = parse_dataset_with(&bytes, Validation::Lenient).unwrap();
        assert_eq!(issues.len(), 2);
        assert_eq!(clean.num_qas(), 1);
        assert!(clean.validate().is_ok());
    }

    #[test]
    fn empty_dataset_round_trips_with_zero_stats() {
        let d = QaDataset::default();
        let back = parse_dataset(&serialize_dataset(&d)).unwrap();
        assert_eq!(back, d);
        let s = dataset_stats(&d);
        assert_eq!((s.num_articles, s.num_contexts, s.num_qas), (0, 0, 0));
        assert_eq!((s.mean_context_words, s.mean_answers_per_qa), (0.0, 0.0));
    }

    #[test]
    fn non_ascii_offsets_survive_round_trip() {
        let context = "Baisakhi — celebrated by Gurú Gobind Singh's Khalsa.";
        // Independent check: count chars of the prefix by hand.
        let prefix = "Baisakhi — celebrated by ";
        assert_eq!(prefix.chars().count(), 25);
        assert_ne!(prefix.len(), 25);
        let d = QaDataset::new(vec![Article {
            title: "Baisakhi".into(),
            paragraphs: vec![Paragraph {
                context: context.into(),
                qas: vec![qa("u1", "Who?", "Gurú Gobind Singh", 25)],
            }],
        }]);
        let back = parse_dataset(&serialize_dataset(&d)).unwrap();
        assert_eq!(back, d);
        let span = &back.articles[0].paragraphs[0].qas[0].answers[0];
        let got: String = context.chars().skip(span.answer_start).take(17).collect();
        assert_eq!(got, "Gurú Gobind Singh");
    }

    #[test]
    fn samples_one_question_per_context() {
        let d = grid(3, 2);
        let seeds = sample_seed_questions(&d, 7).unwrap();
        assert_eq!(seeds.len(), 3);
        for (i, s) in seeds.iter().enumerate() {
            assert_eq!(s.context.paragraph, i);
            assert!(s.qa.id.starts_with(&format!("c{i}q")));
        }
        assert_eq!(seeds, sample_seed_questions(&d, 7).unwrap());
    }

    #[test]
    fn forced_choice_ignores_seed() {
        let d = grid(1, 1);
        for seed in 0..20 {
            assert_eq!(sample_seed_questions(&d, seed).unwrap()[0].qa.id, "c0q0");
        }
    }

    #[test]
    fn sampling_reaches_every_question() {
        let d = grid(1, 3);
        let picked: HashSet<String> = (0..64)
            .map(|s| sample_seed_questions(&d, s).unwrap()[0].qa.id.clone())
            .collect();
        assert_eq!(picked.len(), 3);
    }

    #[test]
    fn sampling_requires_questions() {
        let mut d = grid(2, 1);
        d.articles[0].paragraphs[1].qas.clear();
        assert!(matches!(
            sample_seed_questions(&d, 0),
            Err(DatasetError::NoQuestions { article: 0, paragraph: 1 })
        ));
    }

    #[test]
    fn namespacing_prefixes_ids() {
        let d = grid(1, 2).namespaced("gen");
        let ids: Vec<_> = d.qas().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["gen:c0q0", "gen:c0q1"]);
    }
}
