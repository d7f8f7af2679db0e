//! Mixing real and generated datasets at a fixed ratio.
//!
//! The ratio is relative to the real dataset: ratio 1.0 adds as many
//! generated QAs as there are real ones, 0.5 adds half as many, 2.0 twice as
//! many. Sampling happens at QA granularity, uniformly without replacement;
//! each sampled QA brings its paragraph along, and QAs that share a
//! paragraph share one copy of it. Generated ids are prefixed with `gen:`.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::normalize_answer;
use crate::squad::{namespace_id, serialize_dataset, Article, Paragraph, QaDataset, ValidationIssue};

pub const GENERATED_TAG: &str = "gen";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub dedup: bool,
    #[serde(default = "yes")]
    pub shuffle_output: bool,
}

fn yes() -> bool {
    true
}

impl MixSpec {
    pub fn new(ratio: f64, seed: u64) -> Self {
        MixSpec { ratio, seed, dedup: false, shuffle_output: true }
    }
}

#[derive(Debug, Error)]
pub enum MixError {
    #[error("mix ratio must be a positive finite number, got {0}")]
    BadRatio(f64),
    #[error("generated pool too small: need {required} QAs, have {available}")]
    InsufficientPool { required: usize, available: usize },
    #[error("mixed dataset is invalid: {0}")]
    Invalid(#[from] ValidationIssue),
    #[error("manifest does not reproduce: {0}")]
    ManifestMismatch(String),
}

/// `round(ratio * real_qas)`, rounding half up.
pub fn required_generated(real_qas: usize, ratio: f64) -> usize {
    (ratio * real_qas as f64 + 0.5).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutcome {
    pub dataset: QaDataset,
    /// Pool ids (before namespacing) of the sampled QAs, in pool order.
    pub sampled_ids: Vec<String>,
    pub real_qas: usize,
    pub generated_qas: usize,
}

pub fn mix_datasets(real: &QaDataset, gen_pool: &QaDataset, spec: &MixSpec) -> Result<MixOutcome, MixError> {
    if !(spec.ratio > 0.0 && spec.ratio.is_finite()) {
        return Err(MixError::BadRatio(spec.ratio));
    }
    let deduped;
    let pool = if spec.dedup {
        deduped = dedup(gen_pool);
        &deduped
    } else {
        gen_pool
    };
    let real_qas = real.num_qas();
    let required = required_generated(real_qas, spec.ratio);
    let slots: Vec<(usize, usize, usize)> = pool
        .articles
        .iter()
        .enumerate()
        .flat_map(|(a, art)| {
            art.paragraphs
                .iter()
                .enumerate()
                .flat_map(move |(p, para)| (0..para.qas.len()).map(move |q| (a, p, q)))
        })
        .collect();
    if slots.len() < required {
        return Err(MixError::InsufficientPool { required, available: slots.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = index::sample(&mut rng, slots.len(), required).into_vec();
    picked.sort_unstable();

    let mut generated: Vec<Article> = Vec::new();
    let mut sampled_ids = Vec::with_capacity(required);
    let mut last: Option<(usize, usize)> = None;
    for i in picked {
        let (a, p, q) = slots[i];
        let src_article = &pool.articles[a];
        let src_para = &src_article.paragraphs[p];
        let qa = &src_para.qas[q];
        sampled_ids.push(qa.id.clone());
        let mut qa = qa.clone();
        qa.id = namespace_id(GENERATED_TAG, &qa.id);
        if last.map(|(la, _)| la) != Some(a) {
            generated.push(Article { title: src_article.title.clone(), paragraphs: Vec::new() });
        }
        let article = generated.last_mut().expect("article pushed");
        if last != Some((a, p)) {
            article.paragraphs.push(Paragraph { context: src_para.context.clone(), qas: Vec::new() });
        }
        article.paragraphs.last_mut().expect("paragraph pushed").qas.push(qa);
        last = Some((a, p));
    }

    let mut articles = real.articles.clone();
    articles.extend(generated);
    if spec.shuffle_output {
        articles.shuffle(&mut rng);
        for article in &mut articles {
            article.paragraphs.shuffle(&mut rng);
        }
    }
    let dataset = QaDataset { version: real.version.clone(), articles };
    dataset.validate()?;
    Ok(MixOutcome { dataset, sampled_ids, real_qas, generated_qas: required })
}

/// Drops QAs whose normalized (question, first answer) repeats an earlier
/// one, then any paragraph or article left empty.
pub fn dedup(dataset: &QaDataset) -> QaDataset {
    let mut seen = HashSet::new();
    let articles = dataset
        .articles
        .iter()
        .filter_map(|article| {
            let paragraphs: Vec<Paragraph> = article
                .paragraphs
                .iter()
                .filter_map(|para| {
                    let qas: Vec<_> = para
                        .qas
                        .iter()
                        .filter(|qa| {
                            let answer = qa.answers.first().map(|a| a.text.as_str()).unwrap_or("");
                            seen.insert((normalize_answer(&qa.question), normalize_answer(answer)))
                        })
                        .cloned()
                        .collect();
                    (!qas.is_empty()).then(|| Paragraph { context: para.context.clone(), qas })
                })
                .collect();
            (!paragraphs.is_empty()).then(|| Article { title: article.title.clone(), paragraphs })
        })
        .collect();
    QaDataset { version: dataset.version.clone(), articles }
}

/// Everything needed to re-derive a mix bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifest {
    pub spec: MixSpec,
    pub real_digest: String,
    pub generated_digest: String,
    pub real_qas: usize,
    pub generated_qas: usize,
    pub sampled_ids: Vec<String>,
    pub output_digest: String,
}

impl MixManifest {
    pub fn new(spec: MixSpec, real_bytes: &[u8], gen_bytes: &[u8], outcome: &MixOutcome) -> Self {
        MixManifest {
            spec,
            real_digest: crate::sha256_hex(real_bytes),
            generated_digest: crate::sha256_hex(gen_bytes),
            real_qas: outcome.real_qas,
            generated_qas: outcome.generated_qas,
            sampled_ids: outcome.sampled_ids.clone(),
            output_digest: crate::sha256_hex(&serialize_dataset(&outcome.dataset)),
        }
    }

    /// Re-runs the mix from the original inputs and checks every digest.
    pub fn reproduce(&self, real_bytes: &[u8], gen_bytes: &[u8]) -> Result<MixOutcome, MixError> {
        let mismatch = |what: &str| Err(MixError::ManifestMismatch(what.to_string()));
        if crate::sha256_hex(real_bytes) != self.real_digest {
            return mismatch("real dataset digest differs");
        }
        if crate::sha256_hex(gen_bytes) != self.generated_digest {
            return mismatch("generated pool digest differs");
        }
        let parse = |b: &[u8]| {
            crate::squad::parse_dataset(b).map_err(|e| MixError::ManifestMismatch(e.to_string()))
        };
        let outcome = mix_datasets(&parse(real_bytes)?, &parse(gen_bytes)?, &self.spec)?;
        if outcome.sampled_ids != self.sampled_ids {
            return mismatch("sampled ids differ");
        }
        if crate::sha256_hex(&serialize_dataset(&outcome.dataset)) != self.output_digest {
            return mismatch("output digest differs");
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squad::{AnswerSpan, QaPair};

    fn dataset(prefix: &str, contexts: usize, per: usize) -> QaDataset {
        let paragraphs = (0..contexts)
            .map(|c| Paragraph {
                context: format!("{prefix} context {c} holds answer{c}"),
                qas: (0..per)
                    .map(|q| QaPair {
                        id: format!("{prefix}{c}-{q}"),
                        question: format!("{prefix} question {c} {q}?"),
                        answers: vec![AnswerSpan {
                            text: format!("answer{c}"),
                            answer_start: format!("{prefix} context {c} holds ").chars().count(),
                        }],
                    })
                    .collect(),
            })
            .collect();
        QaDataset::new(vec![Article { title: prefix.into(), paragraphs }])
    }

    fn count_gen(d: &QaDataset) -> usize {
        d.qas().filter(|q| q.id.starts_with("gen:")).count()
    }

    #[test]
    fn equal_amount_at_ratio_one() {
        let real = dataset("r", 5, 2);
        let pool = dataset("g", 10, 3);
        let out = mix_datasets(&real, &pool, &MixSpec::new(1.0, 1)).unwrap();
        assert_eq!(out.dataset.num_qas(), 20);
        assert_eq!(count_gen(&out.dataset), 10);
    }

    #[test]
    fn half_ratio_and_half_up_rounding() {
        let real = dataset("r", 5, 2);
        let pool = dataset("g", 10, 3);
        assert_eq!(mix_datasets(&real, &pool, &MixSpec::new(0.5, 1)).unwrap().dataset.num_qas(), 15);
        assert_eq!(required_generated(7, 0.5), 4);
        assert_eq!(required_generated(7, 2.0), 14);
        assert_eq!(required_generated(0, 2.0), 0);
    }

    #[test]
    fn insufficient_pool_fails_loudly() {
        let real = dataset("r", 5, 2);
        let pool = dataset("g", 5, 3);
        match mix_datasets(&real, &pool, &MixSpec::new(2.0, 1)) {
            Err(MixError::InsufficientPool { required: 20, available: 15 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(mix_datasets(&real, &pool, &MixSpec::new(0.0, 1)), Err(MixError::BadRatio(_))));
    }

    #[test]
    fn shared_contexts_are_not_duplicated() {
        let real = dataset("r", 1, 4);
        let pool = dataset("g", 1, 4);
        let out = mix_datasets(&real, &pool, &MixSpec { shuffle_output: false, ..MixSpec::new(1.0, 3) }).unwrap();
        assert_eq!(out.dataset.paragraphs().count(), 2);
        assert_eq!(out.sampled_ids, ["g0-0", "g0-1", "g0-2", "g0-3"]);
    }

    #[test]
    fn deterministic_per_seed() {
        let real = dataset("r", 4, 2);
        let pool = dataset("g", 10, 3);
        let a = mix_datasets(&real, &pool, &MixSpec::new(1.0, 9)).unwrap();
        let b = mix_datasets(&real, &pool, &MixSpec::new(1.0, 9)).unwrap();
        assert_eq!(a, b);
        let c = mix_datasets(&real, &pool, &MixSpec::new(1.0, 10)).unwrap();
        assert_eq!(c.dataset.num_qas(), a.dataset.num_qas());
    }

    #[test]
    fn dedup_collapses_normalized_duplicates() {
        // By hand: "The bison?" -> lower "the bison?" -> strip "?" -> drop "the" -> "bison".
        assert_eq!(normalize_answer("The bison?"), "bison");
        let mut d = dataset("g", 2, 1);
        d.articles[0].paragraphs[0].qas[0].question = "The bison?".into();
        d.articles[0].paragraphs[1].qas[0].question = "bison".into();
        d.articles[0].paragraphs[1].context = "g context 0 holds answer0".into();
        d.articles[0].paragraphs[1].qas[0].answers[0].text = "answer0".into();
        let out = dedup(&d);
        assert_eq!(out.num_qas(), 1);
        assert_eq!(out.qas().next().unwrap().id, "g0-0");
        assert_eq!(out.paragraphs().count(), 1);

        // Byte-identical QAs under a different id.
        let mut dup = dataset("g", 1, 1);
        let copy = dup.articles[0].paragraphs[0].qas[0].clone();
        dup.articles[0].paragraphs[0].qas.push(QaPair { id: "copy".into(), ..copy });
        assert_eq!(dedup(&dup).num_qas(), 1);
    }

    #[test]
    fn dedup_removes_emptied_paragraphs_and_keeps_unique_data() {
        let d = dataset("g", 3, 2);
        assert_eq!(dedup(&d), d);
        let mut twice = d.clone();
        twice.articles.push(Article {
            title: "again".into(),
            paragraphs: d.articles[0].paragraphs.clone(),
        });
        assert_eq!(dedup(&twice), d);
    }

    #[test]
    fn manifest_reproduces() {
        let real = serialize_dataset(&dataset("r", 4, 2));
        let pool = serialize_dataset(&dataset("g", 10, 3));
        let spec = MixSpec::new(2.0, 4);
        let out = mix_datasets(
            &crate::squad::parse_dataset(&real).unwrap(),
            &crate::squad::parse_dataset(&pool).unwrap(),
            &spec,
        )
        .unwrap();
        let manifest = MixManifest::new(spec, &real, &pool, &out);
        assert_eq!(manifest.reproduce(&real, &pool).unwrap(), out);
        assert!(matches!(manifest.reproduce(&pool, &real), Err(MixError::ManifestMismatch(_))));
    }
}
