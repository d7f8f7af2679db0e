use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{require_file, PipelineConfig, ReportFormat};
use super::PipelineError;
use crate::backend::{BackendClient, BackendConfig, GeneratedPair, ReplayFixture, Request};
use crate::generation::{generate_contexts, resume_index, GenerationOptions, GenerationRecord, ResumeIndex};
use crate::metrics::{evaluate_dataset, parse_predictions, EvalReport};
use crate::mixer::{mix_datasets, MixManifest, MixOutcome};
use crate::provenance::{read_jsonl, JsonlWriter};
use crate::squad::{
    dataset_stats, parse_dataset_with, sample_seed_questions, serialize_dataset, DatasetStats, QaDataset,
    Validation, ValidationIssue,
};
use crate::synthesis::{assemble_generated_dataset, build_candidates, roundtrip_filter, FilterOptions};

pub const GENERATED_FILE: &str = "generated.json";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const QG_FILE: &str = "qg.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const MIXED_FILE: &str = "mixed.json";
pub const MIX_MANIFEST_FILE: &str = "mix_manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub seeds: usize,
    pub contexts_attempted: usize,
    pub contexts_generated: usize,
    pub context_errors: usize,
    pub qg_errors: usize,
    pub raw_pairs: usize,
    /// Raw pairs beyond the per-context cap, never considered.
    pub truncated_pairs: usize,
    pub candidates: usize,
    pub kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
    pub counts: StageCounts,
    /// Wall-clock seconds per stage. Not part of any digest.
    pub stage_secs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_digest: Option<String>,
    pub status: String,
}

impl RunManifest {
    fn new(config_digest: String) -> Self {
        RunManifest {
            config_digest,
            input_digests: BTreeMap::new(),
            counts: StageCounts::default(),
            stage_secs: BTreeMap::new(),
            output_digest: None,
            status: "running".into(),
        }
    }

    fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join(RUN_MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(dir.join(RUN_MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("run manifest: {e}")))
    }
}

pub fn load_dataset(path: &Path, lenient: bool) -> Result<QaDataset, PipelineError> {
    let bytes = read_file(path)?;
    parse_bytes(path, &bytes, lenient)
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    require_file(path)?;
    fs::read(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn parse_bytes(path: &Path, bytes: &[u8], lenient: bool) -> Result<QaDataset, PipelineError> {
    let mode = if lenient { Validation::Lenient } else { Validation::Strict };
    let (dataset, issues) =
        parse_dataset_with(bytes, mode).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    for issue in &issues {
        warn!("{}: dropped: {issue}", path.display());
    }
    Ok(dataset)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Reuse successful generation records already in the run's provenance
    /// file instead of sending their requests again.
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub run_dir: PathBuf,
    pub dataset: QaDataset,
    pub manifest: RunManifest,
}

fn connect(cfg: &BackendConfig, replay: &Option<Arc<ReplayFixture>>) -> Result<BackendClient, PipelineError> {
    BackendClient::connect(cfg.clone(), replay.clone()).map_err(|e| PipelineError::Config(e.to_string()))
}

#[derive(Serialize)]
struct QgLogLine<'a> {
    seed_question_id: &'a str,
    request_fingerprint: &'a str,
    pairs: &'a [GeneratedPair],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Seed sampling, context generation, question generation, round-trip
/// filtering and assembly. On a hard error the manifest is still written,
/// with counts up to the failing stage.
pub fn cmd_generate(cfg: &PipelineConfig, opts: GenerateOptions) -> Result<GenerateOutcome, PipelineError> {
    let (input, backends) = cfg.check_for_generate()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    let mut manifest = RunManifest::new(cfg.digest());
    match run_generate(cfg, opts, input, backends, &run_dir, &mut manifest) {
        Ok(dataset) => {
            manifest.status = "complete".into();
            manifest.write(&run_dir)?;
            Ok(GenerateOutcome { run_dir, dataset, manifest })
        }
        Err((stage, err)) => {
            manifest.status = format!("failed at {stage}: {err}");
            manifest.write(&run_dir)?;
            Err(err)
        }
    }
}

fn run_generate(
    cfg: &PipelineConfig,
    opts: GenerateOptions,
    input: &Path,
    backends: &super::config::Backends,
    run_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<QaDataset, (&'static str, PipelineError)> {
    let mut clock = Instant::now();
    let mut lap = |manifest: &mut RunManifest, stage: &str| {
        manifest.stage_secs.insert(stage.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let stage = "load";
    let bytes = read_file(input).map_err(|e| (stage, e))?;
    manifest.input_digests.insert("input".into(), crate::sha256_hex(&bytes));
    let real = parse_bytes(input, &bytes, cfg.lenient).map_err(|e| (stage, e))?;
    let replay = match &cfg.replay {
        Some(path) => {
            let raw = fs::read(path).map_err(|e| (stage, PipelineError::Config(format!("{}: {e}", path.display()))))?;
            manifest.input_digests.insert("replay".into(), crate::sha256_hex(&raw));
            let text = String::from_utf8(raw).map_err(|e| (stage, PipelineError::Input(e.to_string())))?;
            Some(Arc::new(
                ReplayFixture::parse_jsonl(&text, cfg.strict_replay).map_err(|e| (stage, PipelineError::Input(e)))?,
            ))
        }
        None => None,
    };
    let llm = connect(&backends.llm, &replay).map_err(|e| (stage, e))?;
    let qg = connect(&backends.qg, &replay).map_err(|e| (stage, e))?;
    let reader = connect(&backends.reader, &replay).map_err(|e| (stage, e))?;
    lap(manifest, stage);

    let stage = "sample";
    let seeds = sample_seed_questions(&real, cfg.run_seed).map_err(|e| (stage, PipelineError::Input(e.to_string())))?;
    manifest.counts.seeds = seeds.len();
    lap(manifest, stage);

    let stage = "generate";
    let io = |e: std::io::Error| (stage, PipelineError::from(e));
    let provenance_path = run_dir.join(PROVENANCE_FILE);
    let resume: ResumeIndex = if opts.resume && provenance_path.is_file() {
        let text = fs::read_to_string(&provenance_path).map_err(io)?;
        let previous: Vec<GenerationRecord> =
            read_jsonl(&text).map_err(|e| (stage, PipelineError::Input(format!("provenance: {e}"))))?;
        info!("resuming: {} earlier records", previous.len());
        resume_index(previous)
    } else {
        ResumeIndex::new()
    };
    let gen_opts = GenerationOptions {
        template: cfg.generation.prompt_template.clone(),
        max_words: cfg.generation.max_words,
        run_seed: cfg.run_seed,
    };
    let mut provenance = JsonlWriter::create(&provenance_path).map_err(io)?;
    let records = generate_contexts(&seeds, &llm, &gen_opts, &resume, &mut provenance).map_err(io)?;
    manifest.counts.contexts_attempted = records.len();
    manifest.counts.contexts_generated = records.iter().filter(|r| r.is_ok()).count();
    manifest.counts.context_errors = records.len() - manifest.counts.contexts_generated;
    lap(manifest, stage);

    let stage = "question_generation";
    let io = |e: std::io::Error| (stage, PipelineError::from(e));
    let ok: Vec<&GenerationRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let requests: Vec<Request> = ok
        .iter()
        .map(|r| Request::GenerateQuestions { context: r.clipped_context.clone() })
        .collect();
    let replies = qg.run_batch(&requests);
    let mut qg_log = JsonlWriter::create(&run_dir.join(QG_FILE)).map_err(io)?;
    let cap = cfg.synthesis.per_context_cap;
    let mut candidates = Vec::new();
    for ((record, request), reply) in ok.iter().zip(&requests).zip(replies) {
        let fingerprint = qg.config().fingerprint(request);
        let parsed = reply.and_then(|r| crate::backend::parse_pairs(&r.value));
        let (pairs, error) = match parsed {
            Ok(pairs) => (pairs, None),
            Err(e) => {
                manifest.counts.qg_errors += 1;
                (Vec::new(), Some(e.to_string()))
            }
        };
        qg_log
            .append(&QgLogLine {
                seed_question_id: &record.seed_question_id,
                request_fingerprint: &fingerprint,
                pairs: &pairs,
                error,
            })
            .map_err(io)?;
        manifest.counts.raw_pairs += pairs.len();
        manifest.counts.truncated_pairs += pairs.len().saturating_sub(cap);
        candidates.extend(build_candidates(record, &pairs, cap));
    }
    qg_log.flush().map_err(io)?;
    manifest.counts.candidates = candidates.len();
    lap(manifest, stage);

    let stage = "filter";
    let mut decision_log =
        JsonlWriter::create(&run_dir.join(DECISIONS_FILE)).map_err(|e| (stage, PipelineError::from(e)))?;
    let filter_opts = FilterOptions { criterion: cfg.synthesis.criterion, hard_fail: cfg.synthesis.hard_fail };
    let decisions = roundtrip_filter(&records, candidates, &reader, filter_opts, &mut decision_log).map_err(|e| {
        let err = match e {
            crate::synthesis::FilterError::Io(io) => PipelineError::from(io),
            crate::synthesis::FilterError::UnknownRecord(_) => PipelineError::Internal(e.to_string()),
            crate::synthesis::FilterError::Reader { .. } => PipelineError::Backend(e.to_string()),
        };
        (stage, err)
    })?;
    manifest.counts.kept = decisions.iter().filter(|d| d.kept()).count();
    lap(manifest, stage);

    let stage = "assemble";
    let dataset = assemble_generated_dataset(&records, &decisions);
    dataset
        .validate()
        .map_err(|e| (stage, PipelineError::Internal(format!("assembled dataset failed validation: {e}"))))?;
    let bytes = serialize_dataset(&dataset);
    fs::write(run_dir.join(GENERATED_FILE), &bytes).map_err(|e| (stage, PipelineError::from(e)))?;
    manifest.output_digest = Some(crate::sha256_hex(&bytes));
    lap(manifest, stage);
    Ok(dataset)
}

#[derive(Debug, Clone)]
pub struct MixRun {
    pub run_dir: PathBuf,
    pub outcome: MixOutcome,
    pub manifest: MixManifest,
}

/// Mixes the configured real and generated datasets and writes the mixed
/// dataset plus its sidecar manifest.
pub fn cmd_mix(cfg: &PipelineConfig) -> Result<MixRun, PipelineError> {
    let mix = cfg.check_for_mix()?;
    let real_bytes = read_file(&mix.real)?;
    let gen_bytes = read_file(&mix.generated)?;
    let real = parse_bytes(&mix.real, &real_bytes, cfg.lenient)?;
    let pool = parse_bytes(&mix.generated, &gen_bytes, cfg.lenient)?;
    let started = Instant::now();
    let outcome = mix_datasets(&real, &pool, &mix.spec).map_err(|e| PipelineError::Input(e.to_string()))?;
    let manifest = MixManifest::new(mix.spec, &real_bytes, &gen_bytes, &outcome);

    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join(MIXED_FILE), serialize_dataset(&outcome.dataset))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(run_dir.join(MIX_MANIFEST_FILE), text + "\n")?;

    let mut run_manifest = RunManifest::read(&run_dir).unwrap_or_else(|_| {
        let mut m = RunManifest::new(cfg.digest());
        m.status = "complete".into();
        m
    });
    run_manifest.input_digests.insert("mix.real".into(), manifest.real_digest.clone());
    run_manifest.input_digests.insert("mix.generated".into(), manifest.generated_digest.clone());
    run_manifest.counts.mixed = Some(outcome.dataset.num_qas());
    run_manifest.stage_secs.insert("mix".into(), started.elapsed().as_secs_f64());
    run_manifest.write(&run_dir)?;
    Ok(MixRun { run_dir, outcome, manifest })
}

/// Re-derives a mix from its manifest and the original input files.
pub fn verify_mix(manifest_path: &Path, real: &Path, generated: &Path) -> Result<MixOutcome, PipelineError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", manifest_path.display())))?;
    let manifest: MixManifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("mix manifest: {e}")))?;
    manifest
        .reproduce(&read_file(real)?, &read_file(generated)?)
        .map_err(|e| PipelineError::Input(e.to_string()))
}

pub fn cmd_evaluate(
    gold_path: &Path,
    predictions_path: &Path,
    dataset_name: &str,
    lenient: bool,
) -> Result<EvalReport, PipelineError> {
    let gold = load_dataset(gold_path, lenient)?;
    let preds = parse_predictions(&read_file(predictions_path)?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", predictions_path.display())))?;
    let report = evaluate_dataset(dataset_name, &gold, &preds);
    if !report.unknown_predictions.is_empty() {
        warn!(
            "{} prediction id(s) have no gold question, e.g. {}",
            report.unknown_predictions.len(),
            report.unknown_predictions[0]
        );
    }
    Ok(report)
}

pub fn cmd_stats(path: &Path, lenient: bool) -> Result<DatasetStats, PipelineError> {
    Ok(dataset_stats(&load_dataset(path, lenient)?))
}

/// Parses `path` leniently and reports every issue strict mode would reject.
pub fn cmd_validate(path: &Path) -> Result<(DatasetStats, Vec<ValidationIssue>), PipelineError> {
    let bytes = read_file(path)?;
    let (dataset, issues) = parse_dataset_with(&bytes, Validation::Lenient)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    Ok((dataset_stats(&dataset), issues))
}

pub fn render_stats(name: &str, stats: &DatasetStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut value = serde_json::to_value(stats).expect("stats serialize");
            value["dataset"] = serde_json::Value::String(name.to_string());
            serde_json::to_string_pretty(&value).expect("stats serialize") + "\n"
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["dataset", "articles", "contexts", "qas", "mean_context_words", "mean_answers_per_qa"])
                .expect("in-memory csv");
            w.write_record([
                name.to_string(),
                stats.num_articles.to_string(),
                stats.num_contexts.to_string(),
                stats.num_qas.to_string(),
                format!("{:.1}", stats.mean_context_words),
                format!("{:.2}", stats.mean_answers_per_qa),
            ])
            .expect("in-memory csv");
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
        }
        ReportFormat::Markdown => format!(
            "| Dataset | Articles | Contexts | QAs | Mean context words | Mean answers/QA |\n\
             | --- | ---: | ---: | ---: | ---: | ---: |\n\
             | {name} | {} | {} | {} | {:.1} | {:.2} |\n",
            stats.num_articles, stats.num_contexts, stats.num_qas, stats.mean_context_words, stats.mean_answers_per_qa
        ),
    }
}
