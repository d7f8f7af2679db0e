//! End-to-end orchestration behind the `qagen` subcommands.
//!
//! Each stage is its own subcommand so the expensive generation stage can be
//! resumed from its provenance file. Artifacts land in a run directory named
//! after the config digest:
//!
//! ```text
//! <run_root>/<digest[..16]>/
//!   generated.json      SQuAD v1.1 dataset of kept pairs
//!   provenance.jsonl    one generation record per seed question
//!   qg.jsonl            raw question-generator output per context
//!   decisions.jsonl     one filter decision per candidate
//!   run_manifest.json   digests, per-stage counts and timings
//!   mixed.json          (mix) real + sampled generated QAs
//!   mix_manifest.json   (mix) spec, input digests, sampled ids
//! ```

pub mod config;
pub mod report;
mod run;

use thiserror::Error;

pub use config::{PipelineConfig, ReportFormat};
pub use report::{build_table, canonical_dataset, ReportGroup, ResultsTable, TABLE_DATASETS};
pub use run::{
    cmd_evaluate, cmd_generate, cmd_mix, cmd_stats, cmd_validate, load_dataset, render_stats, verify_mix,
    GenerateOptions, GenerateOutcome, MixRun, RunManifest, StageCounts,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Input(_) => 3,
            PipelineError::Backend(_) => 4,
            PipelineError::Internal(_) => 5,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Internal(e.to_string())
    }
}
