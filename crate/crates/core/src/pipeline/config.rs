use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backend::{BackendConfig, Role};
use crate::generation::{PromptTemplate, DEFAULT_MAX_WORDS};
use crate::mixer::MixSpec;
use crate::synthesis::{Criterion, DEFAULT_PER_CONTEXT_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default)]
    pub prompt_template: PromptTemplate,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
}

fn default_max_words() -> usize {
    DEFAULT_MAX_WORDS
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection { prompt_template: PromptTemplate::default(), max_words: DEFAULT_MAX_WORDS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default = "default_cap")]
    pub per_context_cap: usize,
    #[serde(default)]
    pub hard_fail: bool,
}

fn default_cap() -> usize {
    DEFAULT_PER_CONTEXT_CAP
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection { criterion: Criterion::Exact, per_context_cap: DEFAULT_PER_CONTEXT_CAP, hard_fail: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub llm: BackendConfig,
    pub qg: BackendConfig,
    pub reader: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSection {
    pub real: PathBuf,
    pub generated: PathBuf,
    #[serde(flatten)]
    pub spec: MixSpec,
}

/// The single JSON document that drives a run. Relative paths resolve
/// against the directory holding the config file. Secrets never appear here:
/// backends name the environment variable that holds their token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Real dataset that seed questions are sampled from.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Parent of the per-config run directories.
    #[serde(default = "default_run_root")]
    pub run_root: PathBuf,
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default)]
    pub lenient: bool,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub backends: Option<Backends>,
    #[serde(default)]
    pub mix: Option<MixSection>,
    #[serde(default)]
    pub replay: Option<PathBuf>,
    #[serde(default)]
    pub strict_replay: bool,
    #[serde(default)]
    pub report_format: ReportFormat,
}

fn default_run_root() -> PathBuf {
    PathBuf::from("runs")
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = std::path::absolute(path)
            .map(|p| p.parent().map(Path::to_path_buf).unwrap_or_default())
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.input.as_mut() {
            fix(p);
        }
        fix(&mut self.run_root);
        if let Some(p) = self.replay.as_mut() {
            fix(p);
        }
        if let Some(m) = self.mix.as_mut() {
            fix(&mut m.real);
            fix(&mut m.generated);
        }
    }

    /// SHA-256 of the canonical JSON form. Input paths are replaced by the
    /// digests of the files they name and the run root is left out, so the
    /// digest follows content rather than location.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("run_root");
        }
        for pointer in ["/input", "/replay", "/mix/real", "/mix/generated"] {
            if let Some(slot) = value.pointer_mut(pointer) {
                if let Some(path) = slot.as_str() {
                    if let Ok(bytes) = std::fs::read(path) {
                        *slot = serde_json::Value::String(format!("sha256:{}", crate::sha256_hex(&bytes)));
                    }
                }
            }
        }
        crate::sha256_hex(crate::backend::canonical_json(&value).as_bytes())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run_root.join(&self.digest()[..16])
    }

    /// Everything `generate` needs, checked before any network call.
    pub fn check_for_generate(&self) -> Result<(&Path, &Backends), PipelineError> {
        let input = self
            .input
            .as_deref()
            .ok_or_else(|| PipelineError::Config("config has no \"input\" dataset".into()))?;
        require_file(input)?;
        if let Some(replay) = &self.replay {
            require_file(replay)?;
        }
        let backends = self
            .backends
            .as_ref()
            .ok_or_else(|| PipelineError::Config("config has no \"backends\" section".into()))?;
        for (role, cfg) in [(Role::Llm, &backends.llm), (Role::Qg, &backends.qg), (Role::Reader, &backends.reader)] {
            if cfg.role != role {
                return Err(PipelineError::Config(format!("backends.{role} is configured with role {}", cfg.role)));
            }
            cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.generation.max_words == 0 {
            return Err(PipelineError::Config("generation.max_words must be >= 1".into()));
        }
        if let Criterion::F1Threshold { tau } = self.synthesis.criterion {
            if !(0.0..=1.0).contains(&tau) {
                return Err(PipelineError::Config(format!("f1 threshold must be in [0, 1], got {tau}")));
            }
        }
        Ok((input, backends))
    }

    pub fn check_for_mix(&self) -> Result<&MixSection, PipelineError> {
        let mix = self
            .mix
            .as_ref()
            .ok_or_else(|| PipelineError::Config("config has no \"mix\" section".into()))?;
        require_file(&mix.real)?;
        require_file(&mix.generated)?;
        Ok(mix)
    }
}

pub(crate) fn require_file(path: &Path) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("no such file: {}", path.display())))
    }
}
