//! Run configuration, one TOML file per run.
//!
//! ```toml
//! out_dir = "runs/nq-recite"
//! prompts = "prompts/nq"
//!
//! [dataset]
//! path = "data/nq-open.dev.jsonl"
//! adapter = "nq-open"
//! limit = 1024
//!
//! [scheme]
//! name = "ReciteAnswer"
//! paths = 20
//! shots = 5
//!
//! [sampling.recitation]
//! temperature = 0.7
//!
//! [backend]
//! kind = "remote"
//! base_url = "http://localhost:8000/v1"
//! model = "my-model"
//! token_env = "RECITE_API_TOKEN"
//! cache = "cache.jsonl"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! The auth token itself never appears in the file, only the name of the
//! environment variable that holds it.

use std::path::{Path, PathBuf};

use recite_core::eval::NormProfile;
use recite_core::prompting::{DialectName, PromptDialect};
use recite_core::{SamplingParams, Scheme, Strategy, Validate};
use serde::{Deserialize, Serialize};

use crate::datasets::Adapter;
use crate::pipeline::{ContextSource, SamplingMode, SchemeConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{field}: {path} does not exist")]
    MissingPath { field: String, path: PathBuf },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default = "default_adapter")]
    pub adapter: Adapter,
    #[serde(default)]
    pub limit: Option<usize>,
}

fn default_adapter() -> Adapter {
    Adapter::Jsonl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub name: Scheme,
    #[serde(default)]
    pub paths: Option<u32>,
    #[serde(default = "default_shots")]
    pub shots: u32,
    #[serde(default)]
    pub exemplar_seed: u64,
    #[serde(default = "default_hints")]
    pub n_hints: u32,
    #[serde(default = "default_hops")]
    pub recitations_per_hop: u32,
    #[serde(default)]
    pub context: ContextSource,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    #[serde(default = "default_dialect")]
    pub dialect: DialectName,
}

fn default_shots() -> u32 {
    5
}
fn default_hints() -> u32 {
    5
}
fn default_hops() -> u32 {
    2
}
fn default_dialect() -> DialectName {
    DialectName::Default
}

/// Overrides applied on top of the scheme's default decoding parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverride {
    pub strategy: Option<Strategy>,
    pub k: Option<u32>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub max_tokens: Option<u32>,
    pub stop: Option<Vec<String>>,
}

impl SamplingOverride {
    fn apply(&self, mut p: SamplingParams) -> SamplingParams {
        if let Some(s) = self.strategy {
            p.strategy = s;
            if s == Strategy::Greedy {
                p.k = None;
                p.temperature = None;
            }
        }
        if self.k.is_some() {
            p.k = self.k;
        }
        if self.temperature.is_some() {
            p.temperature = self.temperature;
        }
        if let Some(s) = self.seed {
            p.seed = s;
        }
        if let Some(m) = self.max_tokens {
            p.max_tokens = m;
        }
        if let Some(s) = &self.stop {
            p.stop_sequences = s.clone();
        }
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default)]
    pub recitation: SamplingOverride,
    #[serde(default)]
    pub answer: SamplingOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_timeout() -> u64 {
    120
}
fn default_attempts() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelismSection {
    #[serde(default = "default_q_par")]
    pub questions: usize,
    #[serde(default = "default_p_par")]
    pub paths: usize,
}

fn default_q_par() -> usize {
    4
}
fn default_p_par() -> usize {
    8
}

impl Default for ParallelismSection {
    fn default() -> Self {
        ParallelismSection { questions: default_q_par(), paths: default_p_par() }
    }
}

/// A saved corpus (for BM25 contexts and diversified hint filtering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub index: Option<PathBuf>,
    /// Drop sampled hints that are not in the corpus (diversified scheme).
    #[serde(default)]
    pub filter_hints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub prompts: PathBuf,
    pub dataset: DatasetSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    pub backend: BackendSection,
    #[serde(default)]
    pub normalization: NormProfile,
    #[serde(default)]
    pub parallelism: ParallelismSection,
    #[serde(default)]
    pub corpus: Option<CorpusSection>,
}

impl RunConfig {
    /// Parse, resolve relative paths, and validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.into(), message },
            other => other,
        })
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.prompts);
        fix(&mut self.dataset.path);
        if let Some(s) = self.backend.script.as_mut() {
            fix(s);
        }
        if let Some(c) = self.backend.cache.as_mut() {
            fix(c);
        }
        if let Some(c) = self.corpus.as_mut() {
            fix(&mut c.dir);
            if let Some(i) = c.index.as_mut() {
                fix(i);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let exists = |field: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { field: field.into(), path: p.into() })
            }
        };
        exists("dataset.path", &self.dataset.path)?;
        exists("prompts", &self.prompts)?;
        match self.backend.kind {
            BackendKind::Scripted => match &self.backend.script {
                Some(s) => exists("backend.script", s)?,
                None => return Err(invalid("backend.script", "required for the scripted backend")),
            },
            BackendKind::Remote => {
                if self.backend.base_url.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("backend.base_url", "required for the remote backend"));
                }
                if self.backend.model.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("backend.model", "required for the remote backend"));
                }
            }
        }
        if self.backend.max_attempts == 0 {
            return Err(invalid("backend.max_attempts", "must be at least 1"));
        }
        if self.parallelism.questions == 0 {
            return Err(invalid("parallelism.questions", "must be at least 1"));
        }
        if let Some(c) = &self.corpus {
            exists("corpus.dir", &c.dir)?;
            if let Some(i) = &c.index {
                exists("corpus.index", i)?;
            }
        }
        if self.scheme.context == ContextSource::Bm25 && self.corpus.as_ref().is_none_or(|c| c.index.is_none()) {
            return Err(invalid("corpus.index", "BM25 context needs a corpus directory and index"));
        }
        let v = self.scheme_config().violations();
        if !v.is_empty() {
            return Err(invalid("scheme", v.join("; ")));
        }
        Ok(())
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let s = &self.scheme;
        let mut c = SchemeConfig::new(s.name);
        if let Some(k) = s.paths {
            c.n_paths = k;
        }
        c.shots = s.shots;
        c.exemplar_seed = s.exemplar_seed;
        c.n_hints = s.n_hints;
        c.recitations_per_hop = s.recitations_per_hop;
        c.context = s.context;
        c.sampling_mode = s.sampling_mode;
        c.path_parallelism = self.parallelism.paths;
        c.recitation_params = self.sampling.recitation.apply(c.recitation_params);
        c.answer_params = self.sampling.answer.apply(c.answer_params);
        c
    }

    pub fn dialect(&self) -> PromptDialect {
        PromptDialect::from_name(self.scheme.dialect)
    }
}
