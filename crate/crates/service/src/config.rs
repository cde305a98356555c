//! Engine configuration: defaults, a TOML file, then `CITEQA_*` environment
//! overrides, in increasing precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use citeqa_core::generation::{DEFAULT_CONTEXT_TOKEN_BUDGET, DEFAULT_MAX_NEW_TOKENS, DEFAULT_REPETITION_PENALTY};
use citeqa_core::retrieval::{DEFAULT_CANDIDATE_POOL, DEFAULT_LEXICAL_WEIGHT};
use citeqa_core::verification::{DEFAULT_HIGHLIGHT_K, DEFAULT_SUPPORT_COVERAGE};

pub const ENV_PREFIX: &str = "CITEQA_";
/// Names the config file; never treated as an override.
pub const CONFIG_PATH_VAR: &str = "CITEQA_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub corpus: CorpusConfig,
    pub index: IndexConfig,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub embedding: EmbeddingConfig,
    pub verification: VerificationConfig,
    pub concurrency: ConcurrencyConfig,
    pub backend: BackendConfig,
    pub feedback: FeedbackConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
}

/// Prebuilt index files. A missing path (or file) means build in memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub lexical: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub lexical_weight: f64,
    pub candidate_pool: usize,
    pub stopwords: Option<PathBuf>,
    /// Tab or comma separated synonym pairs for the hashed embedder.
    pub synonyms: Option<PathBuf>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lexical_weight: DEFAULT_LEXICAL_WEIGHT,
            candidate_pool: DEFAULT_CANDIDATE_POOL,
            stopwords: None,
            synonyms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// An http(s) URL, or `scripted:<file>` holding a canned answer.
    pub backend: String,
    pub max_new_tokens: u32,
    pub repetition_penalty: f64,
    pub context_token_budget: usize,
    /// `inference`, `dataset` or a template file path.
    pub template: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            backend: "http://127.0.0.1:8081/generate".into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            repetition_penalty: DEFAULT_REPETITION_PENALTY,
            context_token_budget: DEFAULT_CONTEXT_TOKEN_BUDGET,
            template: "inference".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// An http(s) URL, `hashed` for the offline embedder, or `none` for
    /// lexical-only retrieval.
    pub backend: String,
    pub dimension: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: "hashed".into(),
            dimension: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Jaccard,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    /// An http(s) URL, `baseline`, or `scripted:<jsonl fixture>`.
    pub backend: String,
    pub highlight_k: usize,
    pub support_coverage: f64,
    pub numeric_coverage: f64,
    pub similarity: SimilarityKind,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            backend: "baseline".into(),
            highlight_k: DEFAULT_HIGHLIGHT_K,
            support_coverage: DEFAULT_SUPPORT_COVERAGE,
            numeric_coverage: DEFAULT_SUPPORT_COVERAGE,
            similarity: SimilarityKind::Jaccard,
        }
    }
}

/// Outbound request limits per backend, and the worker bound for the
/// verification fan-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcurrencyConfig {
    pub generation: usize,
    pub embedding: usize,
    pub nli: usize,
    pub verify_workers: usize,
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        Self {
            generation: 2,
            embedding: 4,
            nli: 8,
            verify_workers: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub timeout_ms: u64,
    /// Attempts per call, counting the first.
    pub attempts: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 60_000,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub path: PathBuf,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            path: "feedback.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Report zero stage timings and stamp feedback with the Unix epoch, so
    /// responses and stores are byte-stable. For golden tests.
    pub frozen_clock: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            frozen_clock: false,
        }
    }
}

impl EngineConfig {
    /// Defaults, then `path` if given, then overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                let table: toml::Table =
                    toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, dir)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != CONFIG_PATH_VAR)
            .collect();
        env.sort();
        for (var, raw) in env {
            apply_override(&mut table, &var, &raw)?;
        }
        let mut config: EngineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.resolve_paths(&base);
        config.validate()?;
        Ok(config)
    }

    // relative paths count from the config file's directory
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p)
            }
        };
        fix_opt(&mut self.corpus.path);
        fix_opt(&mut self.index.lexical);
        fix_opt(&mut self.index.vectors);
        fix_opt(&mut self.retrieval.stopwords);
        fix_opt(&mut self.retrieval.synonyms);
        fix(&mut self.feedback.path);
        for spec in [&mut self.generation.backend, &mut self.verification.backend] {
            if let Some(rest) = spec.strip_prefix("scripted:") {
                let p = Path::new(rest);
                if p.is_relative() {
                    *spec = format!("scripted:{}", base.join(p).display());
                }
            }
        }
        let t = &self.generation.template;
        if t != "inference" && t != "dataset" && Path::new(t).is_relative() {
            self.generation.template = base.join(t).display().to_string();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let r = &self.retrieval;
        if !(0.0..=1.0).contains(&r.lexical_weight) {
            problems.push(format!(
                "retrieval.lexical_weight {} is outside [0, 1]",
                r.lexical_weight
            ));
        }
        let positive = [
            ("retrieval.k", r.k as u64),
            ("retrieval.candidate_pool", r.candidate_pool as u64),
            ("generation.max_new_tokens", u64::from(self.generation.max_new_tokens)),
            (
                "generation.context_token_budget",
                self.generation.context_token_budget as u64,
            ),
            ("embedding.dimension", self.embedding.dimension as u64),
            ("verification.highlight_k", self.verification.highlight_k as u64),
            ("concurrency.generation", self.concurrency.generation as u64),
            ("concurrency.embedding", self.concurrency.embedding as u64),
            ("concurrency.nli", self.concurrency.nli as u64),
            ("concurrency.verify_workers", self.concurrency.verify_workers as u64),
            ("backend.timeout_ms", self.backend.timeout_ms),
            ("backend.attempts", u64::from(self.backend.attempts)),
        ];
        for (name, v) in positive {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        let rp = self.generation.repetition_penalty;
        if !rp.is_finite() || rp <= 0.0 {
            problems.push(format!("generation.repetition_penalty {rp} must be a positive number"));
        }
        for (name, v) in [
            ("verification.support_coverage", self.verification.support_coverage),
            ("verification.numeric_coverage", self.verification.numeric_coverage),
        ] {
            if !(0.0..=1.0).contains(&v) {
                problems.push(format!("{name} {v} is outside [0, 1]"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }
}

/// `CITEQA_RETRIEVAL_LEXICAL_WEIGHT=0.7` sets `retrieval.lexical_weight`.
/// The value is read as a TOML literal when it parses as one, else as a
/// plain string.
fn apply_override(table: &mut toml::Table, var: &str, raw: &str) -> Result<(), ConfigError> {
    let rest = &var[ENV_PREFIX.len()..];
    let env_err = |message: &str| ConfigError::Env {
        var: var.to_string(),
        message: message.to_string(),
    };
    let (section, key) = rest
        .split_once('_')
        .ok_or_else(|| env_err("expected CITEQA_<SECTION>_<KEY>"))?;
    let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
    if section.is_empty() || key.is_empty() {
        return Err(env_err("expected CITEQA_<SECTION>_<KEY>"));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key, value);
            Ok(())
        }
        _ => Err(env_err("section is not a table in the config file")),
    }
}
