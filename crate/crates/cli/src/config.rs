//! TOML application config. Relative paths resolve against the directory of
//! the config file.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crag_core::embedding::EmbedderConfig;
use crag_core::evaluation::{ReportFormat, TokenizerKind, TokenizerRegistry, TokenizerSpec};
use crag_core::ingest::ColumnMapping;
use crag_core::llm_gateway::BackendConfig;
use crag_core::pipeline::CragConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus_csv: PathBuf,
    /// Grouped reviews written by `ingest`.
    pub corpus: PathBuf,
    pub vectors: PathBuf,
    pub knowledge: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_csv: "reviews.csv".into(),
            corpus: "work/corpus.json".into(),
            vectors: "work/vectors.jsonl".into(),
            knowledge: "work/knowledge.jsonl".into(),
            report: "work/report.md".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSettings {
    pub columns: ColumnMapping,
    /// Drop exact duplicate reviews within a product.
    pub dedup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prices {
    /// Price per 1000 prompt tokens for models without their own entry.
    pub default_per_1k: f64,
    pub per_1k: BTreeMap<String, f64>,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            default_per_1k: 0.01,
            per_1k: BTreeMap::new(),
        }
    }
}

impl Prices {
    pub fn for_model(&self, model: &str) -> f64 {
        self.per_1k.get(model).copied().unwrap_or(self.default_per_1k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    pub bind: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Backend id used for cluster summaries.
    pub summarizer: String,
    /// Backend ids that answer questions.
    pub qa_models: Vec<String>,
    pub report_format: ReportFormat,
    pub paths: Paths,
    pub ingest: IngestSettings,
    pub embedder: EmbedderConfig,
    pub crag: CragConfig,
    pub backends: BTreeMap<String, BackendConfig>,
    pub tokenizers: Vec<TokenizerSpec>,
    pub prices: Prices,
    pub service: ServiceSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            summarizer: "mock".into(),
            qa_models: vec!["mock".into()],
            report_format: ReportFormat::Markdown,
            paths: Paths::default(),
            ingest: IngestSettings::default(),
            embedder: EmbedderConfig::deterministic(256, 0),
            crag: CragConfig::default(),
            backends: BTreeMap::from([("mock".to_string(), BackendConfig::mock("mock"))]),
            tokenizers: vec![TokenizerSpec::builtin()],
            prices: Prices::default(),
            service: ServiceSettings::default(),
        }
    }
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

impl AppConfig {
    pub fn from_toml(raw: &str) -> Result<Self, CliError> {
        toml::from_str(raw).map_err(|e| config_error(e.to_string()))
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.corpus_csv, &mut p.corpus, &mut p.vectors, &mut p.knowledge, &mut p.report] {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for id in std::iter::once(&self.summarizer).chain(&self.qa_models) {
            if !self.backends.contains_key(id) {
                return Err(config_error(format!("backend `{id}` is referenced but not configured")));
            }
        }
        if self.qa_models.is_empty() {
            return Err(config_error("qa_models is empty"));
        }
        if self.tokenizers.is_empty() {
            return Err(config_error("at least one tokenizer is required"));
        }
        let mut ids = HashSet::new();
        for t in &self.tokenizers {
            if !ids.insert(t.id.as_str()) {
                return Err(config_error(format!("tokenizer id `{}` is used twice", t.id)));
            }
        }
        let registry = self.tokenizer_registry()?;
        for t in &self.tokenizers {
            if t.kind == TokenizerKind::Plugged && !registry.contains(&t.id) {
                return Err(config_error(format!(
                    "plugged tokenizer `{}` has no implementation (set parameters.chars_per_token)",
                    t.id
                )));
            }
        }
        let p = &self.paths;
        let all = [&p.corpus_csv, &p.corpus, &p.vectors, &p.knowledge, &p.report];
        let distinct: HashSet<_> = all.iter().collect();
        if distinct.len() != all.len() {
            return Err(config_error("configured paths must be distinct"));
        }
        self.embedder.validate().map_err(|e| config_error(e.to_string()))?;
        self.crag.clustering.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(())
    }

    pub fn tokenizer_registry(&self) -> Result<TokenizerRegistry, CliError> {
        let mut registry = TokenizerRegistry::new();
        registry
            .register_from_specs(&self.tokenizers)
            .map_err(|e| config_error(e.to_string()))?;
        Ok(registry)
    }

    pub fn backend(&self, id: &str) -> Result<&BackendConfig, CliError> {
        self.backends
            .get(id)
            .ok_or_else(|| config_error(format!("backend `{id}` is not configured")))
    }
}
