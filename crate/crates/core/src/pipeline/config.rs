use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::PipelineError;
use crate::analytics::{Dimension, DEFAULT_DISPARITY_THRESHOLD};
use crate::digest::sha256_hex;
use crate::ingest::VocabularyConfig;
use crate::needs::{DEFAULT_MIN_KEYWORD_MASS, DEFAULT_TAU};
use crate::topics::TopicModelConfig;

/// Pipeline configuration, read from TOML. Relative paths resolve against
/// the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub topic_model: TopicSection,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub server: ServerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub registry: PathBuf,
    pub feedback: PathBuf,
    /// Seed lexicon.
    pub lexicon: PathBuf,
    #[serde(default)]
    pub ontology: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub valence: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub min_doc_freq: usize,
    pub max_doc_fraction: f64,
    pub boilerplate: Vec<String>,
    pub require_latin_text: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let v = VocabularyConfig::default();
        Self {
            min_doc_freq: v.min_doc_freq,
            max_doc_fraction: v.max_doc_fraction,
            boilerplate: Vec::new(),
            require_latin_text: false,
        }
    }
}

/// Either a fixed `num_topics`, or `candidates` for held-out selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicSection {
    pub num_topics: Option<usize>,
    pub candidates: Vec<usize>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub heldout_fraction: f64,
}

impl Default for TopicSection {
    fn default() -> Self {
        let d = TopicModelConfig::new(10);
        Self {
            num_topics: None,
            candidates: Vec::new(),
            alpha: d.alpha,
            beta: d.beta,
            iterations: d.iterations,
            burn_in: d.burn_in,
            sample_lag: d.sample_lag,
            heldout_fraction: d.heldout_fraction,
        }
    }
}

pub const DEFAULT_NUM_TOPICS: usize = 10;

impl TopicSection {
    /// Sampler template; `num_topics` is the fixed K or the default.
    pub fn model_config(&self, seed: u64) -> TopicModelConfig {
        TopicModelConfig {
            num_topics: self.num_topics.unwrap_or(DEFAULT_NUM_TOPICS),
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            sample_lag: self.sample_lag,
            seed,
            heldout_fraction: self.heldout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub tau: f64,
    pub min_keyword_mass: f64,
    pub context_radius: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            min_keyword_mass: DEFAULT_MIN_KEYWORD_MASS,
            context_radius: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub disparity_threshold: f64,
    pub dimensions: Vec<Dimension>,
    pub top_n: usize,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            disparity_threshold: DEFAULT_DISPARITY_THRESHOLD,
            dimensions: vec![Dimension::AgeBand, Dimension::Gender, Dimension::ImdBand, Dimension::ImdDecile],
            top_n: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub enabled: bool,
    /// Endpoint URL; falls back to `NEEDGRAPH_LLM_URL`.
    pub url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            url: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            cors_origin: None,
        }
    }
}

impl PipelineConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.registry);
        fix(&mut paths.feedback);
        fix(&mut paths.lexicon);
        fix(&mut paths.output_dir);
        for p in [&mut paths.ontology, &mut paths.stopwords, &mut paths.valence].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.paths;
        let required = [("registry", Some(&p.registry)), ("feedback", Some(&p.feedback)), ("lexicon", Some(&p.lexicon))];
        let optional = [("ontology", p.ontology.as_ref()), ("stopwords", p.stopwords.as_ref()), ("valence", p.valence.as_ref())];
        for (name, path) in required.into_iter().chain(optional) {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(PipelineError::Config(format!("{name} file `{}` does not exist", path.display())));
                }
            }
        }
        let t = &self.topic_model;
        if t.num_topics.is_some() && !t.candidates.is_empty() {
            return Err(PipelineError::Config(
                "topic_model: set either num_topics or candidates, not both".into(),
            ));
        }
        if !t.candidates.is_empty() {
            let mut ks = t.candidates.clone();
            ks.sort_unstable();
            ks.dedup();
            if ks.len() < 2 {
                return Err(PipelineError::Config("topic_model.candidates needs at least two distinct values".into()));
            }
        }
        self.topic_model
            .model_config(self.seed)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.ingest.max_doc_fraction > 0.0 && self.ingest.max_doc_fraction <= 1.0) {
            return Err(PipelineError::Config("ingest.max_doc_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.extraction.tau) {
            return Err(PipelineError::Config("extraction.tau must lie in [0, 1]".into()));
        }
        if !(self.analytics.disparity_threshold >= 1.0) {
            return Err(PipelineError::Config("analytics.disparity_threshold must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn without_llm(mut self) -> Self {
        self.llm.enabled = false;
        self
    }

    /// Endpoint the LLM client should use, if enabled and configured.
    pub fn llm_url(&self) -> Option<String> {
        if !self.llm.enabled {
            return None;
        }
        self.llm
            .url
            .clone()
            .or_else(|| std::env::var(crate::needs::llm::URL_ENV).ok())
            .filter(|u| !u.trim().is_empty())
    }

    pub fn vocabulary(&self) -> VocabularyConfig {
        VocabularyConfig {
            min_doc_freq: self.ingest.min_doc_freq,
            max_doc_fraction: self.ingest.max_doc_fraction,
        }
    }

    /// Settings that shape artifacts. Paths and server settings are left
    /// out; input files are covered by their digests.
    pub fn effective(&self) -> serde_json::Value {
        json!({
            "seed": self.seed,
            "ingest": self.ingest,
            "topic_model": self.topic_model,
            "extraction": self.extraction,
            "analytics": self.analytics,
            "llm": {"url": self.llm_url(), "timeout_secs": self.llm.timeout_secs},
        })
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_vec(&self.effective()).expect("config serializes"))
    }
}
