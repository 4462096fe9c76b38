//! Staged batch pipeline: ingest, train, extract, analyze, report.
//!
//! Every stage reads its inputs from the output directory, checks them
//! against the run manifest and writes versioned artifacts next to them.

pub mod artifacts;
mod config;
pub mod demo;
mod manifest;

pub use config::{
    AnalyticsConfig, ExtractionConfig, IngestConfig, LlmConfig, PathsConfig, PipelineConfig, ServerConfig,
    TopicSection, DEFAULT_NUM_TOPICS,
};
pub use manifest::{RunManifest, StageRecord, MANIFEST_FILE, MANIFEST_VERSION};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytics::{
    build_report, count_needs, dashboard, prevalence, prevalence_series, render_markdown, score_documents,
    sentiment_trajectory, sentiment_with, stratified_prevalence, AnalyticsError, RemoteSentiment, ReportConfig,
    ReportInputs, SentimentScorer, ValenceLexicon,
};
use crate::digest::sha256_hex;
use crate::graph::{to_dot, GraphError, NeedGraph};
use crate::ingest::{ingest, parse_word_list, CleaningConfig, Corpus, IngestError};
use crate::needs::llm::{HttpLlmClient, LlmClient, KEY_ENV};
use crate::needs::{auto_map_topics, extract_documents, DocumentMixture, ExtractionSettings, NeedKind, NeedsError, Ontology, SeedLexicon};
use crate::topics::{fit_corpus, representative_rows, select_k, top_terms, ModelCheckpoint, TopicError};
use crate::wave::Wave;
use artifacts::*;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{} artifacts missing: run `needgraph {}` first", stage.description(), stage.command())]
    MissingArtifacts { stage: Stage },
    #[error("stale {} artifacts ({reason}): run `needgraph {}` first", stage.description(), stage.command())]
    StaleArtifacts { stage: Stage, reason: String },
    #[error("{}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Needs(#[from] NeedsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn corrupt(path: &Path, message: impl fmt::Display) -> Self {
        PipelineError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::MissingArtifacts { .. } => "missing_artifacts",
            PipelineError::StaleArtifacts { .. } => "stale_artifacts",
            PipelineError::Corrupt { .. } => "corrupt_artifact",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Topic(_) => "topic_model",
            PipelineError::Needs(_) => "needs",
            PipelineError::Graph(_) => "graph",
            PipelineError::Analytics(_) => "analytics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Train,
    Extract,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Train, Stage::Extract, Stage::Analyze, Stage::Report];

    pub fn command(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Extract => "extract",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Stage::Ingest => "ingestion",
            Stage::Train => "topic model",
            Stage::Extract => "needs extraction",
            Stage::Analyze => "analytics",
            Stage::Report => "report",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[CORPUS, INGEST_REPORT],
            Stage::Train => &[MODEL, TOPICS, PERPLEXITY],
            Stage::Extract => &[LEXICON, TAGS, GRAPH, DELTAS],
            Stage::Analyze => &[SCORES, PREVALENCE, STRATA, SENTIMENT],
            Stage::Report => &[REPORT_JSON, REPORT_MD, DASHBOARD, GRAPH_DOT],
        }
    }

    fn upstream(self) -> &'static [Stage] {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("stage listed");
        &Stage::ALL[..i]
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub duration_ms: u64,
    pub outputs: BTreeMap<String, String>,
}

/// Pretty JSON with a trailing newline, written through a temporary file so
/// readers never see a partial artifact.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!("{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| PipelineError::io(path, e))
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(read_bytes(path)?))
}

/// Parses a JSON artifact of `output_dir`.
pub fn load_artifact<T: DeserializeOwned>(output_dir: &Path, name: &str) -> Result<T, PipelineError> {
    let path = output_dir.join(name);
    let bytes = read_bytes(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::corrupt(&path, e))
}

fn check_version(name: &str, found: &str, expected: &str) -> Result<(), PipelineError> {
    if found != expected {
        return Err(PipelineError::Corrupt {
            path: PathBuf::from(name),
            message: format!("unsupported version `{found}`, expected `{expected}`"),
        });
    }
    Ok(())
}

/// Collects the digests of the artifacts a stage writes.
struct Outputs<'a> {
    dir: &'a Path,
    digests: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            digests: BTreeMap::new(),
        }
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.raw(name, text.as_bytes())
    }

    fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

/// Runs stages against one configuration.
pub struct Pipeline {
    config: PipelineConfig,
    llm: Option<Arc<dyn LlmClient>>,
}

impl Pipeline {
    /// Builds the HTTP LLM client when the configuration enables one.
    pub fn new(config: PipelineConfig) -> Self {
        let llm = config.llm_url().map(|url| {
            let key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
            Arc::new(HttpLlmClient::new(url, key, Duration::from_secs(config.llm.timeout_secs))) as Arc<dyn LlmClient>
        });
        Self { config, llm }
    }

    pub fn with_llm(config: PipelineConfig, llm: Option<Arc<dyn LlmClient>>) -> Self {
        Self { config, llm }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.paths.output_dir
    }

    pub fn llm(&self) -> Option<&dyn LlmClient> {
        self.llm.as_deref()
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Train => self.train(),
            Stage::Extract => self.extract(),
            Stage::Analyze => self.analyze(),
            Stage::Report => self.report(),
        }
    }

    pub fn run_all(&self) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    pub fn run_from(&self, first: Stage) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::ALL.iter().filter(|&&s| s >= first).map(|&s| self.run(s)).collect()
    }

    pub fn manifest(&self) -> Result<Option<RunManifest>, PipelineError> {
        RunManifest::load(self.output_dir())
    }

    /// Hash of the settings that influence `stage` and everything upstream of it.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let c = &self.config;
        let eff = c.effective();
        let mut parts = serde_json::Map::new();
        parts.insert("ingest".into(), eff["ingest"].clone());
        if stage >= Stage::Train {
            parts.insert("seed".into(), eff["seed"].clone());
            parts.insert("topic_model".into(), eff["topic_model"].clone());
        }
        if stage >= Stage::Extract {
            parts.insert("extraction".into(), eff["extraction"].clone());
            parts.insert("llm".into(), eff["llm"].clone());
        }
        if stage >= Stage::Analyze {
            parts.insert("dimensions".into(), json!(c.analytics.dimensions));
        }
        if stage >= Stage::Report {
            parts.insert("analytics".into(), eff["analytics"].clone());
        }
        sha256_hex(serde_json::to_vec(&parts).expect("config serializes"))
    }

    fn external(&self, name: &str) -> Option<PathBuf> {
        let p = &self.config.paths;
        match name {
            "registry" => Some(p.registry.clone()),
            "feedback" => Some(p.feedback.clone()),
            "lexicon" => Some(p.lexicon.clone()),
            "ontology" => p.ontology.clone(),
            "stopwords" => p.stopwords.clone(),
            "valence" => p.valence.clone(),
            _ => None,
        }
    }

    /// Names of the files a stage reads: external inputs by role, artifacts by file name.
    fn stage_input_names(&self, stage: Stage) -> Vec<&'static str> {
        let p = &self.config.paths;
        let mut names = Vec::new();
        match stage {
            Stage::Ingest => {
                names.extend(["registry", "feedback"]);
                if p.stopwords.is_some() {
                    names.push("stopwords");
                }
            }
            Stage::Train => names.push(CORPUS),
            Stage::Extract => {
                names.extend([CORPUS, MODEL]);
                names.push(if self.output_dir().join(LABELS).is_file() { LABELS } else { "lexicon" });
                if p.ontology.is_some() {
                    names.push("ontology");
                }
            }
            Stage::Analyze => {
                names.extend([CORPUS, LEXICON, GRAPH]);
                if p.valence.is_some() {
                    names.push("valence");
                }
            }
            Stage::Report => names.extend([SCORES, PREVALENCE, STRATA, SENTIMENT, GRAPH]),
        }
        names
    }

    fn input_path(&self, name: &str) -> PathBuf {
        self.external(name).unwrap_or_else(|| self.output_dir().join(name))
    }

    fn current_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        self.stage_input_names(stage)
            .into_iter()
            .map(|n| Ok((n.to_string(), file_digest(&self.input_path(n))?)))
            .collect()
    }

    /// Checks that every upstream stage has current artifacts.
    pub fn verify_upstream(&self, stage: Stage) -> Result<(), PipelineError> {
        let manifest = self.manifest()?;
        for &up in stage.upstream() {
            if up.outputs().iter().any(|o| !self.output_dir().join(o).is_file()) {
                return Err(PipelineError::MissingArtifacts { stage: up });
            }
            let stale = |reason: &str| PipelineError::StaleArtifacts {
                stage: up,
                reason: reason.to_string(),
            };
            let record = manifest
                .as_ref()
                .and_then(|m| m.stages.get(up.command()))
                .ok_or_else(|| stale("not recorded in the run manifest"))?;
            if record.config_hash != self.stage_hash(up) {
                return Err(stale("configuration changed"));
            }
            for (name, digest) in &record.outputs {
                if &file_digest(&self.output_dir().join(name))? != digest {
                    return Err(stale(&format!("`{name}` was modified")));
                }
            }
            if self.current_inputs(up)? != record.inputs {
                return Err(stale("inputs changed"));
            }
        }
        Ok(())
    }

    fn finish(&self, stage: Stage, started: Instant, outputs: Outputs) -> Result<StageSummary, PipelineError> {
        let inputs = self.current_inputs(stage)?;
        let external: BTreeMap<String, String> = inputs
            .iter()
            .filter(|(k, _)| self.external(k).is_some())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let duration_ms = started.elapsed().as_millis() as u64;
        let record = StageRecord {
            config_hash: self.stage_hash(stage),
            duration_ms,
            inputs,
            outputs: outputs.digests.clone(),
        };
        let hash = self.config.hash();
        let mut manifest = self
            .manifest()?
            .unwrap_or_else(|| RunManifest::new(&hash, self.config.seed));
        manifest.record(stage.command(), record, &external, &hash, self.config.seed);
        manifest.save(self.output_dir())?;
        log::info!("{stage} finished in {duration_ms} ms");
        Ok(StageSummary {
            stage,
            duration_ms,
            outputs: outputs.digests,
        })
    }

    fn load_corpus(&self) -> Result<Corpus, PipelineError> {
        load_artifact(self.output_dir(), CORPUS)
    }

    pub fn load_ontology(&self) -> Result<Ontology, PipelineError> {
        match &self.config.paths.ontology {
            Some(p) => Ok(Ontology::from_json(&String::from_utf8_lossy(&read_bytes(p)?))?),
            None => Ok(Ontology::sample()),
        }
    }

    fn load_lexicon_file(path: &Path) -> Result<SeedLexicon, PipelineError> {
        let text = String::from_utf8(read_bytes(path)?).map_err(|e| PipelineError::corrupt(path, e))?;
        Ok(SeedLexicon::from_json(&text)?)
    }

    /// Lexicon the next extraction starts from: expert labels if any, else the seed.
    pub fn input_lexicon(&self) -> Result<SeedLexicon, PipelineError> {
        let labels = self.output_dir().join(LABELS);
        if labels.is_file() {
            Self::load_lexicon_file(&labels)
        } else {
            Self::load_lexicon_file(&self.config.paths.lexicon)
        }
    }

    fn valence(&self) -> Result<ValenceLexicon, PipelineError> {
        match &self.config.paths.valence {
            Some(p) => {
                let text = String::from_utf8_lossy(&read_bytes(p)?).into_owned();
                ValenceLexicon::parse(&text).map_err(|e| PipelineError::corrupt(p, e))
            }
            None => Ok(ValenceLexicon::shipped().clone()),
        }
    }

    pub fn ingest(&self) -> Result<StageSummary, PipelineError> {
        let started = Instant::now();
        let c = &self.config;
        let registry = read_bytes(&c.paths.registry)?;
        let feedback = read_bytes(&c.paths.feedback)?;
        let mut cleaning = CleaningConfig {
            boilerplate: c.ingest.boilerplate.clone(),
            require_latin_text: c.ingest.require_latin_text,
            ..CleaningConfig::default()
        };
        if let Some(p) = &c.paths.stopwords {
            cleaning.stopwords = parse_word_list(&String::from_utf8_lossy(&read_bytes(p)?));
        }
        let (corpus, report) = ingest(&registry, &feedback, &cleaning, &c.vocabulary())?;
        let mut out = Outputs::new(self.output_dir());
        out.json(CORPUS, &corpus)?;
        out.json(INGEST_REPORT, &report)?;
        self.finish(Stage::Ingest, started, out)
    }

    pub fn train(&self) -> Result<StageSummary, PipelineError> {
        self.verify_upstream(Stage::Train)?;
        let started = Instant::now();
        let corpus = self.load_corpus()?;
        let t = &self.config.topic_model;
        let mut cfg = t.model_config(self.config.seed);
        let selection = if t.candidates.is_empty() {
            None
        } else {
            let report = select_k(&corpus.term_sequences(), corpus.vocabulary.terms(), &t.candidates, &cfg)?;
            cfg.num_topics = report.selected_k;
            Some(report)
        };
        let model = fit_corpus(&corpus, &cfg)?;

        let k = model.num_topics();
        let mut topics = Vec::with_capacity(k);
        for topic in 0..k {
            let top = top_terms(&model, topic, 10)?;
            let reps = representative_rows(&model, topic, 5)?;
            topics.push(TopicSummary {
                topic_id: topic,
                top_terms: top.into_iter().map(|(term, weight)| TermWeight { term, weight }).collect(),
                representative_docs: reps
                    .into_iter()
                    .map(|(row, weight)| {
                        let doc = &corpus.documents[corpus.doc_term[row].doc];
                        RepresentativeDoc {
                            doc_id: doc.doc_id.clone(),
                            wave: doc.wave,
                            weight,
                            text: doc.raw_text.clone(),
                        }
                    })
                    .collect(),
            });
        }

        let mut out = Outputs::new(self.output_dir());
        out.json(MODEL, &model.to_checkpoint())?;
        out.json(
            TOPICS,
            &TopicsArtifact {
                version: TOPICS_VERSION.into(),
                num_topics: k,
                topics,
            },
        )?;
        out.json(
            PERPLEXITY,
            &PerplexityArtifact {
                version: PERPLEXITY_VERSION.into(),
                num_topics: k,
                selection,
                training_trace: model.trace.clone(),
            },
        )?;
        self.finish(Stage::Train, started, out)
    }

    /// Tags every wave in order, growing the graph one delta at a time from
    /// the ontology scaffold.
    pub fn extract(&self) -> Result<StageSummary, PipelineError> {
        self.verify_upstream(Stage::Extract)?;
        let started = Instant::now();
        let corpus = self.load_corpus()?;
        let ckpt: ModelCheckpoint = load_artifact(self.output_dir(), MODEL)?;
        let k = ckpt.num_topics;
        let ontology = self.load_ontology()?;
        let mut lexicon = self.input_lexicon()?;

        let phi: Vec<Vec<f64>> = ckpt.phi.chunks(ckpt.vocab_size.max(1)).map(<[f64]>::to_vec).collect();
        let auto_mapped = auto_map_topics(
            &mut lexicon,
            &phi,
            corpus.vocabulary.terms(),
            self.config.extraction.min_keyword_mass,
        );

        let rows = corpus.doc_term_rows();
        let settings = ExtractionSettings {
            tau: self.config.extraction.tau,
            num_topics: k,
            context_radius: self.config.extraction.context_radius,
        };
        let last = corpus.documents.iter().map(|d| d.wave).max();
        let mut graph = NeedGraph::init_scaffold(&ontology)?;
        let mut waves = Vec::new();
        let mut deltas = Vec::new();
        for wave in Wave::ALL.into_iter().filter(|w| Some(*w) <= last) {
            let mixtures: Vec<DocumentMixture> = corpus
                .wave_documents(wave)
                .map(|(i, doc)| DocumentMixture {
                    doc,
                    theta: rows.get(&i).map(|&r| &ckpt.theta[r * k..(r + 1) * k]),
                })
                .collect();
            let ex = extract_documents(wave, &mixtures, &lexicon, &ontology, self.llm(), &graph, &settings)?;
            graph = graph.apply_delta(&ex.delta)?;
            lexicon = ex.lexicon;
            deltas.push(ex.delta);
            waves.push(WaveTags {
                wave,
                tags: ex.tags,
                obstacle_tags: ex.obstacle_tags,
                alignments: ex.alignments,
                unassigned_obstacles: ex.unassigned_obstacles,
            });
        }

        let mut out = Outputs::new(self.output_dir());
        out.raw(LEXICON, lexicon.to_json().as_bytes())?;
        out.json(
            TAGS,
            &TagsArtifact {
                version: TAGS_VERSION.into(),
                auto_mapped,
                waves,
            },
        )?;
        out.raw(GRAPH, graph.to_canonical_json().as_bytes())?;
        out.json(
            DELTAS,
            &DeltasArtifact {
                version: DELTAS_VERSION.into(),
                deltas,
            },
        )?;
        self.finish(Stage::Extract, started, out)
    }

    pub fn analyze(&self) -> Result<StageSummary, PipelineError> {
        self.verify_upstream(Stage::Analyze)?;
        let started = Instant::now();
        let corpus = self.load_corpus()?;
        let lexicon = Self::load_lexicon_file(&self.output_dir().join(LEXICON))?;
        let graph = self.load_graph()?;

        let docs: Vec<_> = corpus.documents.iter().collect();
        let scored = score_documents(&docs, &lexicon, &graph, self.llm());
        let needs: Vec<String> = lexicon.of_kind(NeedKind::Need).map(|(l, _)| l.clone()).collect();
        let table = count_needs(&scored, &needs);
        let waves: BTreeSet<Wave> = scored.iter().map(|s| s.wave).collect();
        let by_wave = waves
            .iter()
            .filter_map(|&w| prevalence(&table.counts, w).ok().map(|p| (w, p)))
            .collect();
        let series = prevalence_series(&table.counts);

        let mut strata = Vec::new();
        for &dim in &self.config.analytics.dimensions {
            for &w in &waves {
                strata.push(stratified_prevalence(&scored, &corpus.registry, &needs, dim, w)?);
            }
        }

        let valence = self.valence()?;
        let remote;
        let scorer: &dyn SentimentScorer = match self.llm() {
            Some(client) => {
                remote = RemoteSentiment {
                    client,
                    fallback: &valence,
                };
                &remote
            }
            None => &valence,
        };
        let points: Vec<_> = docs.par_iter().map(|d| sentiment_with(scorer, d)).collect();
        let trajectory = sentiment_trajectory(&points);

        let mut out = Outputs::new(self.output_dir());
        out.json(
            SCORES,
            &ScoresArtifact {
                version: SCORES_VERSION.into(),
                documents: scored,
            },
        )?;
        out.json(
            PREVALENCE,
            &PrevalenceArtifact {
                version: PREVALENCE_VERSION.into(),
                needs,
                table,
                by_wave,
                series,
            },
        )?;
        out.json(
            STRATA,
            &StrataArtifact {
                version: STRATA_VERSION.into(),
                strata,
            },
        )?;
        out.json(
            SENTIMENT,
            &SentimentArtifact {
                version: SENTIMENT_VERSION.into(),
                points,
                trajectory,
            },
        )?;
        self.finish(Stage::Analyze, started, out)
    }

    pub fn report(&self) -> Result<StageSummary, PipelineError> {
        self.verify_upstream(Stage::Report)?;
        let started = Instant::now();
        let dir = self.output_dir();
        let scores: ScoresArtifact = load_artifact(dir, SCORES)?;
        let prev: PrevalenceArtifact = load_artifact(dir, PREVALENCE)?;
        let strata: StrataArtifact = load_artifact(dir, STRATA)?;
        let sentiment: SentimentArtifact = load_artifact(dir, SENTIMENT)?;
        check_version(SCORES, &scores.version, SCORES_VERSION)?;
        check_version(PREVALENCE, &prev.version, PREVALENCE_VERSION)?;
        check_version(STRATA, &strata.version, STRATA_VERSION)?;
        check_version(SENTIMENT, &sentiment.version, SENTIMENT_VERSION)?;
        let graph = self.load_graph()?;

        let inputs = ReportInputs {
            counts: &prev.table,
            strata: &strata.strata,
            sentiment: &sentiment.trajectory,
            graph: &graph,
            degraded_scores: scores.documents.iter().filter(|s| s.degraded).count(),
        };
        let config = ReportConfig {
            disparity_threshold: self.config.analytics.disparity_threshold,
            top_n: self.config.analytics.top_n,
        };
        let report = build_report(&inputs, &config, self.llm())?;
        let dash = dashboard(&inputs, &report);

        let mut out = Outputs::new(dir);
        out.json(REPORT_JSON, &report)?;
        out.raw(REPORT_MD, render_markdown(&report).as_bytes())?;
        out.json(DASHBOARD, &dash)?;
        out.raw(GRAPH_DOT, to_dot(&graph).as_bytes())?;
        self.finish(Stage::Report, started, out)
    }

    pub fn load_graph(&self) -> Result<NeedGraph, PipelineError> {
        let path = self.output_dir().join(GRAPH);
        let text = String::from_utf8(read_bytes(&path)?).map_err(|e| PipelineError::corrupt(&path, e))?;
        Ok(NeedGraph::from_json(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_messages_name_the_command() {
        let e = PipelineError::MissingArtifacts { stage: Stage::Extract };
        assert_eq!(e.to_string(), "needs extraction artifacts missing: run `needgraph extract` first");
        assert_eq!(e.code(), "missing_artifacts");
        let e = PipelineError::StaleArtifacts {
            stage: Stage::Train,
            reason: "configuration changed".into(),
        };
        assert!(e.to_string().starts_with("stale topic model artifacts"));
    }

    #[test]
    fn upstream_order() {
        assert!(Stage::Ingest.upstream().is_empty());
        assert_eq!(Stage::Analyze.upstream(), &[Stage::Ingest, Stage::Train, Stage::Extract]);
    }
}
