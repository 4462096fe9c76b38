//! On-disk artifact formats written by the pipeline stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::{CountTable, NeedScores, PrevalenceSeries, SentimentPoint, SentimentSummary, StratifiedPrevalence};
use crate::graph::GraphDelta;
use crate::needs::{Alignment, NeedTag};
use crate::topics::{PerplexityReport, TracePoint};
use crate::wave::Wave;

pub const CORPUS: &str = "corpus.json";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const MODEL: &str = "model.json";
pub const TOPICS: &str = "topics.json";
pub const PERPLEXITY: &str = "perplexity.json";
pub const LEXICON: &str = "lexicon.json";
pub const TAGS: &str = "tags.json";
pub const GRAPH: &str = "graph.json";
pub const DELTAS: &str = "deltas.json";
pub const SCORES: &str = "scores.json";
pub const PREVALENCE: &str = "prevalence.json";
pub const STRATA: &str = "strata.json";
pub const SENTIMENT: &str = "sentiment.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const DASHBOARD: &str = "dashboard.json";
pub const GRAPH_DOT: &str = "graph.dot";
/// Expert-curated lexicon; preferred over the seed lexicon when present.
pub const LABELS: &str = "labels.json";
pub const AUDIT: &str = "audit.jsonl";

pub const TOPICS_VERSION: &str = "topics/1";
pub const PERPLEXITY_VERSION: &str = "perplexity/1";
pub const TAGS_VERSION: &str = "tags/1";
pub const DELTAS_VERSION: &str = "deltas/1";
pub const SCORES_VERSION: &str = "scores/1";
pub const PREVALENCE_VERSION: &str = "prevalence/1";
pub const STRATA_VERSION: &str = "strata/1";
pub const SENTIMENT_VERSION: &str = "sentiment/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeDoc {
    pub doc_id: String,
    pub wave: Wave,
    pub weight: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: usize,
    pub top_terms: Vec<TermWeight>,
    pub representative_docs: Vec<RepresentativeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsArtifact {
    pub version: String,
    pub num_topics: usize,
    pub topics: Vec<TopicSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityArtifact {
    pub version: String,
    pub num_topics: usize,
    /// Present when K was chosen among candidates.
    pub selection: Option<PerplexityReport>,
    pub training_trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveTags {
    pub wave: Wave,
    pub tags: Vec<NeedTag>,
    pub obstacle_tags: Vec<NeedTag>,
    pub alignments: BTreeMap<String, Alignment>,
    pub unassigned_obstacles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagsArtifact {
    pub version: String,
    /// Topics mapped to needs by keyword mass before extraction.
    pub auto_mapped: Vec<(usize, String)>,
    pub waves: Vec<WaveTags>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltasArtifact {
    pub version: String,
    pub deltas: Vec<GraphDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresArtifact {
    pub version: String,
    pub documents: Vec<NeedScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceArtifact {
    pub version: String,
    pub needs: Vec<String>,
    pub table: CountTable,
    /// Per-wave prevalence vectors; waves without mapped documents are absent.
    pub by_wave: BTreeMap<Wave, BTreeMap<String, f64>>,
    pub series: Vec<PrevalenceSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataArtifact {
    pub version: String,
    pub strata: Vec<StratifiedPrevalence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentArtifact {
    pub version: String,
    pub points: Vec<SentimentPoint>,
    pub trajectory: Vec<SentimentSummary>,
}
