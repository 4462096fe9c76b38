//! Need extraction: rule-based recognition from topic mixtures, expert
//! labeling, and alignment of needs to behaviour-science ontology concepts.

mod align;
mod audit;
mod automap;
mod extract;
mod lexicon;
pub mod llm;
mod ontology;
mod recognize;

pub use align::{align_moa, jaccard, label_tokens, AlignSource, Alignment};
pub use audit::{AuditEntry, AuditLog};
pub use automap::{auto_map_topics, DEFAULT_MIN_KEYWORD_MASS};
pub use extract::{extract_documents, DocumentMixture, ExtractionSettings, WaveExtraction};
pub use lexicon::{
    apply_entry_edit, apply_expert_label, normalize_label, EntryEdit, LabelEdit, LexiconEntry, NeedKind, Origin, SeedLexicon, LEXICON_VERSION,
};
pub use ontology::{Ontology, OntologyLayer, OntologyNode, COMB_COMPONENTS, ONTOLOGY_VERSION};
pub use recognize::{recognize, recognize_needs, NeedTag, TagSource, DEFAULT_TAU};

use crate::graph::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum NeedsError {
    #[error("invalid ontology: {0}")]
    InvalidOntology(String),
    #[error("ontology is missing COM-B component `{0}`")]
    MissingCombComponent(String),
    #[error("ontology empty: no MoA concepts to align against")]
    OntologyEmpty,
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("need label must be non-empty")]
    EmptyLabel,
    #[error("unknown topic id {topic} (model has {num_topics} topics)")]
    UnknownTopic { topic: usize, num_topics: usize },
    #[error("unknown need `{0}`")]
    UnknownNeed(String),
    #[error("`{label}` is already a lexicon entry of kind {existing}")]
    KindMismatch { label: String, existing: NeedKind },
    #[error("document `{doc_id}` has a topic mixture of length {found}, expected {expected}")]
    MixtureMismatch { doc_id: String, found: usize, expected: usize },
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
