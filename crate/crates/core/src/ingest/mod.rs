//! Dual-stream ingestion: the demographic registry and the free-text feedback
//! stream are normalized into one wave-stamped [`Corpus`].

mod clean;
mod corpus;
mod registry;

pub use clean::{
    clean_and_tokenize, clean_and_tokenize_with, is_mostly_latin, parse_word_list, segment_sentences,
    shipped_stopwords, CleanedText, CleaningConfig, Tokenizer, UnicodeWordTokenizer,
};
pub use corpus::{
    link_and_stamp, link_and_stamp_with, Corpus, DocumentReport, FeedbackDocument, TermSequence, Vocabulary,
    VocabularyConfig,
};
pub use registry::{
    band_age, ingest_registry, AgeBand, DemographicRecord, Gender, ImdBand, Registry, RegistryReport, RowIssue,
    MAX_AGE, MIN_AGE,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("zero usable records")]
    NoUsableRecords,
    #[error("feedback stream contains no documents")]
    NoDocuments,
    #[error("registry is missing required column `{0}`")]
    MissingColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("age {age} outside the supported range 18..=120")]
    AgeOutOfRange { age: u32 },
    #[error("document references unknown user `{0}`")]
    UnknownUser(String),
    #[error("{dropped} of {total} feedback rows dropped; registry and feedback stream do not match")]
    StreamMismatch { dropped: usize, total: usize },
}

/// Combined counts emitted by an ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub registry: RegistryReport,
    pub documents: DocumentReport,
}

/// Ingests both streams in one pass; the source-id mapping never leaves this call.
pub fn ingest(
    registry_csv: &[u8],
    feedback_jsonl: &[u8],
    cleaning: &CleaningConfig,
    vocab_cfg: &VocabularyConfig,
) -> Result<(Corpus, IngestReport), IngestError> {
    let (registry, registry_report) = ingest_registry(registry_csv)?;
    let (corpus, doc_report) = link_and_stamp(feedback_jsonl, registry, cleaning, vocab_cfg)?;
    Ok((
        corpus,
        IngestReport {
            registry: registry_report,
            documents: doc_report,
        },
    ))
}
