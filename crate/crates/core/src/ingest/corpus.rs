//! Feedback-stream linking and corpus construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::clean::{clean_and_tokenize_with, is_mostly_latin, CleaningConfig, Tokenizer, UnicodeWordTokenizer};
use super::registry::{DemographicRecord, Registry, RowIssue};
use super::IngestError;
use crate::wave::Wave;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackDocument {
    pub doc_id: String,
    pub user_id: String,
    pub wave: Wave,
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
    /// Set when no token survived cleaning and vocabulary filtering.
    #[serde(default)]
    pub empty: bool,
}

/// Document-frequency filter applied when building the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabularyConfig {
    pub min_doc_freq: usize,
    pub max_doc_fraction: f64,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self {
            min_doc_freq: 2,
            max_doc_fraction: 0.5,
        }
    }
}

/// Dense, sorted term list; ids are positions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { terms, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

impl Vocabulary {
    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Token-id sequence of one non-empty document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSequence {
    /// Index into `Corpus::documents`.
    pub doc: usize,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub registry: Registry,
    pub documents: Vec<FeedbackDocument>,
    pub vocabulary: Vocabulary,
    pub doc_term: Vec<TermSequence>,
}

impl Corpus {
    /// Builds the vocabulary and term sequences over already-cleaned documents.
    ///
    /// Every document must reference a user in `registry`.
    pub fn build(
        registry: Registry,
        mut documents: Vec<FeedbackDocument>,
        vocab_cfg: &VocabularyConfig,
    ) -> Result<Self, IngestError> {
        if let Some(doc) = documents.iter().find(|d| registry.get(&d.user_id).is_none()) {
            return Err(IngestError::UnknownUser(doc.user_id.clone()));
        }

        let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in &documents {
            let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in unique {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        let max_df = vocab_cfg.max_doc_fraction * documents.len() as f64;
        let terms: Vec<String> = doc_freq
            .into_iter()
            .filter(|&(_, df)| df >= vocab_cfg.min_doc_freq && df as f64 <= max_df)
            .map(|(t, _)| t.to_string())
            .collect();
        let vocabulary = Vocabulary::from(terms);

        let mut doc_term = Vec::new();
        for (i, doc) in documents.iter_mut().enumerate() {
            let ids: Vec<u32> = doc.tokens.iter().filter_map(|t| vocabulary.id(t)).collect();
            doc.empty = ids.is_empty();
            if !ids.is_empty() {
                doc_term.push(TermSequence { doc: i, ids });
            }
        }

        Ok(Self {
            registry,
            documents,
            vocabulary,
            doc_term,
        })
    }

    pub fn demographics(&self, doc: &FeedbackDocument) -> Option<&DemographicRecord> {
        self.registry.get(&doc.user_id)
    }

    /// Documents of one wave, in corpus order.
    pub fn wave_documents(&self, wave: Wave) -> impl Iterator<Item = (usize, &FeedbackDocument)> {
        self.documents
            .iter()
            .enumerate()
            .filter(move |(_, d)| d.wave == wave)
    }

    /// Token-id sequences in `doc_term` order.
    pub fn term_sequences(&self) -> Vec<Vec<u32>> {
        self.doc_term.iter().map(|s| s.ids.clone()).collect()
    }

    /// Map from document index to its row in `doc_term`.
    pub fn doc_term_rows(&self) -> HashMap<usize, usize> {
        self.doc_term
            .iter()
            .enumerate()
            .map(|(row, s)| (s.doc, row))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    pub dropped: BTreeMap<String, usize>,
    pub empty_documents: usize,
    pub generated_doc_ids: usize,
    pub vocabulary_size: usize,
    pub errors: Vec<RowIssue>,
}

impl DocumentReport {
    fn drop_row(&mut self, reason: &str, issue: Option<RowIssue>) {
        self.rows_dropped += 1;
        *self.dropped.entry(reason.to_string()).or_default() += 1;
        self.errors.extend(issue);
    }
}

#[derive(Debug, Deserialize)]
struct FeedbackLine {
    #[serde(default)]
    doc_id: Option<String>,
    user_id: String,
    wave: String,
    text: String,
}

/// Reasons that do not signal a registry/stream mismatch.
const FILTER_REASONS: [&str; 1] = ["non_latin_text"];

/// Cleans, links and wave-stamps a JSON-lines feedback stream against an ingested registry.
pub fn link_and_stamp(
    docs_bytes: &[u8],
    registry: Registry,
    cleaning: &CleaningConfig,
    vocab_cfg: &VocabularyConfig,
) -> Result<(Corpus, DocumentReport), IngestError> {
    link_and_stamp_with(docs_bytes, registry, cleaning, vocab_cfg, &UnicodeWordTokenizer)
}

pub fn link_and_stamp_with(
    docs_bytes: &[u8],
    registry: Registry,
    cleaning: &CleaningConfig,
    vocab_cfg: &VocabularyConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<(Corpus, DocumentReport), IngestError> {
    let text = std::str::from_utf8(docs_bytes).map_err(|e| IngestError::Encoding(e.to_string()))?;
    let mut report = DocumentReport::default();
    let mut documents = Vec::new();
    let mut seen_ids = HashSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.rows_in += 1;
        let row: FeedbackLine = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                report.drop_row("malformed", Some(RowIssue { row: line_no, message: e.to_string() }));
                continue;
            }
        };
        let wave: Wave = match row.wave.parse() {
            Ok(w) => w,
            Err(e) => {
                report.drop_row("unknown_wave", Some(RowIssue { row: line_no, message: e.to_string() }));
                continue;
            }
        };
        let Some(user_id) = registry.resolve_source_id(row.user_id.trim()) else {
            report.drop_row("unknown_user", None);
            continue;
        };
        if cleaning.require_latin_text && !is_mostly_latin(&row.text) {
            report.drop_row("non_latin_text", None);
            continue;
        }
        let doc_id = match row.doc_id.filter(|d| !d.trim().is_empty()) {
            Some(d) => d.trim().to_string(),
            None => {
                report.generated_doc_ids += 1;
                format!("doc-{line_no:06}")
            }
        };
        if !seen_ids.insert(doc_id.clone()) {
            report.drop_row(
                "duplicate_doc_id",
                Some(RowIssue { row: line_no, message: format!("duplicate doc_id `{doc_id}`") }),
            );
            continue;
        }

        let cleaned = clean_and_tokenize_with(&row.text, cleaning, tokenizer);
        documents.push(FeedbackDocument {
            doc_id,
            user_id: user_id.to_string(),
            wave,
            raw_text: row.text,
            clean_text: cleaned.clean_text,
            tokens: cleaned.tokens,
            sentences: cleaned.sentences,
            empty: false,
        });
    }

    if report.rows_in == 0 {
        return Err(IngestError::NoDocuments);
    }
    let mismatched: usize = report
        .dropped
        .iter()
        .filter(|(k, _)| !FILTER_REASONS.contains(&k.as_str()))
        .map(|(_, v)| v)
        .sum();
    if mismatched * 2 > report.rows_in {
        return Err(IngestError::StreamMismatch {
            dropped: mismatched,
            total: report.rows_in,
        });
    }

    report.rows_kept = documents.len();
    let corpus = Corpus::build(registry, documents, vocab_cfg)?;
    report.empty_documents = corpus.documents.iter().filter(|d| d.empty).count();
    report.vocabulary_size = corpus.vocabulary.len();
    Ok((corpus, report))
}
