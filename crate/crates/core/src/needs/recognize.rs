use serde::{Deserialize, Serialize};

use super::{NeedKind, SeedLexicon};
use crate::wave::Wave;

/// Minimum summed mixture weight for a tag.
pub const DEFAULT_TAU: f64 = 0.25;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    Rule,
    Llm,
    Expert,
}

/// A single-label pseudo-tag. `need == None` is UNMAPPED; the score then
/// holds the best rejected candidate score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedTag {
    pub doc_id: String,
    pub need: Option<String>,
    pub score: f64,
    pub source: TagSource,
    pub wave: Wave,
}

impl NeedTag {
    pub fn is_mapped(&self) -> bool {
        self.need.is_some()
    }
}

/// Scores every entry of `kind` by the summed mixture weight of its topics
/// and tags the best one if it reaches `tau`. Ties within 1e-12 go to the
/// lexicographically smallest label.
pub fn recognize(
    doc_id: &str,
    wave: Wave,
    theta: &[f64],
    lexicon: &SeedLexicon,
    kind: NeedKind,
    tau: f64,
) -> NeedTag {
    let mut best: Option<(&str, f64)> = None;
    for (label, entry) in lexicon.of_kind(kind) {
        if entry.topic_ids.is_empty() {
            continue;
        }
        let score: f64 = entry
            .topic_ids
            .iter()
            .map(|&k| theta.get(k).copied().unwrap_or(0.0))
            .sum();
        let score = score.clamp(0.0, 1.0);
        // Labels arrive in ascending order, so only a strictly larger score displaces.
        if best.is_none_or(|(_, b)| score > b + TIE_EPS) {
            best = Some((label, score));
        }
    }
    let (need, score) = match best {
        Some((label, s)) if s + TIE_EPS >= tau => (Some(label.to_string()), s),
        Some((_, s)) => (None, s),
        None => (None, 0.0),
    };
    NeedTag {
        doc_id: doc_id.to_string(),
        need,
        score,
        source: TagSource::Rule,
        wave,
    }
}

pub fn recognize_needs(doc_id: &str, wave: Wave, theta: &[f64], lexicon: &SeedLexicon, tau: f64) -> NeedTag {
    recognize(doc_id, wave, theta, lexicon, NeedKind::Need, tau)
}
