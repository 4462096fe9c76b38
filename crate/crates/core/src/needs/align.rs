use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::llm::{request_conforming, LlmClient, LlmOutcome, LlmRequest, LlmTask, NONE};
use super::{NeedsError, Ontology, OntologyLayer, SeedLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignSource {
    /// The entry already had a MoA concept.
    Retained,
    Llm,
    Fallback,
    /// Neither the LLM nor the overlap fallback found a concept.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub moa_concept: Option<String>,
    pub source: AlignSource,
}

/// Lowercase alphanumeric runs of `text`.
pub fn label_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn overlap_fallback(keywords: &BTreeSet<String>, ontology: &Ontology) -> Option<String> {
    let kw: BTreeSet<String> = keywords.iter().flat_map(|k| label_tokens(k)).collect();
    let mut best: Option<(&str, f64)> = None;
    for node in ontology.layer(OntologyLayer::MoaConcept) {
        let s = jaccard(&kw, &label_tokens(&node.label));
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((&node.id, s));
        }
    }
    best.map(|(id, _)| id.to_string())
}

fn llm_request(label: &str, keywords: &BTreeSet<String>, ontology: &Ontology, context: &str) -> LlmRequest {
    let candidates: Vec<_> = ontology
        .layer(OntologyLayer::MoaConcept)
        .map(|n| json!({"id": n.id, "label": n.label}))
        .collect();
    LlmRequest {
        task: LlmTask::AlignMoa,
        context: context.to_string(),
        payload: json!({
            "instruction": "Pick the single most relevant mechanism-of-action concept for this need. \
                            Answer with one candidate id, or NONE if none applies.",
            "need": label,
            "keywords": keywords,
            "candidates": candidates,
        })
        .to_string(),
        schema: json!({
            "type": "object",
            "properties": {"node_id": {"type": "string"}},
            "required": ["node_id"]
        }),
    }
}

/// `Some(Some(id))` for an acceptable concept, `Some(None)` for an explicit NONE.
fn parse_alignment(resp: &super::llm::LlmResponse, ontology: &Ontology) -> Option<Option<String>> {
    let raw = match resp.structured_or_content() {
        Some(v) => v.get("node_id")?.as_str()?.trim().to_string(),
        None => resp.content.trim().to_string(),
    };
    if raw == NONE {
        return Some(None);
    }
    match ontology.get(&raw) {
        Some(n) if n.layer == OntologyLayer::MoaConcept => Some(Some(raw)),
        _ => None,
    }
}

/// Finds the MoA concept for `label`, recording a new mapping in the lexicon.
///
/// A resolved entry is returned as is. Otherwise the LLM (if any) is asked
/// first; on NONE or failure the keyword/label Jaccard fallback picks the
/// best concept, ties to the smallest id, leaving the entry unresolved when
/// nothing overlaps.
pub fn align_moa(
    label: &str,
    lexicon: &mut SeedLexicon,
    ontology: &Ontology,
    llm: Option<&dyn LlmClient>,
    context: &str,
) -> Result<Alignment, NeedsError> {
    let entry = lexicon.get(label).ok_or_else(|| NeedsError::UnknownNeed(label.to_string()))?;
    if let Some(m) = &entry.moa_concept {
        return Ok(Alignment {
            moa_concept: Some(m.clone()),
            source: AlignSource::Retained,
        });
    }
    if ontology.layer(OntologyLayer::MoaConcept).next().is_none() {
        return Err(NeedsError::OntologyEmpty);
    }
    let keywords = entry.keywords.clone();

    if let Some(client) = llm {
        let req = llm_request(label, &keywords, ontology, context);
        match request_conforming(client, &req, |r| parse_alignment(r, ontology)) {
            LlmOutcome::Accepted(Some(id)) => {
                let id = lexicon.resolve_moa(label, &id)?;
                return Ok(Alignment {
                    moa_concept: Some(id),
                    source: AlignSource::Llm,
                });
            }
            LlmOutcome::Accepted(None) | LlmOutcome::None => {}
            LlmOutcome::Unavailable(e) => log::warn!("align_moa `{label}` falls back: {e}"),
        }
    }

    match overlap_fallback(&keywords, ontology) {
        Some(id) => {
            let id = lexicon.resolve_moa(label, &id)?;
            Ok(Alignment {
                moa_concept: Some(id),
                source: AlignSource::Fallback,
            })
        }
        None => Ok(Alignment {
            moa_concept: None,
            source: AlignSource::Unresolved,
        }),
    }
}
