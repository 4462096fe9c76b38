use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::graph::{context_for, NeedGraph};
use crate::ingest::FeedbackDocument;
use crate::needs::llm::{request_conforming, LlmClient, LlmOutcome, LlmRequest, LlmResponse, LlmTask};
use crate::needs::{NeedKind, SeedLexicon, TagSource};
use crate::wave::Wave;

const TIE_EPS: f64 = 1e-12;

/// Per-document need scores; `top == None` marks an UNMAPPED document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedScores {
    pub doc_id: String,
    pub user_id: String,
    pub wave: Wave,
    /// Normalized to sum 1, or all zero for UNMAPPED documents.
    pub scores: BTreeMap<String, f64>,
    pub top: Option<String>,
    pub source: TagSource,
    /// The LLM was configured but the keyword fallback had to be used.
    pub degraded: bool,
}

/// `|tokens ∩ keywords(n)| / max(1, |keywords(n)|)` for every need entry.
pub fn fallback_scores(tokens: &[String], lexicon: &SeedLexicon) -> BTreeMap<String, f64> {
    let set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
    lexicon
        .of_kind(NeedKind::Need)
        .map(|(label, e)| {
            let hits = e.keywords.iter().filter(|k| set.contains(k.as_str())).count();
            (label.clone(), hits as f64 / e.keywords.len().max(1) as f64)
        })
        .collect()
}

/// Scales scores to sum 1; `None` if every score is zero.
pub fn normalize(raw: &BTreeMap<String, f64>) -> Option<BTreeMap<String, f64>> {
    let total: f64 = raw.values().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    Some(raw.iter().map(|(k, v)| (k.clone(), v / total)).collect())
}

/// Highest score, ties within 1e-12 to the smallest label.
pub fn argmax(scores: &BTreeMap<String, f64>) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (label, &s) in scores {
        if s > 0.0 && best.is_none_or(|(_, b)| s > b + TIE_EPS) {
            best = Some((label, s));
        }
    }
    best.map(|(l, _)| l)
}

fn parse_llm_scores(resp: &LlmResponse, candidates: &[&String]) -> Option<BTreeMap<String, f64>> {
    let v = resp.structured_or_content()?;
    let obj = v.get("scores")?.as_object()?;
    let mut raw = BTreeMap::new();
    for (k, val) in obj {
        if !candidates.iter().any(|c| *c == k) {
            return None;
        }
        let x = val.as_f64()?;
        if !x.is_finite() || x < 0.0 {
            return None;
        }
        raw.insert(k.clone(), x);
    }
    for c in candidates {
        raw.entry((*c).clone()).or_insert(0.0);
    }
    normalize(&raw)
}

/// Scores one document against every need in the lexicon.
///
/// With an LLM the response must be a non-negative score per candidate
/// need; anything else falls back to keyword overlap and marks the result
/// degraded.
pub fn score_needs(
    doc: &FeedbackDocument,
    context: &str,
    lexicon: &SeedLexicon,
    llm: Option<&dyn LlmClient>,
) -> NeedScores {
    let candidates: Vec<&String> = lexicon.of_kind(NeedKind::Need).map(|(l, _)| l).collect();
    let mut degraded = false;
    if let (Some(client), false) = (llm, doc.tokens.is_empty()) {
        let req = LlmRequest {
            task: LlmTask::ScoreNeeds,
            context: context.to_string(),
            payload: json!({
                "instruction": "Score how strongly the text expresses each candidate need. \
                                Return a non-negative score per need.",
                "text": doc.clean_text,
                "needs": candidates,
            })
            .to_string(),
            schema: json!({
                "type": "object",
                "properties": {"scores": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}}},
                "required": ["scores"]
            }),
        };
        match request_conforming(client, &req, |r| parse_llm_scores(r, &candidates)) {
            LlmOutcome::Accepted(scores) => {
                let top = argmax(&scores).map(str::to_string);
                return NeedScores {
                    doc_id: doc.doc_id.clone(),
                    user_id: doc.user_id.clone(),
                    wave: doc.wave,
                    scores,
                    top,
                    source: TagSource::Llm,
                    degraded: false,
                };
            }
            LlmOutcome::None => degraded = true,
            LlmOutcome::Unavailable(e) => {
                log::warn!("score_needs `{}` falls back: {e}", doc.doc_id);
                degraded = true;
            }
        }
    }

    let raw = fallback_scores(&doc.tokens, lexicon);
    let (scores, top) = match normalize(&raw) {
        Some(s) => {
            let top = argmax(&s).map(str::to_string);
            (s, top)
        }
        None => (raw, None),
    };
    NeedScores {
        doc_id: doc.doc_id.clone(),
        user_id: doc.user_id.clone(),
        wave: doc.wave,
        scores,
        top,
        source: TagSource::Rule,
        degraded,
    }
}

/// Scores many documents in parallel; results come back in doc_id order.
/// The graph supplies each candidate need's neighbourhood as LLM context.
pub fn score_documents(
    docs: &[&FeedbackDocument],
    lexicon: &SeedLexicon,
    graph: &NeedGraph,
    llm: Option<&dyn LlmClient>,
) -> Vec<NeedScores> {
    let context = if llm.is_some() {
        lexicon
            .of_kind(NeedKind::Need)
            .filter_map(|(l, _)| context_for(graph, l, 1).ok())
            .flatten()
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        String::new()
    };
    let mut out: Vec<NeedScores> = docs
        .par_iter()
        .map(|d| score_needs(d, &context, lexicon, llm))
        .collect();
    out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    out
}
