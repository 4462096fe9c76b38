use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ingest::{FeedbackDocument, Tokenizer, UnicodeWordTokenizer};
use crate::needs::llm::{request_conforming, LlmClient, LlmOutcome, LlmRequest, LlmTask};
use crate::wave::Wave;

const SHIPPED_VALENCE: &str = include_str!("../../data/valence_en.tsv");

/// Class boundary: valence strictly beyond ±0.05 is positive or negative.
pub const CLASS_THRESHOLD: f64 = 0.05;
/// Number of preceding tokens searched for a negator.
pub const NEGATION_WINDOW: usize = 2;

const NEGATORS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "without", "cannot", "dont", "don",
    "doesnt", "doesn", "didnt", "didn", "isnt", "isn", "wasnt", "wasn", "arent", "aren", "werent", "weren",
    "wont", "couldnt", "couldn", "shouldnt", "shouldn", "wouldnt", "wouldn", "hardly",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentClass {
    Negative,
    Neutral,
    Positive,
}

impl SentimentClass {
    pub fn of(valence: f64) -> Self {
        if valence < -CLASS_THRESHOLD {
            SentimentClass::Negative
        } else if valence > CLASS_THRESHOLD {
            SentimentClass::Positive
        } else {
            SentimentClass::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentPoint {
    pub doc_id: String,
    pub wave: Wave,
    pub valence: f64,
    pub class: SentimentClass,
}

pub trait SentimentScorer: Send + Sync {
    fn valence(&self, doc: &FeedbackDocument) -> f64;
}

/// Mean signed valence of lexicon hits, flipped when a negator appears in
/// the two preceding tokens.
#[derive(Debug, Clone)]
pub struct ValenceLexicon {
    valence: HashMap<String, f64>,
    negators: HashSet<String>,
}

impl ValenceLexicon {
    /// Parses `word<TAB>valence` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut valence = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, v) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| format!("line {}: expected `word valence`", i + 1))?;
            let v: f64 = v.trim().parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("line {}: valence {v} outside [-1, 1]", i + 1));
            }
            if valence.insert(word.to_lowercase(), v).is_some() {
                return Err(format!("line {}: duplicate entry `{word}`", i + 1));
            }
        }
        Ok(Self {
            valence,
            negators: NEGATORS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn shipped() -> &'static ValenceLexicon {
        static LEX: OnceLock<ValenceLexicon> = OnceLock::new();
        LEX.get_or_init(|| ValenceLexicon::parse(SHIPPED_VALENCE).expect("shipped valence lexicon parses"))
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.valence.get(word).copied()
    }

    pub fn score_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut sum = 0.0;
        let mut hits = 0usize;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(v) = self.get(tok.as_ref()) else { continue };
            let negated = tokens[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|t| self.negators.contains(t.as_ref()));
            sum += if negated { -v } else { v };
            hits += 1;
        }
        if hits == 0 {
            0.0
        } else {
            (sum / hits as f64).clamp(-1.0, 1.0)
        }
    }
}

impl SentimentScorer for ValenceLexicon {
    /// Scores the cleaned text with stopwords kept, so negators survive.
    fn valence(&self, doc: &FeedbackDocument) -> f64 {
        self.score_tokens(&UnicodeWordTokenizer.tokenize(&doc.clean_text.to_lowercase()))
    }
}

/// Delegates to an endpoint speaking the LLM wire contract (`score_sentiment`
/// task), falling back to the valence lexicon.
pub struct RemoteSentiment<'a> {
    pub client: &'a dyn LlmClient,
    pub fallback: &'a ValenceLexicon,
}

impl SentimentScorer for RemoteSentiment<'_> {
    fn valence(&self, doc: &FeedbackDocument) -> f64 {
        let req = LlmRequest {
            task: LlmTask::ScoreSentiment,
            context: String::new(),
            payload: json!({"text": doc.clean_text}).to_string(),
            schema: json!({
                "type": "object",
                "properties": {"valence": {"type": "number", "minimum": -1, "maximum": 1}},
                "required": ["valence"]
            }),
        };
        let parse = |r: &crate::needs::llm::LlmResponse| {
            let v = r.structured_or_content()?.get("valence")?.as_f64()?;
            (-1.0..=1.0).contains(&v).then_some(v)
        };
        match request_conforming(self.client, &req, parse) {
            LlmOutcome::Accepted(v) => v,
            _ => self.fallback.valence(doc),
        }
    }
}

pub fn sentiment_with(scorer: &dyn SentimentScorer, doc: &FeedbackDocument) -> SentimentPoint {
    let valence = scorer.valence(doc).clamp(-1.0, 1.0);
    SentimentPoint {
        doc_id: doc.doc_id.clone(),
        wave: doc.wave,
        valence,
        class: SentimentClass::of(valence),
    }
}

/// Sentiment with the shipped valence lexicon.
pub fn sentiment(doc: &FeedbackDocument) -> SentimentPoint {
    sentiment_with(ValenceLexicon::shipped(), doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSummary {
    pub wave: Wave,
    pub documents: usize,
    pub mean_valence: f64,
    pub class_counts: BTreeMap<SentimentClass, usize>,
}

/// Per-wave mean valence and class counts.
pub fn sentiment_trajectory(points: &[SentimentPoint]) -> Vec<SentimentSummary> {
    let mut by_wave: BTreeMap<Wave, Vec<&SentimentPoint>> = BTreeMap::new();
    for p in points {
        by_wave.entry(p.wave).or_default().push(p);
    }
    by_wave
        .into_iter()
        .map(|(wave, ps)| {
            let mut class_counts: BTreeMap<SentimentClass, usize> = [
                (SentimentClass::Negative, 0),
                (SentimentClass::Neutral, 0),
                (SentimentClass::Positive, 0),
            ]
            .into();
            for p in &ps {
                *class_counts.get_mut(&p.class).expect("all classes present") += 1;
            }
            SentimentSummary {
                wave,
                documents: ps.len(),
                mean_valence: ps.iter().map(|p| p.valence).sum::<f64>() / ps.len() as f64,
                class_counts,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::needs::llm::{LlmResponse, ScriptedLlm};

    fn doc(text: &str) -> FeedbackDocument {
        FeedbackDocument {
            doc_id: "d".into(),
            user_id: "u".into(),
            wave: Wave::M6,
            raw_text: text.into(),
            clean_text: text.into(),
            tokens: Vec::new(),
            sentences: Vec::new(),
            empty: false,
        }
    }

    #[test]
    fn shipped_lexicon_entries() {
        let lex = ValenceLexicon::shipped();
        assert!(lex.len() >= 150);
        assert_eq!(lex.get("happy"), Some(0.8));
        assert_eq!(lex.get("grateful"), Some(0.7));
        assert_eq!(lex.get("the"), None);
    }

    #[test]
    fn documented_examples() {
        let lex = ValenceLexicon::shipped();
        let p = sentiment(&doc(""));
        assert_eq!((p.valence, p.class), (0.0, SentimentClass::Neutral));
        assert!((lex.score_tokens(&["happy", "grateful"]) - 0.75).abs() < 1e-12);
        assert_eq!(SentimentClass::of(0.75), SentimentClass::Positive);
        assert!((lex.score_tokens(&["not", "happy"]) + 0.8).abs() < 1e-12);
        let p = sentiment(&doc("I am not happy."));
        assert_eq!(p.class, SentimentClass::Negative);
    }

    #[test]
    fn negation_window_is_two_tokens() {
        let lex = ValenceLexicon::shipped();
        assert!((lex.score_tokens(&["not", "very", "happy"]) + 0.8).abs() < 1e-12);
        assert!((lex.score_tokens(&["not", "so", "very", "happy"]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn thresholds_are_strict() {
        assert_eq!(SentimentClass::of(0.05), SentimentClass::Neutral);
        assert_eq!(SentimentClass::of(-0.05), SentimentClass::Neutral);
        assert_eq!(SentimentClass::of(-0.0500001), SentimentClass::Negative);
    }

    #[test]
    fn rejects_bad_lexicons() {
        assert!(ValenceLexicon::parse("good 1.5").is_err());
        assert!(ValenceLexicon::parse("good 0.5\ngood 0.4").is_err());
        assert!(ValenceLexicon::parse("good").is_err());
    }

    #[test]
    fn remote_scorer_with_fallback() {
        let llm = ScriptedLlm::new([Ok(LlmResponse::json(serde_json::json!({"valence": -0.3})))]);
        let s = RemoteSentiment {
            client: &llm,
            fallback: ValenceLexicon::shipped(),
        };
        assert_eq!(sentiment_with(&s, &doc("happy")).valence, -0.3);
        assert_eq!(llm.requests()[0].task, LlmTask::ScoreSentiment);
        // Script exhausted: transport failure degrades to the lexicon.
        assert_eq!(sentiment_with(&s, &doc("happy")).valence, 0.8);
    }

    #[test]
    fn trajectory_means() {
        let pts = vec![
            SentimentPoint { doc_id: "a".into(), wave: Wave::M3, valence: 0.5, class: SentimentClass::Positive },
            SentimentPoint { doc_id: "b".into(), wave: Wave::M3, valence: -0.1, class: SentimentClass::Negative },
            SentimentPoint { doc_id: "c".into(), wave: Wave::M6, valence: 0.0, class: SentimentClass::Neutral },
        ];
        let t = sentiment_trajectory(&pts);
        assert_eq!(t.len(), 2);
        assert!((t[0].mean_valence - 0.2).abs() < 1e-12);
        assert_eq!(t[0].class_counts[&SentimentClass::Negative], 1);
        assert_eq!(t[1].class_counts[&SentimentClass::Positive], 0);
    }
}
