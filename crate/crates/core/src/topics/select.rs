use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, heldout_perplexity, TopicError, TopicModelConfig, TracePoint};

/// Perplexities closer than this are treated as equal; the smaller K wins.
pub const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub results: Vec<CandidateResult>,
    #[serde(rename = "selected_K")]
    pub selected_k: usize,
    pub train_docs: usize,
    pub heldout_docs: usize,
}

/// Seeded document-level split into (train, held-out) index lists.
pub fn split_heldout(num_docs: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TopicError> {
    let n_held = ((num_docs as f64 * fraction).round() as usize).max(1);
    if num_docs < 2 || n_held >= num_docs {
        return Err(TopicError::CorpusTooSmallForSplit(num_docs));
    }
    let mut idx: Vec<usize> = (0..num_docs).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut heldout = idx.split_off(num_docs - n_held);
    idx.sort_unstable();
    heldout.sort_unstable();
    Ok((idx, heldout))
}

/// Fits every candidate K on a training split and picks the one with the
/// lowest held-out perplexity. Candidates are fitted in parallel; each owns
/// its sampler so the result does not depend on scheduling.
pub fn select_k(
    docs: &[Vec<u32>],
    vocabulary: &[String],
    candidates: &[usize],
    template: &TopicModelConfig,
) -> Result<PerplexityReport, TopicError> {
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 2 {
        return Err(TopicError::TooFewCandidates);
    }
    let (train_idx, held_idx) = split_heldout(docs.len(), template.heldout_fraction, template.seed)?;
    let train: Vec<Vec<u32>> = train_idx.iter().map(|&i| docs[i].clone()).collect();
    let heldout: Vec<Vec<u32>> = held_idx.iter().map(|&i| docs[i].clone()).collect();

    let results: Vec<CandidateResult> = ks
        .par_iter()
        .map(|&k| {
            let cfg = template.with_topics(k);
            let outcome = fit(&train, vocabulary.to_vec(), &cfg)
                .and_then(|m| heldout_perplexity(&m, &heldout).map(|s| (s.perplexity, m.trace)));
            match outcome {
                Ok((perplexity, trace)) => CandidateResult {
                    k,
                    perplexity: Some(perplexity),
                    error: None,
                    trace,
                },
                Err(e) => CandidateResult {
                    k,
                    perplexity: None,
                    error: Some(e.to_string()),
                    trace: Vec::new(),
                },
            }
        })
        .collect();

    let scores: Vec<(usize, f64)> = results
        .iter()
        .filter_map(|r| r.perplexity.map(|p| (r.k, p)))
        .collect();
    let Some(selected_k) = argmin_smaller_k(&scores) else {
        let msg = results
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("K={}: {e}", r.k)))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(TopicError::AllCandidatesFailed(msg));
    };

    Ok(PerplexityReport {
        results,
        selected_k,
        train_docs: train.len(),
        heldout_docs: heldout.len(),
    })
}

fn argmin_smaller_k(scores: &[(usize, f64)]) -> Option<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by_key(|s| s.0);
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in sorted {
        match best {
            Some((_, bp)) if p >= bp - TIE_TOLERANCE => {}
            _ => best = Some((k, p)),
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_candidate_rejected() {
        let docs = vec![vec![0, 1]; 10];
        let vocab = vec!["a".to_string(), "b".to_string()];
        let err = select_k(&docs, &vocab, &[3], &TopicModelConfig::new(3)).unwrap_err();
        assert_eq!(err.to_string(), "need ≥ 2 candidates");
        assert!(select_k(&docs, &vocab, &[3, 3], &TopicModelConfig::new(3)).is_err());
    }

    #[test]
    fn ties_go_to_smaller_k() {
        assert_eq!(argmin_smaller_k(&[(10, 5.0), (5, 5.0 + 5e-7)]), Some(5));
        assert_eq!(argmin_smaller_k(&[(10, 4.0), (5, 5.0)]), Some(10));
        assert_eq!(argmin_smaller_k(&[]), None);
    }

    #[test]
    fn split_is_seeded_partition() {
        let (a, b) = split_heldout(20, 0.1, 3).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(a.len(), 18);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(split_heldout(20, 0.1, 3).unwrap(), (a, b));
        assert!(split_heldout(1, 0.5, 0).is_err());
    }

    #[test]
    fn partial_failures_reported() {
        // V = 2 works for every K; K = 0 is rejected by validation.
        let docs: Vec<Vec<u32>> = (0..12).map(|i| vec![i % 2, 1, 0, 1]).collect();
        let vocab = vec!["a".to_string(), "b".to_string()];
        let cfg = TopicModelConfig {
            iterations: 30,
            burn_in: 10,
            sample_lag: 5,
            heldout_fraction: 0.25,
            ..TopicModelConfig::new(2)
        };
        let report = select_k(&docs, &vocab, &[0, 2, 3], &cfg).unwrap();
        assert_eq!(report.results.len(), 3);
        assert!(report.results[0].error.is_some());
        assert!(report.selected_k == 2 || report.selected_k == 3);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["selected_K"].is_u64());
        assert!(json["results"][1]["K"].is_u64());
    }
}
