use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TopicError, TopicModel};

/// Gibbs sweeps run per held-out document with `phi` frozen.
pub const FOLD_IN_SWEEPS: usize = 100;
/// Trailing sweeps whose `theta` estimates are averaged.
pub const FOLD_IN_AVERAGED: usize = 50;

const FOLD_IN_SEED_SALT: u64 = 0x6f6c_645f_696e_u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScore {
    pub perplexity: f64,
    pub tokens_scored: usize,
    pub oov_dropped: usize,
}

/// `exp(-Σ log Σ_k θ[d][k] φ[k][w] / N)` over all tokens.
pub fn training_perplexity(docs: &[Vec<u32>], phi: &[Vec<f64>], theta: &[Vec<f64>]) -> f64 {
    let mut log_lik = 0.0;
    let mut n = 0usize;
    for (doc, th) in docs.iter().zip(theta) {
        for &w in doc {
            let p: f64 = th.iter().zip(phi).map(|(t, row)| t * row[w as usize]).sum();
            log_lik += p.ln();
            n += 1;
        }
    }
    if n == 0 {
        return f64::NAN;
    }
    (-log_lik / n as f64).exp()
}

/// Estimates a held-out document's topic mixture by Gibbs fold-in against frozen `phi`.
fn fold_in(doc: &[u32], phi: &[Vec<f64>], alpha: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = phi.len();
    let mut counts = vec![0u32; k];
    let mut z: Vec<usize> = doc
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            counts[t] += 1;
            t
        })
        .collect();
    let mut weights = vec![0.0; k];
    let mut theta_sum = vec![0.0; k];
    let denom = doc.len() as f64 + k as f64 * alpha;

    for sweep in 0..FOLD_IN_SWEEPS {
        for (i, &w) in doc.iter().enumerate() {
            counts[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (counts[t] as f64 + alpha) * phi[t][w as usize];
                weights[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);
            counts[new] += 1;
            z[i] = new;
        }
        if sweep >= FOLD_IN_SWEEPS - FOLD_IN_AVERAGED {
            for t in 0..k {
                theta_sum[t] += (counts[t] as f64 + alpha) / denom;
            }
        }
    }
    theta_sum.iter().map(|x| x / FOLD_IN_AVERAGED as f64).collect()
}

/// Splits a held-out document for document completion: even positions are
/// folded in, odd positions are scored. A single-token document is scored
/// against the uniform mixture.
fn completion_split(doc: &[u32]) -> (Vec<u32>, Vec<u32>) {
    if doc.len() == 1 {
        return (Vec::new(), doc.to_vec());
    }
    let observed = doc.iter().step_by(2).copied().collect();
    let scored = doc.iter().skip(1).step_by(2).copied().collect();
    (observed, scored)
}

/// Held-out perplexity with per-document mixtures estimated by fold-in.
///
/// Each document's mixture is folded in on half of its tokens and the other
/// half is scored, so the estimate never sees the tokens it is judged on.
/// Token ids outside the model vocabulary are dropped and counted.
pub fn heldout_perplexity(model: &TopicModel, heldout: &[Vec<u32>]) -> Result<HeldoutScore, TopicError> {
    let v = model.vocab_size();
    let total_tokens: usize = heldout.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(TopicError::EmptyHeldout);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ FOLD_IN_SEED_SALT);
    let alpha = model.config.alpha();
    let mut oov = 0usize;
    let mut n = 0usize;
    let mut log_lik = 0.0;

    for doc in heldout {
        let kept: Vec<u32> = doc.iter().copied().filter(|&w| (w as usize) < v).collect();
        oov += doc.len() - kept.len();
        if kept.is_empty() {
            continue;
        }
        let (observed, scored) = completion_split(&kept);
        let theta = if observed.is_empty() {
            vec![1.0 / model.num_topics() as f64; model.num_topics()]
        } else {
            fold_in(&observed, &model.phi, alpha, &mut rng)
        };
        for &w in &scored {
            let p: f64 = theta.iter().zip(&model.phi).map(|(t, row)| t * row[w as usize]).sum();
            log_lik += p.ln();
        }
        n += scored.len();
    }

    if n == 0 {
        return Err(TopicError::HeldoutOutOfVocabulary(oov));
    }
    Ok(HeldoutScore {
        perplexity: (-log_lik / n as f64).exp(),
        tokens_scored: n,
        oov_dropped: oov,
    })
}
