//! LDA topic model fitted by collapsed Gibbs sampling, with held-out
//! perplexity for choosing the number of topics.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded from the config,
//! so a fit is bit-identical across runs and platforms for a fixed seed.

mod checkpoint;
mod perplexity;
mod sampler;
mod select;

pub use checkpoint::{ModelCheckpoint, CHECKPOINT_VERSION};
pub use perplexity::{heldout_perplexity, training_perplexity, HeldoutScore, FOLD_IN_AVERAGED, FOLD_IN_SWEEPS};
pub use sampler::GibbsSampler;
pub use select::{select_k, split_heldout, CandidateResult, PerplexityReport, TIE_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::ingest::Corpus;

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error("invalid topic model config: {0}")]
    InvalidConfig(String),
    #[error("corpus has no non-empty documents")]
    EmptyCorpus,
    #[error("vocabulary has {0} terms; at least 2 are required")]
    VocabularyTooSmall(usize),
    #[error("token id {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },
    #[error("topic {topic} out of range (model has {num_topics} topics)")]
    TopicOutOfRange { topic: usize, num_topics: usize },
    #[error("held-out set is empty")]
    EmptyHeldout,
    #[error("held-out set is entirely out of vocabulary ({0} tokens dropped)")]
    HeldoutOutOfVocabulary(usize),
    #[error("need ≥ 2 candidates")]
    TooFewCandidates,
    #[error("corpus too small to hold out documents ({0} documents)")]
    CorpusTooSmallForSplit(usize),
    #[error("every candidate failed: {0}")]
    AllCandidatesFailed(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
}

/// Sampler and model-selection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelConfig {
    pub num_topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / K`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub sample_lag: usize,
    pub seed: u64,
    pub heldout_fraction: f64,
}

impl TopicModelConfig {
    pub fn new(num_topics: usize) -> Self {
        Self {
            num_topics,
            alpha: None,
            beta: 0.01,
            iterations: 2000,
            burn_in: 500,
            sample_lag: 10,
            seed: 0,
            heldout_fraction: 0.1,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.num_topics.max(1) as f64)
    }

    pub fn with_topics(&self, num_topics: usize) -> Self {
        Self {
            num_topics,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), TopicError> {
        let bad = |m: &str| Err(TopicError::InvalidConfig(m.to_string()));
        if self.num_topics < 1 {
            return bad("K must be ≥ 1");
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.sample_lag < 1 {
            return bad("sample_lag must be ≥ 1");
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return bad("heldout_fraction must lie in (0, 1)");
        }
        if self.num_topics > u32::MAX as usize {
            return bad("K too large");
        }
        Ok(())
    }
}

/// Training perplexity recorded at a sweep checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub sweep: usize,
    pub perplexity: f64,
}

/// A fitted model. `phi` is `K × V`, `theta` is `D × K`; both are posterior-mean
/// estimates averaged over the post-burn-in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub config: TopicModelConfig,
    pub vocabulary: Vec<String>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<u32>>,
    pub n_kw: Vec<Vec<u32>>,
    pub n_dk: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
    pub trace: Vec<TracePoint>,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_docs(&self) -> usize {
        self.theta.len()
    }

    /// A model with externally supplied distributions and no sampler state.
    pub fn from_distributions(
        config: TopicModelConfig,
        vocabulary: Vec<String>,
        phi: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
    ) -> Result<Self, TopicError> {
        if phi.len() != config.num_topics || phi.iter().any(|r| r.len() != vocabulary.len()) {
            return Err(TopicError::InvalidConfig("phi must be K × V".into()));
        }
        if theta.iter().any(|r| r.len() != config.num_topics) {
            return Err(TopicError::InvalidConfig("theta must be D × K".into()));
        }
        let k = config.num_topics;
        let v = vocabulary.len();
        Ok(Self {
            n_kw: vec![vec![0; v]; k],
            n_dk: vec![vec![0; k]; theta.len()],
            n_k: vec![0; k],
            z: vec![Vec::new(); theta.len()],
            config,
            vocabulary,
            phi,
            theta,
            trace: Vec::new(),
        })
    }
}

fn normalize_rows(rows: &mut [Vec<f64>]) {
    for row in rows {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
}

fn add_into(acc: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (a, b) in acc.iter_mut().zip(x) {
        for (p, q) in a.iter_mut().zip(b) {
            *p += q;
        }
    }
}

/// Sweeps at which training perplexity is recorded: 10%, 50% and 100% of the run.
fn checkpoint_sweeps(iterations: usize) -> Vec<usize> {
    let mut s: Vec<usize> = [10, 50, 100]
        .iter()
        .map(|pct| ((iterations * pct).div_ceil(100)).max(1))
        .collect();
    s.dedup();
    s
}

/// Fits LDA on token-id sequences over `vocabulary`.
pub fn fit(docs: &[Vec<u32>], vocabulary: Vec<String>, cfg: &TopicModelConfig) -> Result<TopicModel, TopicError> {
    let mut sampler = GibbsSampler::new(docs, vocabulary.len(), cfg)?;
    let k = cfg.num_topics;
    let checkpoints = checkpoint_sweeps(cfg.iterations);
    let mut phi_sum = vec![vec![0.0; vocabulary.len()]; k];
    let mut theta_sum = vec![vec![0.0; k]; docs.len()];
    let mut samples = 0usize;
    let mut trace = Vec::new();

    for sweep in 1..=cfg.iterations {
        sampler.sweep();
        debug_assert!(sampler.counts_consistent());
        if sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.sample_lag == 0 {
            add_into(&mut phi_sum, &sampler.phi());
            add_into(&mut theta_sum, &sampler.theta());
            samples += 1;
        }
        if checkpoints.contains(&sweep) {
            let perplexity = training_perplexity(docs, &sampler.phi(), &sampler.theta());
            trace.push(TracePoint { sweep, perplexity });
        }
    }

    let (mut phi, mut theta) = if samples == 0 {
        (sampler.phi(), sampler.theta())
    } else {
        let n = samples as f64;
        let scale = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.into_iter()
                .map(|r| r.into_iter().map(|x| x / n).collect())
                .collect()
        };
        (scale(phi_sum), scale(theta_sum))
    };
    normalize_rows(&mut phi);
    normalize_rows(&mut theta);

    let parts = sampler.into_parts();
    Ok(TopicModel {
        config: cfg.clone(),
        vocabulary,
        phi,
        theta,
        z: parts.z,
        n_kw: parts.n_kw,
        n_dk: parts.n_dk,
        n_k: parts.n_k,
        trace,
    })
}

/// Fits LDA on the non-empty documents of a corpus; `theta` rows follow `corpus.doc_term`.
pub fn fit_corpus(corpus: &Corpus, cfg: &TopicModelConfig) -> Result<TopicModel, TopicError> {
    fit(&corpus.term_sequences(), corpus.vocabulary.terms().to_vec(), cfg)
}

/// The `m` highest-weight terms of topic `k`, descending, ties by ascending term id.
pub fn top_terms(model: &TopicModel, k: usize, m: usize) -> Result<Vec<(String, f64)>, TopicError> {
    let row = model.phi.get(k).ok_or(TopicError::TopicOutOfRange {
        topic: k,
        num_topics: model.num_topics(),
    })?;
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    Ok(ids
        .into_iter()
        .take(m)
        .map(|w| (model.vocabulary[w].clone(), row[w]))
        .collect())
}

/// The `n` document rows with the largest weight on topic `k`, ties by ascending row.
pub fn representative_rows(model: &TopicModel, k: usize, n: usize) -> Result<Vec<(usize, f64)>, TopicError> {
    if k >= model.num_topics() {
        return Err(TopicError::TopicOutOfRange {
            topic: k,
            num_topics: model.num_topics(),
        });
    }
    let mut rows: Vec<(usize, f64)> = model.theta.iter().map(|t| t[k]).enumerate().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rows.truncate(n);
    Ok(rows)
}
