//! Collapsed Gibbs sampler for LDA.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TopicError, TopicModelConfig};

/// Sampler state: token assignments plus the count tables they induce.
///
/// Word-topic counts are stored word-major (`V × K`) so the inner topic loop
/// walks contiguous memory.
pub struct GibbsSampler<'a> {
    docs: &'a [Vec<u32>],
    num_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    z: Vec<Vec<u32>>,
    doc_topic: Vec<u32>,
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    sweeps: usize,
}

impl<'a> GibbsSampler<'a> {
    /// Initializes every assignment uniformly at random from the config seed.
    pub fn new(docs: &'a [Vec<u32>], vocab_size: usize, cfg: &TopicModelConfig) -> Result<Self, TopicError> {
        cfg.validate()?;
        if docs.iter().all(|d| d.is_empty()) {
            return Err(TopicError::EmptyCorpus);
        }
        if vocab_size < 2 {
            return Err(TopicError::VocabularyTooSmall(vocab_size));
        }
        if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= vocab_size) {
            return Err(TopicError::TokenOutOfRange { token: w, vocab_size });
        }

        let k = cfg.num_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut word_topic = vec![0u32; vocab_size * k];
        let mut topic_total = vec![0u32; k];
        let z = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = rng.random_range(0..k);
                        doc_topic[d * k + t] += 1;
                        word_topic[w as usize * k + t] += 1;
                        topic_total[t] += 1;
                        t as u32
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            docs,
            num_topics: k,
            vocab_size,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            z,
            doc_topic,
            word_topic,
            topic_total,
            rng,
            weights: vec![0.0; k],
            sweeps: 0,
        })
    }

    /// Resamples every token once, in document order.
    pub fn sweep(&mut self) {
        let k = self.num_topics;
        let v_beta = self.vocab_size as f64 * self.beta;
        for (d, doc) in self.docs.iter().enumerate() {
            let dt = &mut self.doc_topic[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = self.z[d][i] as usize;
                dt[old] -= 1;
                self.word_topic[w * k + old] -= 1;
                self.topic_total[old] -= 1;

                let wt = &self.word_topic[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (dt[t] as f64 + self.alpha) * (wt[t] as f64 + self.beta)
                        / (self.topic_total[t] as f64 + v_beta);
                    self.weights[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                dt[new] += 1;
                self.word_topic[w * k + new] += 1;
                self.topic_total[new] += 1;
                self.z[d][i] = new as u32;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.doc_topic[d * self.num_topics + k]
    }

    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.word_topic[w * self.num_topics + k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_total[k]
    }

    /// Point estimate of the topic-word distributions from the current counts (`K × V`).
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let v_beta = self.vocab_size as f64 * self.beta;
        (0..self.num_topics)
            .map(|k| {
                let denom = self.topic_total[k] as f64 + v_beta;
                (0..self.vocab_size)
                    .map(|w| (self.topic_word_count(k, w) as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    /// Point estimate of the document-topic mixtures from the current counts (`D × K`).
    pub fn theta(&self) -> Vec<Vec<f64>> {
        let k_alpha = self.num_topics as f64 * self.alpha;
        self.docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                let denom = doc.len() as f64 + k_alpha;
                (0..self.num_topics)
                    .map(|k| (self.doc_topic_count(d, k) as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }

    /// True when the count tables match a recount from the assignments.
    pub fn counts_consistent(&self) -> bool {
        let k = self.num_topics;
        let mut doc_topic = vec![0u32; self.docs.len() * k];
        let mut word_topic = vec![0u32; self.vocab_size * k];
        let mut topic_total = vec![0u32; k];
        for (d, (doc, zs)) in self.docs.iter().zip(&self.z).enumerate() {
            for (&w, &t) in doc.iter().zip(zs) {
                doc_topic[d * k + t as usize] += 1;
                word_topic[w as usize * k + t as usize] += 1;
                topic_total[t as usize] += 1;
            }
        }
        doc_topic == self.doc_topic && word_topic == self.word_topic && topic_total == self.topic_total
    }

    pub(crate) fn into_parts(self) -> SamplerParts {
        let k = self.num_topics;
        let n_kw = (0..k)
            .map(|t| (0..self.vocab_size).map(|w| self.word_topic[w * k + t]).collect())
            .collect();
        let n_dk = self.doc_topic.chunks(k.max(1)).map(<[u32]>::to_vec).collect();
        SamplerParts {
            z: self.z,
            n_kw,
            n_dk,
            n_k: self.topic_total,
        }
    }
}

pub(crate) struct SamplerParts {
    pub z: Vec<Vec<u32>>,
    pub n_kw: Vec<Vec<u32>>,
    pub n_dk: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
}
