use serde::{Deserialize, Serialize};

use super::{TopicError, TopicModel, TopicModelConfig, TracePoint};
use crate::digest::vocabulary_hash;

pub const CHECKPOINT_VERSION: &str = "tm/1";

/// On-disk form of a fitted model. Matrices are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: String,
    pub config: TopicModelConfig,
    pub seed: u64,
    pub vocabulary_hash: String,
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub assignments: Vec<Vec<u32>>,
    #[serde(default)]
    pub trace: Vec<TracePoint>,
}

impl TopicModel {
    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            seed: self.config.seed,
            vocabulary_hash: vocabulary_hash(&self.vocabulary),
            num_topics: self.num_topics(),
            vocab_size: self.vocab_size(),
            num_docs: self.num_docs(),
            phi: self.phi.iter().flatten().copied().collect(),
            theta: self.theta.iter().flatten().copied().collect(),
            assignments: self.z.clone(),
            trace: self.trace.clone(),
        }
    }

    /// Restores a model, recomputing count tables from the stored assignments.
    ///
    /// `vocabulary` and `docs` must be the ones the model was fitted on.
    pub fn from_checkpoint(
        ckpt: ModelCheckpoint,
        vocabulary: Vec<String>,
        docs: &[Vec<u32>],
    ) -> Result<Self, TopicError> {
        let bad = |m: String| Err(TopicError::Checkpoint(m));
        if ckpt.version != CHECKPOINT_VERSION {
            return bad(format!("unsupported version `{}`", ckpt.version));
        }
        if vocabulary_hash(&vocabulary) != ckpt.vocabulary_hash {
            return bad("vocabulary hash mismatch".into());
        }
        let (k, v, d) = (ckpt.num_topics, ckpt.vocab_size, ckpt.num_docs);
        if k != ckpt.config.num_topics || v != vocabulary.len() || ckpt.phi.len() != k * v || ckpt.theta.len() != d * k {
            return bad("matrix dimensions inconsistent".into());
        }
        if docs.len() != d || ckpt.assignments.len() != d {
            return bad(format!("expected {d} documents, found {}", docs.len()));
        }

        let mut n_kw = vec![vec![0u32; v]; k];
        let mut n_dk = vec![vec![0u32; k]; d];
        let mut n_k = vec![0u32; k];
        for (di, (doc, zs)) in docs.iter().zip(&ckpt.assignments).enumerate() {
            if doc.len() != zs.len() {
                return bad(format!("document {di} length differs from its assignments"));
            }
            for (&w, &t) in doc.iter().zip(zs) {
                let (w, t) = (w as usize, t as usize);
                if w >= v || t >= k {
                    return bad(format!("document {di} holds an out-of-range token or topic"));
                }
                n_kw[t][w] += 1;
                n_dk[di][t] += 1;
                n_k[t] += 1;
            }
        }

        let rows = |flat: &[f64], width: usize| -> Vec<Vec<f64>> {
            flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect()
        };
        Ok(Self {
            phi: rows(&ckpt.phi, v),
            theta: if k == 0 { Vec::new() } else { rows(&ckpt.theta, k) },
            config: ckpt.config,
            vocabulary,
            z: ckpt.assignments,
            n_kw,
            n_dk,
            n_k,
            trace: ckpt.trace,
        })
    }
}
