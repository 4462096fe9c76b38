//! Test-only oracles and fixture generators. Nothing here calls into the
//! sampler; it must stay independent of the code it checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Γ(a + n) / Γ(a) as a rising product.
fn rising(a: f64, n: usize) -> f64 {
    (0..n).map(|i| a + i as f64).product()
}

/// Unnormalized collapsed joint p(z, w) for LDA with symmetric priors.
pub fn collapsed_joint(docs: &[Vec<u32>], z: &[Vec<usize>], k: usize, v: usize, alpha: f64, beta: f64) -> f64 {
    let mut n_dk = vec![vec![0usize; k]; docs.len()];
    let mut n_kw = vec![vec![0usize; v]; k];
    let mut n_k = vec![0usize; k];
    for (d, (doc, zs)) in docs.iter().zip(z).enumerate() {
        for (&w, &t) in doc.iter().zip(zs) {
            n_dk[d][t] += 1;
            n_kw[t][w as usize] += 1;
            n_k[t] += 1;
        }
    }
    let mut p = 1.0;
    for (d, doc) in docs.iter().enumerate() {
        for t in 0..k {
            p *= rising(alpha, n_dk[d][t]);
        }
        p /= rising(k as f64 * alpha, doc.len());
    }
    for t in 0..k {
        for w in 0..v {
            p *= rising(beta, n_kw[t][w]);
        }
        p /= rising(v as f64 * beta, n_k[t]);
    }
    p
}

/// Exact posterior over assignments by enumeration.
///
/// Returns (per-token P(z_i = t), pairwise P(z_i = z_j)) with tokens flattened in document order.
pub fn exact_posterior(docs: &[Vec<u32>], k: usize, v: usize, alpha: f64, beta: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n: usize = docs.iter().map(Vec::len).sum();
    let total_states = k.pow(n as u32);
    let mut marg = vec![vec![0.0; k]; n];
    let mut pair = vec![vec![0.0; n]; n];
    let mut norm = 0.0;
    for code in 0..total_states {
        let mut c = code;
        let flat: Vec<usize> = (0..n)
            .map(|_| {
                let t = c % k;
                c /= k;
                t
            })
            .collect();
        let mut z = Vec::new();
        let mut off = 0;
        for doc in docs {
            z.push(flat[off..off + doc.len()].to_vec());
            off += doc.len();
        }
        let p = collapsed_joint(docs, &z, k, v, alpha, beta);
        norm += p;
        for i in 0..n {
            marg[i][flat[i]] += p;
            for j in 0..n {
                if flat[i] == flat[j] {
                    pair[i][j] += p;
                }
            }
        }
    }
    for row in marg.iter_mut().chain(pair.iter_mut()) {
        row.iter_mut().for_each(|x| *x /= norm);
    }
    (marg, pair)
}

fn dirichlet(rng: &mut ChaCha8Rng, conc: f64, dim: usize) -> Vec<f64> {
    let g = Gamma::new(conc, 1.0).unwrap();
    let mut x: Vec<f64> = (0..dim).map(|_| g.sample(rng).max(1e-300)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

fn categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

pub struct SyntheticLda {
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub docs: Vec<Vec<u32>>,
    pub vocabulary: Vec<String>,
}

/// Draws a corpus from the LDA generative process.
pub fn generate_lda(
    seed: u64,
    k: usize,
    v: usize,
    num_docs: usize,
    doc_len: usize,
    alpha: f64,
    beta: f64,
) -> SyntheticLda {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(&mut rng, beta, v)).collect();
    let mut theta = Vec::new();
    let mut docs = Vec::new();
    for _ in 0..num_docs {
        let th = dirichlet(&mut rng, alpha, k);
        let doc = (0..doc_len)
            .map(|_| {
                let t = categorical(&mut rng, &th);
                categorical(&mut rng, &phi[t]) as u32
            })
            .collect();
        theta.push(th);
        docs.push(doc);
    }
    SyntheticLda {
        phi,
        theta,
        docs,
        vocabulary: (0..v).map(|i| format!("w{i:03}")).collect(),
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Greedy one-to-one matching of recovered to true topics by smallest TV
/// distance; returns the mean distance over matched pairs.
pub fn greedy_matched_tv(truth: &[Vec<f64>], fitted: &[Vec<f64>]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, f) in fitted.iter().enumerate() {
            pairs.push((total_variation(t, f), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_t = vec![false; truth.len()];
    let mut used_f = vec![false; fitted.len()];
    let mut sum = 0.0;
    let mut n = 0;
    for (d, i, j) in pairs {
        if !used_t[i] && !used_f[j] {
            used_t[i] = true;
            used_f[j] = true;
            sum += d;
            n += 1;
        }
    }
    sum / n as f64
}
