//! Triplet loss with multi-similarity pair mining.
//!
//! Mining runs on plain embedding values; the loss builds a graph over
//! embedding nodes so gradients flow back to whatever produced them. Both
//! use cosine distance d(a, b) = 1 - cos(a, b), which is what the evaluator
//! ranks by, so train and test optimize the same geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::NodeId;
use crate::{Graph, Tensor};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Triplet margin on cosine distance.
    pub margin: f64,
    /// Miner slack: how close to the decision boundary a pair must be to be
    /// considered informative.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            epsilon: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin < 0.0 || self.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "margin {} and epsilon {} must be >= 0",
                self.margin, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Triplets selected from one batch.
#[derive(Clone, Debug, Default)]
pub struct MinerOutput {
    /// (anchor, positive, negative) indices into the batch.
    pub triplets: Vec<(usize, usize, usize)>,
    pub kept_positive_pairs: usize,
    pub kept_negative_pairs: usize,
    /// No anchor had both a positive and a negative (single-subject batch).
    pub degenerate: bool,
}

/// Dense pairwise cosine-distance matrix, row-major `n x n`. Inputs are
/// expected unit-norm (the embedding head guarantees this); the dot product
/// is not re-normalized.
pub fn cosine_distances(embeddings: &[Vec<f64>]) -> Vec<f64> {
    let n = embeddings.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = embeddings[i]
                .iter()
                .zip(&embeddings[j])
                .map(|(a, b)| a * b)
                .sum();
            let d = 1.0 - dot;
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Multi-similarity mining on a distance matrix.
///
/// For each anchor a: a positive p survives if `d(a,p) + eps` exceeds the
/// distance of a's closest negative, and a negative n survives if
/// `d(a,n) - eps` is below the distance of a's farthest positive. Surviving
/// pairs combine into every compatible (a, p, n) triplet.
pub fn mine(distances: &[f64], labels: &[usize], cfg: &LossConfig) -> Result<MinerOutput> {
    let n = labels.len();
    if distances.len() != n * n {
        return Err(Error::Contract(format!(
            "distance matrix has {} entries for {n} labels",
            distances.len()
        )));
    }
    let d = |i: usize, j: usize| distances[i * n + j];

    let mut out = MinerOutput {
        degenerate: true,
        ..Default::default()
    };
    for a in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&p| p != a && labels[p] == labels[a])
            .collect();
        let negatives: Vec<usize> = (0..n).filter(|&q| labels[q] != labels[a]).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        out.degenerate = false;

        let min_neg = negatives.iter().map(|&q| d(a, q)).fold(f64::INFINITY, f64::min);
        let max_pos = positives.iter().map(|&p| d(a, p)).fold(f64::NEG_INFINITY, f64::max);

        let kept_pos: Vec<usize> = positives
            .into_iter()
            .filter(|&p| d(a, p) + cfg.epsilon > min_neg)
            .collect();
        let kept_neg: Vec<usize> = negatives
            .into_iter()
            .filter(|&q| d(a, q) - cfg.epsilon < max_pos)
            .collect();
        out.kept_positive_pairs += kept_pos.len();
        out.kept_negative_pairs += kept_neg.len();
        for &p in &kept_pos {
            for &q in &kept_neg {
                out.triplets.push((a, p, q));
            }
        }
    }
    Ok(out)
}

/// Builds the mean triplet loss over `triplets` as a graph node:
/// `mean of relu(cos(a,n) - cos(a,p) + margin)`, which equals
/// `relu(d(a,p) - d(a,n) + margin)` on cosine distances. An empty triplet
/// set yields a constant zero (no gradient flows).
pub fn triplet_loss(
    g: &mut Graph,
    embeddings: &[NodeId],
    triplets: &[(usize, usize, usize)],
    margin: f64,
) -> Result<NodeId> {
    if triplets.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    // Cosine nodes are shared between triplets that reuse a pair.
    let mut cos_cache: std::collections::HashMap<(usize, usize), NodeId> =
        std::collections::HashMap::new();
    let mut cos_of = |g: &mut Graph, i: usize, j: usize| -> Result<NodeId> {
        let key = if i < j { (i, j) } else { (j, i) };
        if let Some(&id) = cos_cache.get(&key) {
            return Ok(id);
        }
        let id = g.cosine_sim(embeddings[key.0], embeddings[key.1])?;
        cos_cache.insert(key, id);
        Ok(id)
    };

    let m = g.constant(Tensor::scalar(margin));
    let mut terms = Vec::with_capacity(triplets.len());
    for &(a, p, q) in triplets {
        let n = embeddings.len();
        if a >= n || p >= n || q >= n {
            return Err(Error::Contract(format!(
                "triplet ({a}, {p}, {q}) out of range for batch of {n}"
            )));
        }
        let cos_ap = cos_of(g, a, p)?;
        let cos_an = cos_of(g, a, q)?;
        let diff = g.sub(cos_an, cos_ap)?;
        let shifted = g.add(diff, m)?;
        let hinge = g.relu(shifted);
        terms.push(g.reshape(hinge, &[1])?);
    }
    let stacked = g.concat(&terms, 0)?;
    g.mean_axes(stacked, &[0])
}
