//! Metadata side information: squared embedding distances, the closed-form
//! Gaussian-kernel graph, and kernel-width heuristics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edges, WeightVector};

/// One embedding vector per node, keyed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    labels: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(labels: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                what: "embedding rows",
                expected: labels.len(),
                found: vectors.len(),
            });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 && !vectors.is_empty() {
            return Err(Error::InvalidParameter {
                name: "embedding dimension",
                reason: "must be at least 1".into(),
            });
        }
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "embedding dimension",
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self { labels, vectors })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Reorders rows to follow `order`. The label sets must be identical.
    pub fn aligned_to(&self, order: &[String]) -> Result<Self> {
        let perm = align_labels(&self.labels, order)?;
        Ok(Self {
            labels: order.to_vec(),
            vectors: perm.iter().map(|&i| self.vectors[i].clone()).collect(),
        })
    }
}

/// For each label in `order`, its position in `have`. Any missing or extra
/// label is an error.
pub fn align_labels(have: &[String], order: &[String]) -> Result<Vec<usize>> {
    use std::collections::HashMap;
    let index: HashMap<&str, usize> = have
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut missing = Vec::new();
    let mut perm = Vec::with_capacity(order.len());
    for label in order {
        match index.get(label.as_str()) {
            Some(&i) => perm.push(i),
            None => missing.push(label.clone()),
        }
    }
    let wanted: std::collections::HashSet<&str> = order.iter().map(String::as_str).collect();
    let extra: Vec<String> = have
        .iter()
        .filter(|l| !wanted.contains(l.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() || have.len() != order.len() {
        return Err(Error::LabelMismatch { missing, extra });
    }
    Ok(perm)
}

/// `z_k = ||y_i - y_j||^2` in edge order.
pub fn pairwise_sq_dists(emb: &EmbeddingSet) -> Vec<f64> {
    let v = emb.vectors();
    edges(v.len())
        .map(|(i, j)| v[i].iter().zip(&v[j]).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect()
}

/// `w_k = exp(-z_k / sigma2)`, the minimizer of the entropic kernel objective.
pub fn gaussian_kernel_weights(p: usize, z: &[f64], sigma2: f64) -> Result<WeightVector> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("{sigma2} must be positive"),
        });
    }
    WeightVector::new(p, z.iter().map(|&zk| (-zk / sigma2).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma2Heuristic {
    #[default]
    Median,
    Mean,
}

pub fn sigma2_heuristic(z: &[f64], method: Sigma2Heuristic) -> Result<f64> {
    if z.is_empty() || z.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateMetadata);
    }
    let value = match method {
        Sigma2Heuristic::Mean => z.iter().sum::<f64>() / z.len() as f64,
        Sigma2Heuristic::Median => {
            let mut s = z.to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            }
        }
    };
    if value > 0.0 {
        Ok(value)
    } else {
        // median of mostly-zero distances
        Err(Error::DegenerateMetadata)
    }
}
