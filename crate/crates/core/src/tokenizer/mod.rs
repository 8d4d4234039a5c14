//! K-means discretization of embedding sequences into token streams.

mod kmeans;
mod subsample;

pub use kmeans::{assign, kmeans_train, nearest_centroid, KmeansConfig, KmeansMode};
pub use subsample::{select_for_training, subsample_for_training, FrameSample, Selection};

use std::collections::HashMap;

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

/// Scope label of a codebook trained on pooled data from every language.
pub const SHARED_SCOPE: &str = "shared";

/// `K` centroids of dimension `D`, stored in single precision so that a
/// codebook read back from disk assigns exactly like the one trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<f32>,
    k: usize,
    dim: usize,
    /// A language code or [`SHARED_SCOPE`].
    pub lang_scope: String,
    pub trained_on_hours: f64,
    /// Inertia after each Lloyd assignment step.
    pub inertia_history: Vec<f64>,
}

impl Codebook {
    pub fn new(centroids: Vec<f32>, k: usize, dim: usize, lang_scope: String) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config(format!("codebook must be non-empty, got {k}x{dim}")));
        }
        if centroids.len() != k * dim {
            return Err(Error::Dimension(format!(
                "{k}x{dim} codebook needs {} values, got {}",
                k * dim,
                centroids.len()
            )));
        }
        Ok(Self {
            centroids,
            k,
            dim,
            lang_scope,
            trained_on_hours: 0.0,
            inertia_history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Same centroids, dimension and scope; training metadata is ignored.
    pub fn same_model(&self, other: &Codebook) -> bool {
        self.k == other.k
            && self.dim == other.dim
            && self.lang_scope == other.lang_scope
            && self
                .centroids
                .iter()
                .zip(&other.centroids)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Cluster purity: `Σ_k max_label |cluster k ∩ label| / T`.
pub fn purity(tokens: &TokenSequence, reference_labels: &[u32]) -> Result<f64> {
    if tokens.num_groups() != 1 {
        return Err(Error::Validation(format!(
            "purity needs a single token group, got {}",
            tokens.num_groups()
        )));
    }
    purity_of(tokens.group(0), reference_labels)
}

pub fn purity_of(tokens: &[u32], labels: &[u32]) -> Result<f64> {
    if tokens.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} tokens but {} reference labels",
            tokens.len(),
            labels.len()
        )));
    }
    if tokens.is_empty() {
        return Err(Error::Validation("purity of an empty sequence".into()));
    }
    let mut table: HashMap<u32, HashMap<u32, usize>> = HashMap::new();
    for (&t, &l) in tokens.iter().zip(labels) {
        *table.entry(t).or_default().entry(l).or_default() += 1;
    }
    let hits: usize = table
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / tokens.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: Vec<u32>, k: u32) -> TokenSequence {
        TokenSequence::new(vec![tokens], vec![k], 50.0).unwrap()
    }

    #[test]
    fn purity_identical_labels() {
        assert_eq!(purity(&seq(vec![0, 1, 2, 1], 3), &[0, 1, 2, 1]).unwrap(), 1.0);
    }

    #[test]
    fn purity_single_cluster_balanced() {
        assert_eq!(purity(&seq(vec![4; 6], 5), &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn purity_contingency_table() {
        // cluster 0: labels {a,a,b} -> 2; cluster 1: {b,b,c,a} -> 2; cluster 2: {c} -> 1
        let tokens = vec![0, 0, 0, 1, 1, 1, 1, 2];
        let labels = vec![7, 7, 8, 8, 8, 9, 7, 9];
        assert!((purity(&seq(tokens, 3), &labels).unwrap() - 5.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn purity_length_mismatch() {
        assert!(matches!(
            purity(&seq(vec![0, 1], 2), &[0]),
            Err(Error::Validation(_))
        ));
    }
}
