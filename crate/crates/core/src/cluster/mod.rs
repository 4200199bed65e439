//! Clustering of reduced feature vectors and cluster-count selection.

mod elbow;
mod kmeans;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use elbow::{elbow_select_k, knee_of_curve, ElbowResult};
pub use kmeans::{kmeans, kmeans_with, KMeansConfig};
pub use spectral::{
    eigengap_analysis, eigengap_from_affinity, median_heuristic_gamma, normalized_cut,
    normalized_laplacian, rbf_affinity, spectral_clustering, spectral_clustering_affinity,
    spectral_embedding, AffinityMatrix, EigengapResult,
};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no input vectors")]
    Empty,
    #[error("cannot form {k} clusters from {n} samples")]
    TooFewSamples { k: usize, n: usize },
    #[error("vector {index} has length {len}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("sample {index} has zero affinity to every other sample")]
    IsolatedNode { index: usize },
    #[error("kernel width must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("invalid affinity matrix: {0}")]
    InvalidAffinity(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

pub(crate) fn check_input(vectors: &[Vec<f64>], k: usize) -> Result<(), ClusterError> {
    let first = vectors.first().ok_or(ClusterError::Empty)?;
    if k == 0 || k > vectors.len() {
        return Err(ClusterError::TooFewSamples { k, n: vectors.len() });
    }
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != first.len() {
            return Err(ClusterError::DimensionMismatch {
                index,
                len: v.len(),
                expected: first.len(),
            });
        }
    }
    Ok(())
}

/// One label per sample. Clusters may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub n_clusters: usize,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

impl ClusterAssignment {
    /// Relabels clusters in order of first appearance; unused labels go last.
    pub fn canonical(labels: Vec<usize>, n_clusters: usize, inertia: f64) -> Self {
        let mut map = vec![usize::MAX; n_clusters];
        let mut next = 0;
        for &l in &labels {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
        }
        let labels = labels.into_iter().map(|l| map[l]).collect();
        Self {
            n_clusters,
            labels,
            inertia,
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sample ids grouped by cluster, in sample order.
    pub fn members<S: AsRef<str>>(&self, ids: &[S]) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (id, &l) in ids.iter().zip(&self.labels) {
            out[l].push(id.as_ref().to_string());
        }
        out
    }
}

/// Within-cluster sum of squared distances to cluster means.
pub fn inertia(vectors: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in vectors.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(v) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    vectors
        .iter()
        .zip(labels)
        .map(|(v, &l)| v.iter().zip(&means[l]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// Adjusted Rand index between two labellings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labellings must cover the same samples");
    let n = a.len();
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&m| pairs(m)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    #[default]
    Spectral,
    Kmeans,
}

/// A clustering algorithm over feature vectors.
pub trait Clusterer {
    fn cluster(&self, vectors: &[Vec<f64>], n_clusters: usize, seed: u64) -> Result<ClusterAssignment, ClusterError>;
}

/// RBF spectral clustering; `gamma: None` uses the median heuristic.
#[derive(Debug, Clone, Copy, Default)]
pub struct Spectral {
    pub gamma: Option<f64>,
}

impl Clusterer for Spectral {
    fn cluster(&self, vectors: &[Vec<f64>], n_clusters: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let gamma = self.gamma.unwrap_or_else(|| median_heuristic_gamma(vectors));
        spectral_clustering(vectors, n_clusters, gamma, seed)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KMeans {
    pub config: KMeansConfig,
}

impl Clusterer for KMeans {
    fn cluster(&self, vectors: &[Vec<f64>], n_clusters: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        kmeans_with(vectors, n_clusters, seed, &self.config)
    }
}

impl ClusterMethod {
    pub fn clusterer(self) -> Box<dyn Clusterer + Send + Sync> {
        match self {
            ClusterMethod::Spectral => Box::new(Spectral::default()),
            ClusterMethod::Kmeans => Box::new(KMeans::default()),
        }
    }
}
