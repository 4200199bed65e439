use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::{check_input, ClusterAssignment, ClusterError};
use crate::linalg::{symmetric_eigen, Order};
use crate::manifold::pairwise_distances;

/// Symmetric non-negative weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    w: DMatrix<f64>,
}

impl AffinityMatrix {
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, ClusterError> {
        if !w.is_square() {
            return Err(ClusterError::InvalidAffinity("not square".into()));
        }
        let n = w.nrows();
        for i in 0..n {
            if w[(i, i)] != 0.0 {
                return Err(ClusterError::InvalidAffinity(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = w[(i, j)];
                if !(v >= 0.0) || !v.is_finite() || v != w[(j, i)] {
                    return Err(ClusterError::InvalidAffinity(format!("bad entry ({i}, {j}) = {v}")));
                }
            }
        }
        Ok(Self { w })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.w.row_iter().map(|r| r.sum()).collect()
    }
}

/// `w_ij = exp(-gamma * |x_i - x_j|^2)` with a zeroed diagonal.
pub fn rbf_affinity(vectors: &[Vec<f64>], gamma: f64) -> Result<AffinityMatrix, ClusterError> {
    if !(gamma > 0.0) {
        return Err(ClusterError::InvalidGamma(gamma));
    }
    let d = pairwise_distances(vectors);
    let n = vectors.len();
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-gamma * d[(i, j)] * d[(i, j)]).exp()
        }
    });
    Ok(AffinityMatrix { w })
}

/// `1 / (2 * median^2)` over all pairwise distances. Falls back to 1 when
/// the median distance is zero.
pub fn median_heuristic_gamma(vectors: &[Vec<f64>]) -> f64 {
    let d = pairwise_distances(vectors);
    let n = vectors.len();
    let mut all: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| d[(i, j)])
        .collect();
    if all.is_empty() {
        return 1.0;
    }
    all.sort_by(f64::total_cmp);
    let m = all.len();
    let median = if m % 2 == 1 {
        all[m / 2]
    } else {
        0.5 * (all[m / 2 - 1] + all[m / 2])
    };
    if median > 0.0 {
        1.0 / (2.0 * median * median)
    } else {
        1.0
    }
}

/// `L = I - D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian(w: &AffinityMatrix) -> Result<DMatrix<f64>, ClusterError> {
    let deg = w.degrees();
    if let Some(index) = deg.iter().position(|&d| d <= 0.0) {
        return Err(ClusterError::IsolatedNode { index });
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = w.n();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let off = w.w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    Ok((&l + l.transpose()) * 0.5)
}

/// Rows of the `k` lowest Laplacian eigenvectors, each scaled to unit length.
pub fn spectral_embedding(w: &AffinityMatrix, k: usize) -> Result<Vec<Vec<f64>>, ClusterError> {
    let l = normalized_laplacian(w)?;
    let eig = symmetric_eigen(&l, Order::Ascending);
    let n = w.n();
    Ok((0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| eig.vectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect())
}

/// Normalized spectral clustering on a precomputed affinity. The reported
/// inertia is measured in the row-normalized spectral space.
pub fn spectral_clustering_affinity(
    w: &AffinityMatrix,
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    if n_clusters == 0 || n_clusters > w.n() {
        return Err(ClusterError::TooFewSamples {
            k: n_clusters,
            n: w.n(),
        });
    }
    let rows = spectral_embedding(w, n_clusters)?;
    kmeans(&rows, n_clusters, seed)
}

/// Spectral clustering with an RBF affinity. Labels come from k-means on the
/// spectral rows; inertia is recomputed on the input vectors so it is
/// comparable with plain k-means.
pub fn spectral_clustering(
    vectors: &[Vec<f64>],
    n_clusters: usize,
    gamma: f64,
    seed: u64,
) -> Result<ClusterAssignment, ClusterError> {
    check_input(vectors, n_clusters)?;
    let w = rbf_affinity(vectors, gamma)?;
    let spectral = spectral_clustering_affinity(&w, n_clusters, seed)?;
    let inertia = super::inertia(vectors, &spectral.labels, n_clusters);
    Ok(ClusterAssignment::canonical(spectral.labels, n_clusters, inertia))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigengapResult {
    /// Smallest `max_k` Laplacian eigenvalues, ascending, within `[0, 2]`.
    pub eigenvalues: Vec<f64>,
    /// 1-based index `i` maximizing `eigenvalues[i] - eigenvalues[i - 1]`.
    pub suggested: usize,
}

pub fn eigengap_from_affinity(w: &AffinityMatrix, max_k: usize) -> Result<EigengapResult, ClusterError> {
    if max_k < 2 || max_k >= w.n() {
        return Err(ClusterError::InvalidRange(format!(
            "eigengap needs 2 <= max_k < n (max_k={max_k}, n={})",
            w.n()
        )));
    }
    let l = normalized_laplacian(w)?;
    let eig = symmetric_eigen(&l, Order::Ascending);
    let eigenvalues: Vec<f64> = eig.values[..max_k].iter().map(|v| v.clamp(0.0, 2.0)).collect();
    let mut suggested = 1;
    let mut best = f64::NEG_INFINITY;
    for i in 1..max_k {
        let gap = eigenvalues[i] - eigenvalues[i - 1];
        // Gaps within rounding noise of each other count as ties.
        if gap > best + 1e-9 {
            best = gap;
            suggested = i;
        }
    }
    Ok(EigengapResult {
        eigenvalues,
        suggested,
    })
}

pub fn eigengap_analysis(vectors: &[Vec<f64>], gamma: f64, max_k: usize) -> Result<EigengapResult, ClusterError> {
    check_input(vectors, 1)?;
    eigengap_from_affinity(&rbf_affinity(vectors, gamma)?, max_k)
}

/// Normalized cut `sum_c cut(c, rest) / vol(c)` of a labelling.
pub fn normalized_cut(w: &AffinityMatrix, labels: &[usize]) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let n = w.n();
    let mut cut = vec![0.0; k];
    let mut vol = vec![0.0; k];
    for i in 0..n {
        for j in 0..n {
            let v = w.w[(i, j)];
            vol[labels[i]] += v;
            if labels[i] != labels[j] {
                cut[labels[i]] += v;
            }
        }
    }
    cut.iter()
        .zip(&vol)
        .filter(|(_, &v)| v > 0.0)
        .map(|(c, v)| c / v)
        .sum()
}
