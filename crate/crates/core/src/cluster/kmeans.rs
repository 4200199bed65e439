use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_input, ClusterAssignment, ClusterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    pub n_init: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
        }
    }
}

pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    kmeans_with(vectors, k, seed, &KMeansConfig::default())
}

/// Lloyd's algorithm from k-means++ seeds. Fully determined by
/// `(vectors, k, seed, cfg)`.
pub fn kmeans_with(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<ClusterAssignment, ClusterError> {
    check_input(vectors, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..cfg.n_init.max(1) {
        let centers = plus_plus_init(vectors, k, &mut rng);
        let (labels, inertia) = lloyd(vectors, centers, cfg.max_iter);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.expect("at least one restart");
    Ok(ClusterAssignment::canonical(labels, k, inertia))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(vectors[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = vectors[pick].clone();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(v: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(v, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(vectors: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let k = centers.len();
    let dim = vectors[0].len();
    let mut labels: Vec<usize> = vectors.iter().map(|v| nearest(v, &centers).0).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // An empty cluster takes over the point farthest from its centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..vectors.len())
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&vectors[a], &centers[labels[a]]);
                        let db = sq_dist(&vectors[b], &centers[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[j] = 1;
                    labels[i] = j;
                    centers[j] = vectors[i].clone();
                }
            }
        }
        let next: Vec<usize> = vectors.iter().map(|v| nearest(v, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = super::inertia(vectors, &labels, k);
    (labels, inertia)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::adjusted_rand_index;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(vec![center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)]);
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let a = kmeans(&pts, 1, 0).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0]);
        // mean (1, 1): squared distances 2 + 2 + 4
        assert!((a.inertia - 8.0).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_any_seed() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [20.0, 0.0]], 15, 1.0, 1);
        for seed in 0..10 {
            let a = kmeans(&pts, 2, seed).unwrap();
            assert_eq!(adjusted_rand_index(&a.labels, &truth), 1.0);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let (pts, _) = blobs(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]], 20, 1.5, 2);
        let a = kmeans(&pts, 3, 42).unwrap();
        let b = kmeans(&pts, 3, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn k_equals_n_and_duplicates() {
        let pts = vec![vec![0.0], vec![5.0], vec![9.0]];
        let a = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(a.cluster_sizes(), vec![1, 1, 1]);
        assert_eq!(a.inertia, 0.0);

        let same = vec![vec![1.0]; 4];
        let a = kmeans(&same, 2, 0).unwrap();
        assert_eq!(a.labels.len(), 4);
        assert_eq!(a.inertia, 0.0);
    }

    #[test]
    fn invalid_k() {
        let pts = vec![vec![0.0]; 2];
        assert!(kmeans(&pts, 3, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
    }
}
