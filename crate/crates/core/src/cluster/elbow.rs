use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::{check_input, ClusterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k: usize,
    /// `(k, inertia)` for every candidate, ascending in k.
    pub curve: Vec<(usize, f64)>,
    /// Distance of the knee below the chord, with both axes rescaled to
    /// `[0, 1]`. Zero for a straight or concave curve; at most `1/sqrt(2)`.
    pub knee_strength: f64,
}

/// Picks the point of the curve farthest below the chord joining its ends.
/// Ties go to the smaller k; a curve with no point below the chord selects
/// its first k.
pub fn knee_of_curve(curve: &[(usize, f64)]) -> (usize, f64) {
    let (k0, y0) = curve[0];
    let (k1, y1) = curve[curve.len() - 1];
    let (ymin, ymax) = curve
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &(_, y)| (a.min(y), b.max(y)));
    let yspan = ymax - ymin;
    let xspan = (k1 - k0) as f64;
    if yspan <= 0.0 || xspan <= 0.0 {
        return (k0, 0.0);
    }
    let norm = |k: usize, y: f64| ((k - k0) as f64 / xspan, (y - ymin) / yspan);
    let (ax, ay) = norm(k0, y0);
    let (bx, by) = norm(k1, y1);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    let mut best = (k0, 0.0);
    for &(k, y) in curve {
        let (px, py) = norm(k, y);
        // Positive when the point lies below the chord.
        let dist = ((px - ax) * dy - (py - ay) * dx) / len * dx.signum();
        if dist > best.1 + 1e-12 {
            best = (k, dist);
        }
    }
    best
}

/// Elbow method over `k_min..=k_max` using k-means inertia.
pub fn elbow_select_k(
    vectors: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<ElbowResult, ClusterError> {
    check_input(vectors, 1)?;
    let n = vectors.len();
    if k_min < 2 || k_max >= n || k_max < k_min + 2 {
        return Err(ClusterError::InvalidRange(format!(
            "elbow needs k_min >= 2, k_max < n and at least 3 candidates (k_min={k_min}, k_max={k_max}, n={n})"
        )));
    }
    let curve = (k_min..=k_max)
        .map(|k| kmeans(vectors, k, seed).map(|a| (k, a.inertia)))
        .collect::<Result<Vec<_>, _>>()?;
    let (k, knee_strength) = knee_of_curve(&curve);
    Ok(ElbowResult {
        k,
        curve,
        knee_strength,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        centers
            .iter()
            .flat_map(|c| (0..per).map(move |_| *c))
            .map(|c| vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)])
            .collect()
    }

    #[test]
    fn four_blobs_select_four() {
        let pts = blobs(&[[0.0, 0.0], [15.0, 0.0], [0.0, 15.0], [15.0, 15.0]], 15, 1);
        let r = elbow_select_k(&pts, 2, 8, 0).unwrap();
        assert_eq!(r.k, 4);
        assert_eq!(r.curve.len(), 7);
        assert!(r.knee_strength > 0.4);
    }

    #[test]
    fn linear_curve_returns_k_min() {
        let curve: Vec<(usize, f64)> = (2..=8).map(|k| (k, 100.0 - 10.0 * k as f64)).collect();
        assert_eq!(knee_of_curve(&curve), (2, 0.0));
    }

    #[test]
    fn single_blob_has_weak_knee() {
        let pts = blobs(&[[0.0, 0.0]], 60, 2);
        let r = elbow_select_k(&pts, 2, 6, 0).unwrap();
        assert!(r.curve.windows(2).all(|w| w[1].1 <= w[0].1));
        let four = blobs(&[[0.0, 0.0], [15.0, 0.0], [0.0, 15.0], [15.0, 15.0]], 15, 1);
        let strong = elbow_select_k(&four, 2, 6, 0).unwrap();
        assert!(r.knee_strength < 0.25, "strength {}", r.knee_strength);
        assert!(r.knee_strength < strong.knee_strength);
    }

    #[test]
    fn too_few_candidates() {
        let pts = blobs(&[[0.0, 0.0]], 10, 3);
        assert!(elbow_select_k(&pts, 2, 3, 0).is_err());
        assert!(elbow_select_k(&pts, 1, 5, 0).is_err());
        assert!(elbow_select_k(&pts, 2, 10, 0).is_err());
    }
}
