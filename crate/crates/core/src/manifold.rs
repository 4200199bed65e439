//! Isomap: k-nearest-neighbour graph, graph geodesics, classical MDS.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{symmetric_eigen, Order};

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("no input vectors")]
    Empty,
    #[error("neighbour count must be at least 1")]
    ZeroNeighbors,
    #[error("neighbour count k={k} requires more than {n} samples")]
    TooFewSamples { k: usize, n: usize },
    #[error("vector {index} has length {len}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("vector {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("neighbour graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("embedding dimension {dim} exceeds sample count {n}")]
    DimTooLarge { dim: usize, n: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// Undirected weighted graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from undirected edges; duplicates keep the smaller weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, ManifoldError> {
        let mut g = Self::empty(n);
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(ManifoldError::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(ManifoldError::InvalidGraph(format!("self-loop at {a}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(ManifoldError::InvalidGraph(format!("bad weight {w} on ({a}, {b})")));
            }
            g.add_edge(a, b, w);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adj[a]
            .binary_search_by_key(&b, |&(j, _)| j)
            .ok()
            .map(|pos| self.adj[a][pos].1)
    }

    /// Each undirected edge once, as `(lo, hi, weight)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w)))
            .collect()
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        for (from, to) in [(a, b), (b, a)] {
            let list = &mut self.adj[from];
            match list.binary_search_by_key(&to, |&(j, _)| j) {
                Ok(pos) => list[pos].1 = list[pos].1.min(w),
                Err(pos) => list.insert(pos, (to, w)),
            }
        }
    }

    /// Connected component id of every node, numbered in order of first node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().max().map_or(0, |m| m + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicMatrix {
    d: DMatrix<f64>,
}

impl GeodesicMatrix {
    /// Wraps an arbitrary distance matrix (square, symmetric, zero diagonal,
    /// finite, non-negative).
    pub fn from_distances(d: DMatrix<f64>) -> Result<Self, ManifoldError> {
        if !d.is_square() {
            return Err(ManifoldError::InvalidDistances("not square".into()));
        }
        let n = d.nrows();
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(ManifoldError::InvalidDistances(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(ManifoldError::InvalidDistances(format!("entry ({i}, {j}) = {v}")));
                }
                if v != d[(j, i)] {
                    return Err(ManifoldError::InvalidDistances(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// `n x dim`, one row per sample.
    pub coords: DMatrix<f64>,
    /// Retained eigenvalues, non-increasing and non-negative.
    pub eigenvalues: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.coords
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

fn check_vectors(vectors: &[Vec<f64>]) -> Result<(), ManifoldError> {
    let first = vectors.first().ok_or(ManifoldError::Empty)?;
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != first.len() {
            return Err(ManifoldError::DimensionMismatch {
                index,
                len: v.len(),
                expected: first.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ManifoldError::NonFinite { index });
        }
    }
    Ok(())
}

/// Full pairwise Euclidean distance matrix.
pub fn pairwise_distances(vectors: &[Vec<f64>]) -> DMatrix<f64> {
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let (a, b) = if i < j { (i, j) } else { (j, i) };
                        euclidean(&vectors[a], &vectors[b])
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn knn_from_distances(dist: &DMatrix<f64>, k: usize) -> NeighborGraph {
    let n = dist.nrows();
    let mut g = NeighborGraph::empty(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in order.iter().take(k) {
            g.add_edge(i, j, dist[(i, j)]);
        }
    }
    g
}

/// Connects each sample to its `k` nearest neighbours (ties to the lower
/// index) and symmetrizes by union.
pub fn build_knn_graph(vectors: &[Vec<f64>], k: usize) -> Result<NeighborGraph, ManifoldError> {
    check_vectors(vectors)?;
    check_k(k, vectors.len())?;
    Ok(knn_from_distances(&pairwise_distances(vectors), k))
}

fn check_k(k: usize, n: usize) -> Result<(), ManifoldError> {
    if k == 0 {
        return Err(ManifoldError::ZeroNeighbors);
    }
    if k >= n {
        return Err(ManifoldError::TooFewSamples { k, n });
    }
    Ok(())
}

/// Edge inserted to join two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Adds the shortest inter-component edge, one at a time, until the graph
/// is connected. Returns the edges added.
pub fn connect_components(g: &mut NeighborGraph, dist: &DMatrix<f64>) -> Vec<RepairEdge> {
    let mut added = Vec::new();
    loop {
        let comp = g.components();
        if comp.iter().all(|&c| c == 0) {
            return added;
        }
        let n = g.n();
        let mut best: Option<RepairEdge> = None;
        for a in 0..n {
            for b in (a + 1)..n {
                if comp[a] != comp[b] && best.is_none_or(|e| dist[(a, b)] < e.weight) {
                    best = Some(RepairEdge {
                        a,
                        b,
                        weight: dist[(a, b)],
                    });
                }
            }
        }
        let e = best.expect("multiple components imply a crossing pair");
        log::warn!(
            "neighbour graph disconnected; added edge {}-{} (length {:.6})",
            e.a,
            e.b,
            e.weight
        );
        g.add_edge(e.a, e.b, e.weight);
        added.push(e);
    }
}

#[derive(Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(g: &NeighborGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.n()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(State {
        dist: 0.0,
        node: source,
    });
    while let Some(State { dist: d, node: u }) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in g.neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(State { dist: nd, node: v });
            }
        }
    }
    dist
}

/// All-pairs shortest paths by one Dijkstra per source.
pub fn geodesic_distances(g: &NeighborGraph) -> Result<GeodesicMatrix, ManifoldError> {
    let n = g.n();
    if n == 0 {
        return Err(ManifoldError::Empty);
    }
    let components = g.component_count();
    if components > 1 {
        return Err(ManifoldError::Disconnected { components });
    }
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(g, s)).collect();
    let d = DMatrix::from_fn(n, n, |i, j| rows[i][j].min(rows[j][i]));
    Ok(GeodesicMatrix { d })
}

/// Classical (Torgerson) MDS of a distance matrix into `dim` coordinates.
///
/// Eigenvalues that are negative, or negligible against the largest one, are
/// clamped to zero and their coordinates vanish.
pub fn classical_mds(d: &GeodesicMatrix, dim: usize) -> Result<EmbeddingMatrix, ManifoldError> {
    let n = d.n();
    if dim == 0 {
        return Err(ManifoldError::ZeroDim);
    }
    if dim > n {
        return Err(ManifoldError::DimTooLarge { dim, n });
    }
    let b = double_centered_gram(d.matrix());
    let eig = symmetric_eigen(&b, Order::Descending);
    let top = eig.values[0].max(0.0);
    let floor = top * 1e-10;

    let mut coords = DMatrix::zeros(n, dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    for k in 0..dim {
        let lambda = if eig.values[k] > floor { eig.values[k] } else { 0.0 };
        eigenvalues.push(lambda);
        if lambda == 0.0 {
            continue;
        }
        let scale = lambda.sqrt();
        let mut col = eig.vectors.column(k) * scale;
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        coords.set_column(k, &col);
    }
    Ok(EmbeddingMatrix {
        coords,
        eigenvalues,
    })
}

/// `B = -1/2 * J * (D o D) * J` with `J = I - 11^T / n`.
pub fn double_centered_gram(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    (&b + b.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repair {
    /// Join components with their shortest crossing edges.
    Connect,
    /// Fail on a disconnected graph.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsomapParams {
    pub k: usize,
    pub dim: usize,
    pub repair: Repair,
}

impl IsomapParams {
    pub fn new(k: usize, dim: usize) -> Self {
        Self {
            k,
            dim,
            repair: Repair::Connect,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsomapOutput {
    pub embedding: EmbeddingMatrix,
    pub repaired: Vec<RepairEdge>,
}

pub fn isomap(vectors: &[Vec<f64>], params: &IsomapParams) -> Result<IsomapOutput, ManifoldError> {
    check_vectors(vectors)?;
    let n = vectors.len();
    check_k(params.k, n)?;
    if params.dim == 0 {
        return Err(ManifoldError::ZeroDim);
    }
    if params.dim > n {
        return Err(ManifoldError::DimTooLarge { dim: params.dim, n });
    }
    let dist = pairwise_distances(vectors);
    let mut graph = knn_from_distances(&dist, params.k);
    let repaired = match params.repair {
        Repair::Connect => connect_components(&mut graph, &dist),
        Repair::Strict => Vec::new(),
    };
    let geo = geodesic_distances(&graph)?;
    let embedding = classical_mds(&geo, params.dim)?;
    Ok(IsomapOutput {
        embedding,
        repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn floyd_warshall(g: &NeighborGraph) -> DMatrix<f64> {
        let n = g.n();
        let mut d = DMatrix::from_element(n, n, f64::INFINITY);
        for i in 0..n {
            d[(i, i)] = 0.0;
        }
        for (a, b, w) in g.edges() {
            d[(a, b)] = d[(a, b)].min(w);
            d[(b, a)] = d[(b, a)].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[(i, k)] + d[(k, j)];
                    if via < d[(i, j)] {
                        d[(i, j)] = via;
                    }
                }
            }
        }
        d
    }

    fn pairwise_embedded(e: &EmbeddingMatrix) -> DMatrix<f64> {
        pairwise_distances(&e.rows())
    }

    #[test]
    fn collinear_k1() {
        let v = vec![vec![0.0], vec![1.0], vec![2.0]];
        let g = build_knn_graph(&v, 1).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 1.0), (1, 2, 1.0)]);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // Node 1 is equidistant from 0 and 2.
        let v = vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0]];
        let g = build_knn_graph(&v, 1).unwrap();
        assert!(g.weight(1, 0).is_some());
        assert!(g.weight(2, 3).is_some());
    }

    #[test]
    fn k_n_minus_one_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.random(), rng.random()]).collect();
        let g = build_knn_graph(&v, 6).unwrap();
        assert_eq!(g.edges().len(), 21);
    }

    #[test]
    fn knn_matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let k = 4;
        let g = build_knn_graph(&v, k).unwrap();
        for i in 0..20 {
            assert!(g.degree(i) >= k);
            let mut others: Vec<(f64, usize)> = (0..20)
                .filter(|&j| j != i)
                .map(|j| (euclidean(&v[i], &v[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in &others[..k] {
                assert!(g.weight(i, j).is_some() && g.weight(j, i).is_some());
            }
            for &(j, _) in g.neighbors(i) {
                let in_i = others[..k].iter().any(|&(_, x)| x == j);
                let in_j = {
                    let mut oj: Vec<(f64, usize)> = (0..20)
                        .filter(|&x| x != j)
                        .map(|x| (euclidean(&v[j], &v[x]), x))
                        .collect();
                    oj.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                    oj[..k].iter().any(|&(_, x)| x == i)
                };
                assert!(in_i || in_j, "edge {i}-{j} not justified by either endpoint");
            }
        }
    }

    #[test]
    fn knn_errors() {
        assert_eq!(build_knn_graph(&[], 1), Err(ManifoldError::Empty));
        let v = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            build_knn_graph(&v, 2),
            Err(ManifoldError::TooFewSamples { k: 2, n: 2 })
        );
        let bad = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            build_knn_graph(&bad, 1),
            Err(ManifoldError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn path_graph_geodesic() {
        let g = NeighborGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let d = geodesic_distances(&g).unwrap();
        assert_eq!(d.matrix()[(0, 2)], 2.0);
    }

    #[test]
    fn complete_graph_geodesic_is_edge_weight() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 4.0], vec![1.0, 1.0]];
        let g = build_knn_graph(&pts, 3).unwrap();
        let d = geodesic_distances(&g).unwrap();
        for (a, b, w) in g.edges() {
            assert_eq!(d.matrix()[(a, b)], w);
        }
    }

    #[test]
    fn geodesic_matches_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.random_range(2..=30);
            let mut edges = Vec::new();
            for i in 1..n {
                let j = rng.random_range(0..i);
                edges.push((i, j, rng.random_range(1..=64) as f64 / 4.0));
            }
            for _ in 0..n {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    edges.push((a, b, rng.random_range(1..=64) as f64 / 4.0));
                }
            }
            let g = NeighborGraph::from_edges(n, &edges).unwrap();
            assert_eq!(geodesic_distances(&g).unwrap().matrix(), &floyd_warshall(&g));
        }
    }

    #[test]
    fn disconnected_graph() {
        let mut g = NeighborGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(
            geodesic_distances(&g),
            Err(ManifoldError::Disconnected { components: 2 })
        );
        let pts = [0.0f64, 1.0, 5.0, 6.0];
        let dist = DMatrix::from_fn(4, 4, |i, j| (pts[i] - pts[j]).abs());
        let added = connect_components(&mut g, &dist);
        assert_eq!(added, vec![RepairEdge { a: 1, b: 2, weight: 4.0 }]);
        assert_eq!(geodesic_distances(&g).unwrap().matrix()[(0, 3)], 6.0);
    }

    #[test]
    fn strict_isomap_rejects_disconnected() {
        let v = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let strict = IsomapParams {
            k: 1,
            dim: 1,
            repair: Repair::Strict,
        };
        assert_eq!(
            isomap(&v, &strict).unwrap_err(),
            ManifoldError::Disconnected { components: 2 }
        );
        let out = isomap(&v, &IsomapParams::new(1, 1)).unwrap();
        assert_eq!(out.repaired.len(), 1);
    }

    #[test]
    fn mds_collinear() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let e = classical_mds(&GeodesicMatrix::from_distances(d.clone()).unwrap(), 1).unwrap();
        let back = pairwise_embedded(&e);
        assert!((&back - &d).amax() < 1e-12);
    }

    #[test]
    fn mds_recovers_planar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> = (0..25)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let d = pairwise_distances(&pts);
        let e = classical_mds(&GeodesicMatrix::from_distances(d.clone()).unwrap(), 2).unwrap();
        let back = pairwise_embedded(&e);
        for i in 0..25 {
            for j in 0..25 {
                if i != j {
                    assert!(((back[(i, j)] - d[(i, j)]) / d[(i, j)]).abs() < 1e-6);
                }
            }
        }
        for c in 0..2 {
            assert!(e.coords.column(c).mean().abs() < 1e-12);
        }
        let b = double_centered_gram(&d);
        assert!(e.eigenvalues.iter().sum::<f64>() <= b.trace() + 1e-9);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn mds_dim_errors() {
        let d = GeodesicMatrix::from_distances(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(classical_mds(&d, 0), Err(ManifoldError::ZeroDim));
        assert_eq!(
            classical_mds(&d, 4),
            Err(ManifoldError::DimTooLarge { dim: 4, n: 3 })
        );
    }

    #[test]
    fn negative_eigenvalues_clamped() {
        // Four points on a cycle with geodesic (non-Euclidean) distances.
        let d = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 1.0, 2.0, 1.0, 1.0, 0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 1.0, 1.0, 2.0, 1.0, 0.0],
        );
        let e = classical_mds(&GeodesicMatrix::from_distances(d).unwrap(), 4).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| l >= 0.0));
        for k in 0..4 {
            if e.eigenvalues[k] == 0.0 {
                assert!(e.coords.column(k).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn isomap_flat_subspace_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Points on a 2-plane embedded in 5-D.
        let pts: Vec<Vec<f64>> = (0..15)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                vec![a, b, a + b, a - 2.0 * b, 0.5]
            })
            .collect();
        let out = isomap(&pts, &IsomapParams::new(14, 2)).unwrap();
        let back = pairwise_embedded(&out.embedding);
        let d = pairwise_distances(&pts);
        assert!((&back - &d).amax() < 1e-6);
    }

    #[test]
    fn isomap_n_equals_dim() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = isomap(&pts, &IsomapParams::new(2, 3)).unwrap();
        assert_eq!(out.embedding.coords.shape(), (3, 3));
    }

    #[test]
    fn isomap_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random()).collect()).collect();
        let shifted: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, v)| v + 3.0 * i as f64 - 1.0).collect())
            .collect();
        let a = isomap(&pts, &IsomapParams::new(5, 3)).unwrap().embedding;
        let b = isomap(&shifted, &IsomapParams::new(5, 3)).unwrap().embedding;
        assert!((&a.coords - &b.coords).amax() < 1e-9);
    }
}
