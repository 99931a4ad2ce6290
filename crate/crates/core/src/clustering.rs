//! Normalized spectral clustering of the hypergraph kernel.
//!
//! The embedding uses the eigenvectors of the `c` smallest eigenvalues of
//! `I - D^{-1/2} G D^{-1/2}`, row-normalized and grouped with seeded k-means.
//! [`spectral_cluster`] works on a dense kernel. [`spectral_cluster_factored`]
//! never forms `G = H Hᵀ`: with `B = D^{-1/2} H` the wanted eigenvectors are
//! `B v / √λ` for the leading eigenpairs of the small `m × m` matrix `BᵀB`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{AffinityMatrix, HypergraphKernel};

pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITERATIONS: usize = 100;
const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITERATIONS: usize = 10_000;
// Relative eigenvalue threshold for the numerical rank.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster count must satisfy 1 <= c <= n (c = {c}, n = {n})")]
    InvalidClusterCount { c: usize, n: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigen-decomposition did not converge")]
    NoConvergence,
    #[error("every vertex is isolated")]
    AllIsolated,
}

/// Per-point cluster ids. `-1` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterLabels {
    pub labels: Vec<i32>,
}

impl ClusterLabels {
    pub fn new(labels: Vec<i32>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self, cluster: i32) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: ClusterLabels,
    /// Zero-degree vertices, assigned to the nearest centroid afterwards.
    pub isolated: Vec<usize>,
    /// Set when `c` exceeds the numerical rank of the kernel plus one.
    pub singular_kernel: bool,
    pub inertia: f64,
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Each eigenvector is signed so that its largest-magnitude component is
/// positive (first such index on ties).
pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), ClusterError> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "symmetric_eigen needs a square matrix");
    let norm = matrix.amax().max(f64::MIN_POSITIVE);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > 1e-8 * norm.max(1.0) {
        return Err(ClusterError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::try_new(matrix.clone(), EIGEN_EPS, EIGEN_MAX_ITERATIONS)
        .ok_or(ClusterError::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let lead = v.iter().copied().fold(0.0_f64, |best, x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        if lead < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

fn check_count(c: usize, n: usize) -> Result<(), ClusterError> {
    if c == 0 || c > n {
        return Err(ClusterError::InvalidClusterCount { c, n });
    }
    Ok(())
}

fn numerical_rank(eigenvalues: impl Iterator<Item = f64> + Clone) -> usize {
    let top = eigenvalues.clone().fold(0.0_f64, |m, v| m.max(v.abs()));
    eigenvalues.filter(|v| *v > RANK_TOLERANCE * top).count()
}

/// Spectral clustering of a dense kernel into `c` groups.
pub fn spectral_cluster(
    kernel: &HypergraphKernel,
    c: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    let g = &kernel.matrix;
    let n = g.nrows();
    check_count(c, n)?;
    let degrees: Vec<f64> = (0..n).map(|i| g.row(i).sum()).collect();
    let (active, isolated) = split_isolated(&degrees);
    if active.is_empty() {
        return Err(ClusterError::AllIsolated);
    }
    let k = active.len();
    let mut a = DMatrix::zeros(k, k);
    for (r, &i) in active.iter().enumerate() {
        for (s, &j) in active.iter().enumerate() {
            a[(r, s)] = g[(i, j)] / (degrees[i] * degrees[j]).sqrt();
        }
    }
    let (values, vectors) = symmetric_eigen(&a)?;
    let singular = c > numerical_rank(values.iter().copied()) + 1;
    // Smallest eigenvalues of I - A are the largest of A.
    let dims = c.min(k);
    let mut embedding = DMatrix::zeros(k, c);
    for d in 0..dims {
        embedding.set_column(d, &vectors.column(k - 1 - d));
    }
    Ok(finish(embedding, &active, &isolated, n, c, seed, singular))
}

/// Spectral clustering of `H Hᵀ` without forming the `n × n` kernel.
pub fn spectral_cluster_factored(
    h: &AffinityMatrix,
    c: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    let n = h.n_vertices();
    let m = h.n_hyperedges();
    check_count(c, n)?;
    let hm = h.to_matrix();
    let col_sums = hm.row_sum();
    let degrees: Vec<f64> = (0..n).map(|i| hm.row(i).dot(&col_sums)).collect();
    let (active, isolated) = split_isolated(&degrees);
    if active.is_empty() {
        return Err(ClusterError::AllIsolated);
    }
    let k = active.len();
    let mut b = DMatrix::zeros(k, m);
    for (r, &i) in active.iter().enumerate() {
        let s = degrees[i].sqrt();
        for j in 0..m {
            b[(r, j)] = hm[(i, j)] / s;
        }
    }
    let btb = b.transpose() * &b;
    let btb = (&btb + btb.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen(&btb)?;
    let rank = numerical_rank(values.iter().copied());
    let singular = c > rank + 1;
    let top = values.iter().fold(0.0_f64, |mx, v| mx.max(v.abs()));
    let mut embedding = DMatrix::zeros(k, c);
    for d in 0..c.min(m) {
        let lambda = values[m - 1 - d];
        if lambda <= RANK_TOLERANCE * top {
            break;
        }
        let u = &b * vectors.column(m - 1 - d) / lambda.sqrt();
        embedding.set_column(d, &u);
    }
    Ok(finish(embedding, &active, &isolated, n, c, seed, singular))
}

fn split_isolated(degrees: &[f64]) -> (Vec<usize>, Vec<usize>) {
    (0..degrees.len()).partition(|&i| degrees[i] > 0.0 && degrees[i].is_finite())
}

fn finish(
    mut embedding: DMatrix<f64>,
    active: &[usize],
    isolated: &[usize],
    n: usize,
    c: usize,
    seed: u64,
    singular_kernel: bool,
) -> Clustering {
    for mut row in embedding.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let rows: Vec<Vec<f64>> = embedding
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let km = kmeans(&rows, c.min(rows.len()), seed);
    let mut labels = vec![0i32; n];
    for (r, &i) in active.iter().enumerate() {
        labels[i] = km.assignments[r] as i32;
    }
    // An isolated vertex embeds at the origin.
    let origin = vec![0.0; c];
    let nearest = nearest_center(&origin, &km.centers).0 as i32;
    for &i in isolated {
        labels[i] = nearest;
    }
    Clustering {
        labels: ClusterLabels::new(labels),
        isolated: isolated.to_vec(),
        singular_kernel,
        inertia: km.inertia,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> KMeans {
    let n = points.len();
    let k = centers.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let a = nearest_center(p, &centers).0;
            if assignments[i] != a {
                assignments[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // Reseed an empty cluster at the worst-served point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[assignments[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[assignments[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centers[j] = points[far].clone();
                assignments[far] = j;
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum();
    KMeans {
        centers,
        assignments,
        inertia,
    }
}

/// k-means with k-means++ seeding and [`KMEANS_RESTARTS`] restarts. The
/// lowest inertia wins, earlier restarts on ties.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "k-means needs 1 <= k <= n");
    let mut best: Option<KMeans> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(points, plus_plus_init(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.unwrap()
}
