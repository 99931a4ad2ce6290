//! Hyperedge optimization and hypergraph assembly.
//!
//! A hyperedge is a model hypothesis connected to every data point through
//! its weighting scores. [`optimize_hyperedge`] repeatedly refits the
//! hypothesis on a small block of points just inside the minimum tolerable
//! structure size `q`, stopping once the weight at rank `q` settles over the
//! last three iterations. Each optimized hyperedge contributes one column to
//! the affinity matrix `H`; the kernel `G = H Hᵀ` is what gets clustered.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Dataset, GeometryError, Model, ModelKind};
use crate::kde::{self, KdeError, ScaleEstimate};

pub const DEFAULT_Q_FRACTION: f64 = 0.1;
pub const DEFAULT_T_MAX: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperedgeError {
    #[error("invalid hyperedge configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("uninformative hypothesis: {0}")]
    Uninformative(#[from] KdeError),
}

/// Parameters of the iterative hyperedge optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhoConfig {
    /// Minimum tolerable structure size.
    pub q: usize,
    /// Refit block size, `minimal_size + 2`.
    pub l: usize,
    pub t_max: usize,
}

impl IhoConfig {
    /// `q = round(q_fraction · n)`, raised to `l + 1` when smaller and capped
    /// at `n`.
    pub fn new(n: usize, kind: ModelKind, q_fraction: f64, t_max: usize) -> Self {
        let l = kind.block_size();
        let q = ((q_fraction * n as f64).round() as usize).max(l + 1).min(n);
        Self { q, l, t_max }
    }

    pub fn for_data(n: usize, kind: ModelKind) -> Self {
        Self::new(n, kind, DEFAULT_Q_FRACTION, DEFAULT_T_MAX)
    }

    pub fn validate(&self, n: usize) -> Result<(), HyperedgeError> {
        if self.t_max == 0 {
            return Err(HyperedgeError::InvalidConfig("t_max must be at least 1".into()));
        }
        if self.q < self.l + 1 {
            return Err(HyperedgeError::InvalidConfig(format!(
                "q = {} must exceed l = {}",
                self.q, self.l
            )));
        }
        if self.q > n {
            return Err(HyperedgeError::InvalidConfig(format!(
                "q = {} exceeds the {n} data points",
                self.q
            )));
        }
        Ok(())
    }
}

/// An optimized hypothesis together with its view of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    pub model: Model,
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    pub scale: ScaleEstimate,
    pub significant: Vec<bool>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl Hyperedge {
    /// Stopped early because a refit was degenerate.
    pub fn stalled(&self, t_max: usize) -> bool {
        !self.converged && self.iterations_used < t_max
    }
}

/// Vertex order by descending weight. Equal weights (in particular the zero
/// weights outside the kernel support) fall back to ascending residual, then
/// ascending index.
pub fn rank_vertices(weights: &[f64], residuals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_unstable_by(|&i, &j| {
        weights[j]
            .total_cmp(&weights[i])
            .then(residuals[i].total_cmp(&residuals[j]))
            .then(i.cmp(&j))
    });
    order
}

/// Exit test on the ranked squared weights of the last three iterations
/// (oldest first). Each entry holds at least the top `q` ranks in descending
/// order. Returns false with fewer than three iterations.
pub fn exit_criterion(history: &[Vec<f64>], q: usize, l: usize) -> bool {
    let [.., older, previous, current] = history else {
        return false;
    };
    assert!(q > l, "exit criterion needs q > l");
    let at_q = current[q - 1];
    let block = |w: &Vec<f64>| w[q - l - 1..q].iter().sum::<f64>();
    at_q < block(previous) && at_q < block(older)
}

/// Iterative hyperedge optimization starting from `initial`.
///
/// Each iteration computes residuals and weights, ranks the vertices, and
/// refits on the `l + 1` vertices at ranks `q - l ..= q`. The returned
/// hyperedge carries the final model's residuals, weights, significant set
/// and inlier scale. A degenerate refit ends the loop early with the last
/// valid model and `converged = false`.
pub fn optimize_hyperedge(
    initial: &Model,
    data: &Dataset,
    config: &IhoConfig,
    kappa: usize,
) -> Result<Hyperedge, HyperedgeError> {
    config.validate(data.len())?;
    let kind = initial.kind();
    let (q, l) = (config.q, config.l);
    let mut model = initial.clone();
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut iterations_used = 0;
    let mut converged = false;

    for _ in 0..config.t_max {
        let residuals = geometry::residuals(&model, data)?;
        let weights = kde::weight_scores(&residuals)?;
        let order = rank_vertices(&weights, &residuals);
        let block = &order[q - l - 1..q];
        let next = match geometry::refit(kind, data, block) {
            Ok(m) => m,
            Err(GeometryError::DegenerateSubset(_)) => break,
            Err(e) => return Err(e.into()),
        };
        if history.len() == 3 {
            history.remove(0);
        }
        history.push(order[..q].iter().map(|&i| weights[i] * weights[i]).collect());
        model = next;
        iterations_used += 1;
        if exit_criterion(&history, q, l) {
            converged = true;
            break;
        }
    }

    let residuals = geometry::residuals(&model, data)?;
    let est = kde::estimate_inliers(&residuals, kappa)?;
    Ok(Hyperedge {
        model,
        residuals,
        weights: est.weights,
        scale: est.scale,
        significant: est.significance.significant,
        iterations_used,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityMode {
    /// `exp(-r² / 2σ²)`.
    #[default]
    Residual,
    /// `exp(-ω / 2σ²)` on the weighting scores.
    Literal,
}

/// One column of `H`, with `σ` the hyperedge's inlier scale.
pub fn affinity_column(
    weights: &[f64],
    residuals: &[f64],
    scale: &ScaleEstimate,
    mode: AffinityMode,
) -> Vec<f64> {
    let denom = 2.0 * scale.scale * scale.scale;
    match mode {
        AffinityMode::Residual => residuals.iter().map(|r| (-r * r / denom).exp()).collect(),
        AffinityMode::Literal => weights.iter().map(|w| (-w / denom).exp()).collect(),
    }
}

/// The `n × m` vertex/hyperedge affinity matrix, grown one column at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl AffinityMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, data: Vec::new() }
    }

    pub fn from_columns(n: usize, columns: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut h = Self::new(n);
        for c in columns {
            h.push_column(&c);
        }
        h
    }

    pub fn push_column(&mut self, column: &[f64]) {
        assert_eq!(column.len(), self.n, "affinity column length");
        self.data.extend_from_slice(column);
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_hyperedges(&self) -> usize {
        self.data.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.n_hyperedges(), &self.data)
    }
}

/// The `n × n` hypergraph kernel `H Hᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphKernel {
    pub matrix: DMatrix<f64>,
}

pub fn assemble_kernel(h: &AffinityMatrix) -> HypergraphKernel {
    let hm = h.to_matrix();
    let mut g = &hm * hm.transpose();
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    HypergraphKernel { matrix: g }
}
