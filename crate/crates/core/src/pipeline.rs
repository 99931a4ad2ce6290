//! The complete fitting method.
//!
//! [`fit`] draws `m` hypotheses with guided sampling, turns each into an
//! optimized hyperedge, stacks the affinity columns into `H`, clusters the
//! hypergraph into `c` structures and finally extracts one model and one
//! inlier scale per structure, marking points far from their structure as
//! outliers.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterError, ClusterLabels};
use crate::geometry::{self, Dataset, GeometryError, Model, ModelKind};
use crate::hypergraph::{
    self, AffinityMatrix, AffinityMode, Hyperedge, HyperedgeError, IhoConfig, DEFAULT_Q_FRACTION,
    DEFAULT_T_MAX,
};
use crate::kde::{self, ScaleEstimate, DEFAULT_KAPPA};
use crate::sampling::{SamplingError, SamplingState, DEFAULT_UPDATE_FACTOR};

pub const DEFAULT_HYPOTHESES: usize = 200;
pub const DEFAULT_OUTLIER_MULTIPLIER: f64 = 2.5;
/// Consecutive degenerate minimal subsets tolerated per hypothesis.
pub const MAX_DEGENERATE_DRAWS: usize = 100;
/// Robust re-estimation rounds for each final structure model.
const FINAL_REFIT_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dataset does not match the model kind or contains non-finite values")]
    InvalidData,
    #[error("no minimal subset was fit after {0} degenerate draws")]
    TooManyDegenerateDraws(usize),
    #[error("all {0} hyperedges were rejected")]
    NoUsableHyperedges(usize),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Clustering(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomfConfig {
    /// Hypotheses drawn.
    pub m: usize,
    /// Structures to recover.
    pub c: usize,
    pub kind: ModelKind,
    /// `q = round(q_fraction · n)`.
    pub q_fraction: f64,
    pub t_max: usize,
    pub update_factor: f64,
    pub kappa: usize,
    pub affinity_mode: AffinityMode,
    pub seed: u64,
    pub outlier_multiplier: f64,
}

impl HomfConfig {
    pub fn new(kind: ModelKind, c: usize) -> Self {
        Self {
            m: DEFAULT_HYPOTHESES,
            c,
            kind,
            q_fraction: DEFAULT_Q_FRACTION,
            t_max: DEFAULT_T_MAX,
            update_factor: DEFAULT_UPDATE_FACTOR,
            kappa: DEFAULT_KAPPA,
            affinity_mode: AffinityMode::Residual,
            seed: 0,
            outlier_multiplier: DEFAULT_OUTLIER_MULTIPLIER,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn iho(&self, n: usize) -> IhoConfig {
        IhoConfig::new(n, self.kind, self.q_fraction, self.t_max)
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |msg: &str| Err(FitError::InvalidConfig(msg.into()));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.c == 0 {
            return bad("c must be at least 1");
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1");
        }
        if self.kappa == 0 {
            return bad("kappa must be at least 1");
        }
        if !(self.q_fraction.is_finite() && self.q_fraction > 0.0 && self.q_fraction <= 1.0) {
            return bad("q_fraction must lie in (0, 1]");
        }
        if !(self.update_factor.is_finite() && self.update_factor > 1.0) {
            return bad("update factor must be finite and greater than 1");
        }
        if self.outlier_multiplier.is_nan() || self.outlier_multiplier <= 0.0 {
            return bad("outlier multiplier must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    /// Hypotheses fit from a minimal subset.
    pub hypotheses_drawn: usize,
    /// Minimal subsets discarded as degenerate.
    pub degenerate_draws: usize,
    pub hyperedges_rejected: usize,
    pub iho_iterations: usize,
    pub hyperedges_converged: usize,
    pub isolated_vertices: usize,
    pub singular_kernel: bool,
    /// Excluded from reproducibility comparisons.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl FitStats {
    /// Equality ignoring wall time.
    pub fn same_counts(&self, other: &Self) -> bool {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        } == Self {
            wall_time_secs: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub labels: ClusterLabels,
    pub models: Vec<Model>,
    pub scales: Vec<ScaleEstimate>,
    pub hyperedges: Vec<Hyperedge>,
    pub stats: FitStats,
    /// Set when sampling stopped early; the result then covers the
    /// hyperedges gathered up to that point.
    pub failure: Option<FitError>,
}

enum Draw {
    Model(Model),
    Exhausted,
}

fn draw_hypothesis(
    state: &mut SamplingState,
    data: &Dataset,
    kind: ModelKind,
    stats: &mut FitStats,
) -> Result<Draw, FitError> {
    for _ in 0..MAX_DEGENERATE_DRAWS {
        let subset = state.draw_subset(kind.minimal_size())?;
        match geometry::fit_minimal(kind, data, &subset) {
            Ok(model) => {
                stats.hypotheses_drawn += 1;
                return Ok(Draw::Model(model));
            }
            Err(GeometryError::DegenerateSubset(_)) => stats.degenerate_draws += 1,
            Err(_) => return Err(FitError::InvalidData),
        }
    }
    Ok(Draw::Exhausted)
}

/// Runs the full method on `data`.
pub fn fit(data: &Dataset, config: &HomfConfig) -> Result<FitResult, FitError> {
    let start = Instant::now();
    config.validate()?;
    let kind = config.kind;
    if !data.supports(kind) || !data.all_finite() {
        return Err(FitError::InvalidData);
    }
    let n = data.len();
    let needed = (kind.minimal_size() * config.c).max(kind.block_size() + 1);
    if n < needed {
        return Err(FitError::InsufficientData { needed, got: n });
    }
    let iho = config.iho(n);
    iho.validate(n)
        .map_err(|e| FitError::InvalidConfig(e.to_string()))?;

    let mut state = SamplingState::new(n, config.seed)?.with_update_factor(config.update_factor)?;
    let mut stats = FitStats::default();
    let mut h = AffinityMatrix::new(n);
    let mut hyperedges = Vec::new();
    let mut failure = None;

    for _ in 0..config.m {
        let initial = match draw_hypothesis(&mut state, data, kind, &mut stats)? {
            Draw::Model(m) => m,
            Draw::Exhausted => {
                failure = Some(FitError::TooManyDegenerateDraws(MAX_DEGENERATE_DRAWS));
                break;
            }
        };
        match hypergraph::optimize_hyperedge(&initial, data, &iho, config.kappa) {
            Ok(e) if !e.stalled(iho.t_max) => {
                h.push_column(&hypergraph::affinity_column(
                    &e.weights,
                    &e.residuals,
                    &e.scale,
                    config.affinity_mode,
                ));
                state.update(&e.significant)?;
                stats.iho_iterations += e.iterations_used;
                stats.hyperedges_converged += e.converged as usize;
                hyperedges.push(e);
            }
            Ok(_) | Err(HyperedgeError::Geometry(_)) | Err(HyperedgeError::Uninformative(_)) => {
                stats.hyperedges_rejected += 1
            }
            Err(e @ HyperedgeError::InvalidConfig(_)) => {
                return Err(FitError::InvalidConfig(e.to_string()))
            }
        }
    }

    if hyperedges.is_empty() {
        return Err(failure.unwrap_or(FitError::NoUsableHyperedges(stats.hyperedges_rejected)));
    }

    let clusters = clustering::spectral_cluster_factored(&h, config.c, config.seed)?;
    stats.isolated_vertices = clusters.isolated.len();
    stats.singular_kernel = clusters.singular_kernel;

    let mut models = Vec::with_capacity(config.c);
    let mut scales = Vec::with_capacity(config.c);
    for k in 0..config.c as i32 {
        let members = clusters.labels.members(k);
        let (model, scale) = structure_model(
            data,
            &members,
            &hyperedges,
            config.kappa,
            config.outlier_multiplier,
        );
        models.push(model);
        scales.push(scale);
    }
    let labels = label_outliers(
        &clusters.labels,
        data,
        &models,
        &scales,
        config.outlier_multiplier,
    );
    stats.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(FitResult {
        labels,
        models,
        scales,
        hyperedges,
        stats,
        failure,
    })
}

/// Model and inlier scale for one cluster.
///
/// Clusters still contain the gross outliers the spectral step assigned to
/// them, so a plain least-squares fit over all members would be dragged off
/// the structure. The retained hyperedge with the densest support among the
/// members (members within `multiplier · σ_j`, divided by `σ_j`) seeds the
/// fit, which is then refit on the members that are both significant and
/// inside the outlier threshold.
///
/// Significance is decided on the residuals of the whole dataset: a cluster
/// that happens to hold no outliers offers no contrast on its own, and the
/// entropy test would then keep only its smallest residuals. The scale's
/// order statistic is the median of the significant members rather than the
/// `kappa`-th one, since the labeling threshold needs a low-variance
/// estimate.
fn structure_model(
    data: &Dataset,
    members: &[usize],
    hyperedges: &[Hyperedge],
    kappa: usize,
    multiplier: f64,
) -> (Model, ScaleEstimate) {
    let density = |e: &Hyperedge| {
        let cut = multiplier * e.scale.scale;
        members.iter().filter(|&&i| e.residuals[i] <= cut).count() as f64 / e.scale.scale
    };
    let best = (0..hyperedges.len())
        .map(|j| (j, density(&hyperedges[j])))
        .fold((0, f64::NEG_INFINITY), |acc, (j, s)| if s > acc.1 { (j, s) } else { acc });
    let seed = &hyperedges[best.0];
    let kind = seed.model.kind();
    let mut model = seed.model.clone();
    let mut scale = seed.scale;
    if members.len() <= kind.block_size() {
        return (model, scale);
    }
    let mut is_member = vec![false; data.len()];
    for &i in members {
        is_member[i] = true;
    }
    for round in 0..=FINAL_REFIT_ROUNDS {
        let Ok(r) = geometry::residuals(&model, data) else { break };
        let Ok(est) = kde::estimate_inliers(&r, kappa) else { break };
        let mask: Vec<bool> = est
            .significance
            .significant
            .iter()
            .zip(&is_member)
            .map(|(&s, &m)| s && m)
            .collect();
        let count = mask.iter().filter(|&&m| m).count();
        scale = kde::inlier_scale(&r, &mask, (count / 2).max(kappa)).unwrap_or(est.scale);
        if round == FINAL_REFIT_ROUNDS {
            break;
        }
        let cut = multiplier * scale.scale;
        let inliers: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| mask[i] && r[i] <= cut)
            .collect();
        if inliers.len() <= kind.block_size() {
            break;
        }
        match geometry::refit(kind, data, &inliers) {
            Ok(m) => model = m,
            Err(_) => break,
        }
    }
    (model, scale)
}

/// Residuals below this fraction of the largest coordinate magnitude are
/// treated as exact, so noiseless structures keep their rounding-level
/// residuals when the estimated scale collapses towards zero.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

fn coordinate_extent(data: &Dataset) -> f64 {
    let pts: Vec<f64> = match data {
        Dataset::Points(p) => p.iter().flat_map(|q| [q.x, q.y]).collect(),
        Dataset::Correspondences(c) => c
            .iter()
            .flat_map(|q| [q.p1.x, q.p1.y, q.p2.x, q.p2.y])
            .collect(),
    };
    pts.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Marks point `i` as an outlier when its residual to the model of its
/// cluster exceeds `multiplier` times that cluster's scale (plus a
/// rounding tolerance of [`RESIDUAL_TOLERANCE`] times the data extent).
pub fn label_outliers(
    labels: &ClusterLabels,
    data: &Dataset,
    models: &[Model],
    scales: &[ScaleEstimate],
    multiplier: f64,
) -> ClusterLabels {
    assert_eq!(models.len(), scales.len(), "one scale per model");
    let residuals: Vec<Option<Vec<f64>>> = models
        .iter()
        .map(|m| geometry::residuals(m, data).ok())
        .collect();
    let tol = RESIDUAL_TOLERANCE * coordinate_extent(data);
    let out = labels
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l < 0 {
                return l;
            }
            let k = l as usize;
            match &residuals[k] {
                Some(r) if r[i] > multiplier * scales[k].scale + tol => -1,
                _ => l,
            }
        })
        .collect();
    ClusterLabels::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Line2, Point2};

    fn two_exact_lines() -> (Dataset, Vec<Line2>) {
        let mut pts = Vec::new();
        for i in 0..100 {
            let t = i as f64 - 49.5;
            pts.push(Point2::new(t, t));
        }
        for i in 0..100 {
            let t = i as f64 - 49.5 + 0.25;
            pts.push(Point2::new(t, -t));
        }
        let lines = vec![Line2::new(1.0, -1.0, 0.0), Line2::new(1.0, 1.0, 0.0)];
        (Dataset::Points(pts), lines)
    }

    fn line_of(m: &Model) -> Line2 {
        match m {
            Model::Line(l) => *l,
            _ => panic!("not a line"),
        }
    }

    fn close(a: &Line2, b: &Line2, tol: f64) -> bool {
        let same = (a.a - b.a).abs() < tol && (a.b - b.b).abs() < tol && (a.c - b.c).abs() < tol;
        let flip = (a.a + b.a).abs() < tol && (a.b + b.b).abs() < tol && (a.c + b.c).abs() < tol;
        same || flip
    }

    #[test]
    fn separates_two_exact_lines() {
        let (data, truth) = two_exact_lines();
        let cfg = HomfConfig::new(ModelKind::Line2D, 2).with_seed(7);
        let r = fit(&data, &cfg).unwrap();
        assert!(r.failure.is_none());
        assert_eq!(r.models.len(), 2);
        let l = &r.labels.labels;
        assert!(l[..100].iter().all(|&x| x == l[0]) && l[0] >= 0);
        assert!(l[100..].iter().all(|&x| x == l[100]) && l[100] >= 0);
        assert_ne!(l[0], l[100]);
        let first = line_of(&r.models[l[0] as usize]);
        let second = line_of(&r.models[l[100] as usize]);
        assert!(close(&first, &truth[0], 1e-3), "{first:?}");
        assert!(close(&second, &truth[1], 1e-3), "{second:?}");
    }

    #[test]
    fn single_hypothesis_completes() {
        let (data, _) = two_exact_lines();
        let cfg = HomfConfig {
            m: 1,
            ..HomfConfig::new(ModelKind::Line2D, 2)
        };
        let r = fit(&data, &cfg).unwrap();
        assert!(r.failure.is_none());
        assert!(r.hyperedges.len() + r.stats.hyperedges_rejected == 1);
        assert_eq!(r.labels.len(), 200);
        assert_eq!(r.models.len(), 2);
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let (data, _) = two_exact_lines();
        let cfg = HomfConfig {
            m: 30,
            ..HomfConfig::new(ModelKind::Line2D, 2).with_seed(99)
        };
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data, &cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.models, b.models);
        assert_eq!(a.scales, b.scales);
        assert_eq!(a.hyperedges, b.hyperedges);
        assert!(a.stats.same_counts(&b.stats));
    }

    #[test]
    fn retained_hyperedges_converged_or_exhausted() {
        let (data, _) = two_exact_lines();
        let cfg = HomfConfig::new(ModelKind::Line2D, 2).with_seed(3);
        let r = fit(&data, &cfg).unwrap();
        assert!(r.hyperedges.iter().all(|e| e.converged || e.iterations_used == cfg.t_max));
        assert_eq!(r.hyperedges.len() + r.stats.hyperedges_rejected, cfg.m);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, _) = two_exact_lines();
        let cfg = HomfConfig::new(ModelKind::Line2D, 2);
        assert!(matches!(
            fit(&data, &HomfConfig { m: 0, ..cfg }),
            Err(FitError::InvalidConfig(_))
        ));
        assert!(matches!(
            fit(&data, &HomfConfig::new(ModelKind::Homography, 2)),
            Err(FitError::InvalidData)
        ));
        let tiny = Dataset::Points(vec![Point2::new(0.0, 0.0); 3]);
        assert!(matches!(fit(&tiny, &cfg), Err(FitError::InsufficientData { .. })));
        let nan = Dataset::Points(vec![Point2::new(f64::NAN, 0.0); 50]);
        assert!(matches!(fit(&nan, &cfg), Err(FitError::InvalidData)));
    }

    #[test]
    fn coincident_points_exhaust_the_draw_budget() {
        let data = Dataset::Points(vec![Point2::new(1.0, 1.0); 40]);
        let cfg = HomfConfig::new(ModelKind::Line2D, 1);
        assert!(matches!(fit(&data, &cfg), Err(FitError::TooManyDegenerateDraws(_))));
    }

    #[test]
    fn outlier_labeling() {
        let data = Dataset::Points(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 100.0),
        ]);
        let model = Model::Line(Line2::new(0.0, 1.0, 0.0));
        let scale = ScaleEstimate {
            scale: 1.0,
            kappa: 1,
            n_significant: 2,
        };
        let labels = ClusterLabels::new(vec![0, 0, 0]);
        let out = label_outliers(&labels, &data, std::slice::from_ref(&model), &[scale], 2.5);
        assert_eq!(out.labels, vec![0, 0, -1]);
        let out = label_outliers(&labels, &data, &[model], &[scale], f64::INFINITY);
        assert_eq!(out.labels, vec![0, 0, 0]);
    }
}
