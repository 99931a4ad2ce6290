//! Geometric model families: 2D lines, planar homographies and fundamental
//! matrices.
//!
//! Every family provides a minimal-subset solver ([`fit_minimal`]), a
//! least-squares solver for larger subsets ([`refit`]) and a residual
//! function ([`residuals`]). Lines use orthogonal distance, homographies the
//! symmetric transfer error and fundamental matrices the Sampson distance.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residuals are clamped here so that points mapped to infinity stay finite.
pub const MAX_RESIDUAL: f64 = 1e12;

// Relative tolerance used to detect rank deficiency and collinearity.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate subset: {0}")]
    DegenerateSubset(&'static str),
    #[error("model kind {model:?} does not match data of kind {data}")]
    KindMismatch { model: ModelKind, data: &'static str },
    #[error("{kind:?} needs {expected} observations, got {got}")]
    SubsetSize {
        kind: ModelKind,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn homogeneous(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A point seen in two views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub p1: Point2,
    pub p2: Point2,
}

impl Correspondence {
    pub const fn new(p1: Point2, p2: Point2) -> Self {
        Self { p1, p2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "line")]
    Line2D,
    Homography,
    Fundamental,
}

impl ModelKind {
    /// Number of observations that determine a model.
    pub const fn minimal_size(self) -> usize {
        match self {
            ModelKind::Line2D => 2,
            ModelKind::Homography => 4,
            ModelKind::Fundamental => 8,
        }
    }

    /// Size of the higher-than-minimal refit block, `minimal_size + 2`.
    pub const fn block_size(self) -> usize {
        self.minimal_size() + 2
    }

    fn takes_correspondences(self) -> bool {
        !matches!(self, ModelKind::Line2D)
    }
}

/// Input observations. Lines are fitted to points, the two-view models to
/// correspondences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dataset {
    Points(Vec<Point2>),
    Correspondences(Vec<Correspondence>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Points(p) => p.len(),
            Dataset::Correspondences(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self) -> &'static str {
        match self {
            Dataset::Points(_) => "points",
            Dataset::Correspondences(_) => "correspondences",
        }
    }

    pub fn supports(&self, kind: ModelKind) -> bool {
        matches!(self, Dataset::Correspondences(_)) == kind.takes_correspondences()
    }

    fn check(&self, kind: ModelKind) -> Result<(), GeometryError> {
        if self.supports(kind) {
            Ok(())
        } else {
            Err(GeometryError::KindMismatch {
                model: kind,
                data: self.label(),
            })
        }
    }

    /// Copies the observations at `indices` into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        match self {
            Dataset::Points(p) => Dataset::Points(indices.iter().map(|&i| p[i]).collect()),
            Dataset::Correspondences(c) => {
                Dataset::Correspondences(indices.iter().map(|&i| c[i]).collect())
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        let ok = |p: &Point2| p.x.is_finite() && p.y.is_finite();
        match self {
            Dataset::Points(p) => p.iter().all(ok),
            Dataset::Correspondences(c) => c.iter().all(|c| ok(&c.p1) && ok(&c.p2)),
        }
    }
}

/// Line `a*x + b*y + c = 0` with `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line2 {
    /// Normalizes `(a, b, c)` so that `a² + b² = 1` and the largest-magnitude
    /// coefficient is positive.
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        let norm = a.hypot(b);
        let mut v = [a / norm, b / norm, c / norm];
        if largest_magnitude(&v) < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Self {
            a: v[0],
            b: v[1],
            c: v[2],
        }
    }

    pub fn distance(&self, p: Point2) -> f64 {
        (self.a * p.x + self.b * p.y + self.c).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum Model {
    Line(Line2),
    Homography(Matrix3<f64>),
    Fundamental(Matrix3<f64>),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Line(_) => ModelKind::Line2D,
            Model::Homography(_) => ModelKind::Homography,
            Model::Fundamental(_) => ModelKind::Fundamental,
        }
    }

    /// Flat parameter vector: `(a, b, c)` for lines, row-major entries for
    /// matrices.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Model::Line(l) => vec![l.a, l.b, l.c],
            Model::Homography(m) | Model::Fundamental(m) => {
                m.transpose().iter().copied().collect()
            }
        }
    }

    /// The same model with its parameters multiplied by `-1`.
    pub fn negated(&self) -> Model {
        match self {
            Model::Line(l) => Model::Line(Line2 {
                a: -l.a,
                b: -l.b,
                c: -l.c,
            }),
            Model::Homography(m) => Model::Homography(-m),
            Model::Fundamental(m) => Model::Fundamental(-m),
        }
    }
}

fn largest_magnitude(v: &[f64]) -> f64 {
    v.iter()
        .copied()
        .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best })
}

fn canonical_matrix(m: Matrix3<f64>) -> Matrix3<f64> {
    let m = m / m.norm();
    if largest_magnitude(m.as_slice()) < 0.0 {
        -m
    } else {
        m
    }
}

/// Fits a model to exactly `minimal_size(kind)` observations.
pub fn fit_minimal(
    kind: ModelKind,
    data: &Dataset,
    subset: &[usize],
) -> Result<Model, GeometryError> {
    data.check(kind)?;
    if subset.len() != kind.minimal_size() {
        return Err(GeometryError::SubsetSize {
            kind,
            expected: kind.minimal_size(),
            got: subset.len(),
        });
    }
    match (kind, data) {
        (ModelKind::Line2D, Dataset::Points(pts)) => {
            line_through(pts[subset[0]], pts[subset[1]]).map(Model::Line)
        }
        (ModelKind::Homography, Dataset::Correspondences(c)) => {
            let corrs: Vec<_> = subset.iter().map(|&i| c[i]).collect();
            for view in [|c: &Correspondence| c.p1, |c: &Correspondence| c.p2] {
                let pts: Vec<_> = corrs.iter().map(view).collect();
                if has_collinear_triple(&pts) {
                    return Err(GeometryError::DegenerateSubset(
                        "three collinear points in a homography sample",
                    ));
                }
            }
            homography_dlt(&corrs, true).map(Model::Homography)
        }
        (ModelKind::Fundamental, Dataset::Correspondences(c)) => {
            let corrs: Vec<_> = subset.iter().map(|&i| c[i]).collect();
            fundamental_eight_point(&corrs, true).map(Model::Fundamental)
        }
        _ => unreachable!("kind checked above"),
    }
}

/// Least-squares fit to at least `minimal_size(kind)` observations:
/// orthogonal regression for lines, normalized DLT for homographies and the
/// normalized eight-point algorithm for fundamental matrices.
pub fn refit(kind: ModelKind, data: &Dataset, subset: &[usize]) -> Result<Model, GeometryError> {
    data.check(kind)?;
    if subset.len() < kind.minimal_size() {
        return Err(GeometryError::SubsetSize {
            kind,
            expected: kind.minimal_size(),
            got: subset.len(),
        });
    }
    match (kind, data) {
        (ModelKind::Line2D, Dataset::Points(pts)) => {
            let sel: Vec<_> = subset.iter().map(|&i| pts[i]).collect();
            orthogonal_regression(&sel).map(Model::Line)
        }
        (ModelKind::Homography, Dataset::Correspondences(c)) => {
            let corrs: Vec<_> = subset.iter().map(|&i| c[i]).collect();
            homography_dlt(&corrs, true).map(Model::Homography)
        }
        (ModelKind::Fundamental, Dataset::Correspondences(c)) => {
            let corrs: Vec<_> = subset.iter().map(|&i| c[i]).collect();
            fundamental_eight_point(&corrs, true).map(Model::Fundamental)
        }
        _ => unreachable!("kind checked above"),
    }
}

/// Residual of every observation to `model`.
pub fn residuals(model: &Model, data: &Dataset) -> Result<Vec<f64>, GeometryError> {
    data.check(model.kind())?;
    Ok(match (model, data) {
        (Model::Line(l), Dataset::Points(pts)) => pts.iter().map(|&p| l.distance(p)).collect(),
        (Model::Homography(h), Dataset::Correspondences(c)) => {
            let inv = h.try_inverse();
            c.iter()
                .map(|c| symmetric_transfer(h, inv.as_ref(), c))
                .collect()
        }
        (Model::Fundamental(f), Dataset::Correspondences(c)) => {
            c.iter().map(|c| sampson_distance(f, c)).collect()
        }
        _ => unreachable!("kind checked above"),
    })
}

fn clamp_residual(d: f64) -> f64 {
    if d.is_finite() {
        d.min(MAX_RESIDUAL)
    } else {
        MAX_RESIDUAL
    }
}

fn transfer(h: &Matrix3<f64>, from: Point2, to: Point2) -> f64 {
    let q = h * from.homogeneous();
    if q.z.abs() < f64::MIN_POSITIVE {
        return MAX_RESIDUAL;
    }
    clamp_residual(Point2::new(q.x / q.z, q.y / q.z).distance(to))
}

fn symmetric_transfer(h: &Matrix3<f64>, inv: Option<&Matrix3<f64>>, c: &Correspondence) -> f64 {
    let forward = transfer(h, c.p1, c.p2);
    match inv {
        Some(inv) => 0.5 * (forward + transfer(inv, c.p2, c.p1)),
        None => forward,
    }
}

fn sampson_distance(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let x1 = c.p1.homogeneous();
    let x2 = c.p2.homogeneous();
    let fx1 = f * x1;
    let ftx2 = f.transpose() * x2;
    let num = x2.dot(&fx1);
    let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        MAX_RESIDUAL
    } else {
        clamp_residual(num.abs() / den.sqrt())
    }
}

fn line_through(p: Point2, q: Point2) -> Result<Line2, GeometryError> {
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    let scale = 1f64.max(p.x.abs()).max(p.y.abs()).max(q.x.abs()).max(q.y.abs());
    if dx.hypot(dy) <= 1e-12 * scale {
        return Err(GeometryError::DegenerateSubset("coincident points"));
    }
    let (a, b) = (-dy, dx);
    Ok(Line2::new(a, b, -(a * p.x + b * p.y)))
}

fn orthogonal_regression(pts: &[Point2]) -> Result<Line2, GeometryError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let scale = 1f64.max(cx.abs()).max(cy.abs());
    if sxx + syy <= 1e-24 * scale * scale * n {
        return Err(GeometryError::DegenerateSubset("all points coincide"));
    }
    // Major axis of the scatter matrix; the line normal is perpendicular.
    // atan2(0, 0) = 0 gives a fixed choice for isotropic scatter.
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (a, b) = (-theta.sin(), theta.cos());
    Ok(Line2::new(a, b, -(a * cx + b * cy)))
}

fn has_collinear_triple(pts: &[Point2]) -> bool {
    let k = pts.len();
    for i in 0..k {
        for j in i + 1..k {
            for l in j + 1..k {
                let (u, v) = (
                    (pts[j].x - pts[i].x, pts[j].y - pts[i].y),
                    (pts[l].x - pts[i].x, pts[l].y - pts[i].y),
                );
                let cross = (u.0 * v.1 - u.1 * v.0).abs();
                let lens = u.0.hypot(u.1) * v.0.hypot(v.1);
                if lens == 0.0 || cross <= DEGENERACY_TOL * lens {
                    return true;
                }
            }
        }
    }
    false
}

/// Similarity transform moving the centroid to the origin with mean distance
/// `√2`. Returns `None` when all points coincide.
pub fn hartley_normalization(pts: &[Point2]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean > 0.0) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: Point2) -> Point2 {
    let q = t * p.homogeneous();
    Point2::new(q.x / q.z, q.y / q.z)
}

fn normalizers(
    corrs: &[Correspondence],
    normalize: bool,
) -> Result<(Matrix3<f64>, Matrix3<f64>), GeometryError> {
    if !normalize {
        return Ok((Matrix3::identity(), Matrix3::identity()));
    }
    let p1: Vec<_> = corrs.iter().map(|c| c.p1).collect();
    let p2: Vec<_> = corrs.iter().map(|c| c.p2).collect();
    match (hartley_normalization(&p1), hartley_normalization(&p2)) {
        (Some(t1), Some(t2)) => Ok((t1, t2)),
        _ => Err(GeometryError::DegenerateSubset("all points coincide")),
    }
}

fn homography_design(corrs: &[Correspondence], t1: &Matrix3<f64>, t2: &Matrix3<f64>) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(2 * corrs.len(), 9);
    for (i, c) in corrs.iter().enumerate() {
        let p = apply(t1, c.p1);
        let q = apply(t2, c.p2);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    a
}

fn fundamental_design(
    corrs: &[Correspondence],
    t1: &Matrix3<f64>,
    t2: &Matrix3<f64>,
) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(corrs.len(), 9);
    for (i, c) in corrs.iter().enumerate() {
        let p = apply(t1, c.p1);
        let q = apply(t2, c.p2);
        let row = [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0];
        for (j, v) in row.into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    a
}

/// Right null vector of a 9-column design matrix together with its singular
/// values in descending order.
fn null_vector(a: &DMatrix<f64>) -> (Matrix3<f64>, Vec<f64>) {
    // Pad to at least 9 rows so that the SVD yields all 9 right vectors.
    let a = if a.nrows() < 9 {
        a.clone().resize_vertically(9, 0.0)
    } else {
        a.clone()
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;
    let min = (0..sv.len())
        .min_by(|&i, &j| sv[i].total_cmp(&sv[j]))
        .expect("nine singular values");
    let row = v_t.row(min);
    let m = Matrix3::from_row_slice(&row.iter().copied().collect::<Vec<_>>());
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (m, sorted)
}

fn check_null_space(sorted: &[f64]) -> Result<(), GeometryError> {
    if sorted[7] <= DEGENERACY_TOL * sorted[0] {
        Err(GeometryError::DegenerateSubset(
            "design matrix has more than one null vector",
        ))
    } else {
        Ok(())
    }
}

/// Direct linear transform for `p2 ~ H p1`, optionally with Hartley
/// normalization of both views.
pub fn homography_dlt(
    corrs: &[Correspondence],
    normalize: bool,
) -> Result<Matrix3<f64>, GeometryError> {
    if corrs.len() < 4 {
        return Err(GeometryError::SubsetSize {
            kind: ModelKind::Homography,
            expected: 4,
            got: corrs.len(),
        });
    }
    let (t1, t2) = normalizers(corrs, normalize)?;
    let (h, sv) = null_vector(&homography_design(corrs, &t1, &t2));
    check_null_space(&sv)?;
    let t2_inv = t2
        .try_inverse()
        .ok_or(GeometryError::DegenerateSubset("singular normalization"))?;
    let h = t2_inv * h * t1;
    if !h.iter().all(|v| v.is_finite()) || h.norm() == 0.0 {
        return Err(GeometryError::DegenerateSubset("non-finite homography"));
    }
    Ok(canonical_matrix(h))
}

/// Eight-point algorithm with rank-2 projection, optionally with Hartley
/// normalization of both views.
pub fn fundamental_eight_point(
    corrs: &[Correspondence],
    normalize: bool,
) -> Result<Matrix3<f64>, GeometryError> {
    if corrs.len() < 8 {
        return Err(GeometryError::SubsetSize {
            kind: ModelKind::Fundamental,
            expected: 8,
            got: corrs.len(),
        });
    }
    let (t1, t2) = normalizers(corrs, normalize)?;
    let (f, sv) = null_vector(&fundamental_design(corrs, &t1, &t2));
    check_null_space(&sv)?;
    let f = t2.transpose() * rank_two(f) * t1;
    if !f.iter().all(|v| v.is_finite()) || f.norm() == 0.0 {
        return Err(GeometryError::DegenerateSubset("non-finite fundamental matrix"));
    }
    Ok(canonical_matrix(rank_two(f)))
}

/// Closest rank-2 matrix in Frobenius norm.
pub fn rank_two(m: Matrix3<f64>) -> Matrix3<f64> {
    let mut svd = m.svd(true, true);
    let sv = &mut svd.singular_values;
    let min = (0..3)
        .min_by(|&i, &j| sv[i].total_cmp(&sv[j]))
        .expect("three singular values");
    sv[min] = 0.0;
    svd.recompose().expect("U and V^T computed")
}

/// Ratio of the largest to the second-smallest singular value of the DLT
/// design matrix. The smallest one vanishes on exact data, so this is the
/// conditioning that matters for the null vector.
pub fn dlt_condition_number(corrs: &[Correspondence], normalize: bool) -> Option<f64> {
    let (t1, t2) = normalizers(corrs, normalize).ok()?;
    let (_, sv) = null_vector(&homography_design(corrs, &t1, &t2));
    Some(sv[0] / sv[7])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(v: &[(f64, f64)]) -> Dataset {
        Dataset::Points(v.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    fn map(h: &Matrix3<f64>, p: Point2) -> Point2 {
        let q = h * p.homogeneous();
        Point2::new(q.x / q.z, q.y / q.z)
    }

    #[test]
    fn two_point_line() {
        let m = fit_minimal(ModelKind::Line2D, &pts(&[(0.0, 0.0), (2.0, 2.0)]), &all(2)).unwrap();
        let Model::Line(l) = m else { panic!() };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(l.a, h, epsilon = 1e-12);
        assert_abs_diff_eq!(l.b, -h, epsilon = 1e-12);
        assert_abs_diff_eq!(l.c, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let err = fit_minimal(ModelKind::Line2D, &pts(&[(1.0, 1.0), (1.0, 1.0)]), &all(2));
        assert!(matches!(err, Err(GeometryError::DegenerateSubset(_))));
        let err = refit(ModelKind::Line2D, &pts(&[(1.0, 1.0); 5]), &all(5));
        assert!(matches!(err, Err(GeometryError::DegenerateSubset(_))));
    }

    #[test]
    fn wrong_sizes_and_kinds() {
        let d = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)]);
        assert!(matches!(
            fit_minimal(ModelKind::Line2D, &d, &all(3)),
            Err(GeometryError::SubsetSize { .. })
        ));
        assert!(matches!(
            fit_minimal(ModelKind::Homography, &d, &all(3)),
            Err(GeometryError::KindMismatch { .. })
        ));
        let l = Model::Line(Line2::new(1.0, 0.0, 0.0));
        let c = Dataset::Correspondences(vec![]);
        assert!(matches!(residuals(&l, &c), Err(GeometryError::KindMismatch { .. })));
    }

    #[test]
    fn point_line_distance() {
        let l = Model::Line(Line2::new(1.0, -1.0, 0.0));
        let r = residuals(&l, &pts(&[(1.0, 0.0)])).unwrap();
        assert_abs_diff_eq!(r[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn refit_collinear_points() {
        let d = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let m = refit(ModelKind::Line2D, &d, &all(4)).unwrap();
        assert!(residuals(&m, &d).unwrap().iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn refit_symmetric_configuration_is_deterministic() {
        let d = pts(&[(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)]);
        let a = refit(ModelKind::Line2D, &d, &all(4)).unwrap();
        let b = refit(ModelKind::Line2D, &d, &[2, 0, 3, 1]).unwrap();
        let Model::Line(l) = a.clone() else { panic!() };
        assert_abs_diff_eq!(l.c, 0.0, epsilon = 1e-12);
        assert_eq!(a, b);
    }

    #[test]
    fn identity_homography_from_unit_square() {
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let d = Dataset::Correspondences(
            corners
                .iter()
                .map(|&(x, y)| Correspondence::new(Point2::new(x, y), Point2::new(x, y)))
                .collect(),
        );
        let Model::Homography(h) = fit_minimal(ModelKind::Homography, &d, &all(4)).unwrap() else {
            panic!()
        };
        let expected = Matrix3::identity() / 3f64.sqrt();
        assert!((h - expected).norm() < 1e-9, "{h}");
        let r = residuals(
            &Model::Homography(h),
            &Dataset::Correspondences(vec![Correspondence::new(
                Point2::new(3.0, 4.0),
                Point2::new(3.0, 4.0),
            )]),
        )
        .unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn collinear_homography_sample_is_degenerate() {
        let d = Dataset::Correspondences(
            [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 1.0)]
                .iter()
                .map(|&(x, y)| Correspondence::new(Point2::new(x, y), Point2::new(x + 1.0, y)))
                .collect(),
        );
        assert!(matches!(
            fit_minimal(ModelKind::Homography, &d, &all(4)),
            Err(GeometryError::DegenerateSubset(_))
        ));
    }

    #[test]
    fn homography_refit_recovers_generator() {
        let h = Matrix3::new(1.2, 0.1, 30.0, -0.05, 0.9, -12.0, 1e-4, -2e-4, 1.0);
        let src = [
            (10.0, 20.0),
            (300.0, 40.0),
            (280.0, 250.0),
            (15.0, 230.0),
            (150.0, 120.0),
            (60.0, 180.0),
        ];
        let d = Dataset::Correspondences(
            src.iter()
                .map(|&(x, y)| {
                    let p = Point2::new(x, y);
                    Correspondence::new(p, map(&h, p))
                })
                .collect(),
        );
        let Model::Homography(est) = refit(ModelKind::Homography, &d, &all(6)).unwrap() else {
            panic!()
        };
        let expected = canonical_matrix(h);
        assert!((est - expected).norm() < 1e-6);
    }

    #[test]
    fn normalization_agrees_with_plain_dlt_and_improves_conditioning() {
        let h = Matrix3::new(0.8, -0.2, 5.0, 0.15, 1.1, -3.0, 2e-4, 1e-4, 1.0);
        let src = [
            (120.0, 80.0),
            (610.0, 95.0),
            (590.0, 430.0),
            (100.0, 455.0),
            (350.0, 260.0),
            (240.0, 390.0),
        ];
        let corrs: Vec<_> = src
            .iter()
            .map(|&(x, y)| {
                let p = Point2::new(x, y);
                Correspondence::new(p, map(&h, p))
            })
            .collect();
        let a = homography_dlt(&corrs, true).unwrap();
        let b = homography_dlt(&corrs, false).unwrap();
        assert!((a - b).norm() < 1e-6);
        let raw = dlt_condition_number(&corrs, false).unwrap();
        let norm = dlt_condition_number(&corrs, true).unwrap();
        assert!(norm < raw, "{norm} vs {raw}");
    }

    fn synthetic_two_view() -> (Matrix3<f64>, Vec<Correspondence>) {
        // Camera 1 at the origin, camera 2 rotated about y and translated.
        let k = Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0);
        let (s, c) = (0.1f64.sin(), 0.1f64.cos());
        let r = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        let t = Vector3::new(1.0, 0.2, 0.1);
        let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let k_inv = k.try_inverse().unwrap();
        let f = k_inv.transpose() * tx * r * k_inv;
        let world = [
            (-1.0, -0.5, 5.0),
            (1.2, 0.4, 6.0),
            (0.3, -0.8, 4.5),
            (-0.7, 0.9, 7.0),
            (0.9, 1.1, 5.5),
            (-1.3, 0.1, 8.0),
            (0.1, 0.2, 4.0),
            (1.5, -1.0, 9.0),
            (-0.2, -1.2, 6.5),
            (0.6, 0.7, 7.5),
        ];
        let corrs = world
            .iter()
            .map(|&(x, y, z)| {
                let xw = Vector3::new(x, y, z);
                let a = k * xw;
                let b = k * (r * xw + t);
                Correspondence::new(
                    Point2::new(a.x / a.z, a.y / a.z),
                    Point2::new(b.x / b.z, b.y / b.z),
                )
            })
            .collect();
        (f, corrs)
    }

    #[test]
    fn fundamental_from_synthetic_cameras() {
        let (f_true, corrs) = synthetic_two_view();
        let d = Dataset::Correspondences(corrs);
        let r = residuals(&Model::Fundamental(canonical_matrix(f_true)), &d).unwrap();
        assert!(r.iter().all(|&v| v < 1e-9), "{r:?}");

        let m = fit_minimal(ModelKind::Fundamental, &d, &all(8)).unwrap();
        let Model::Fundamental(f) = m.clone() else { panic!() };
        assert_abs_diff_eq!(f.norm(), 1.0, epsilon = 1e-9);
        assert!(f.determinant().abs() < 1e-12);
        let r = residuals(&m, &d).unwrap();
        assert!(r.iter().all(|&v| v < 1e-6), "{r:?}");
        let refitted = refit(ModelKind::Fundamental, &d, &all(10)).unwrap();
        assert!(residuals(&refitted, &d).unwrap().iter().all(|&v| v < 1e-6));
    }

    #[test]
    fn residuals_ignore_sign_of_parameters() {
        let (_, corrs) = synthetic_two_view();
        let d = Dataset::Correspondences(corrs);
        for kind in [ModelKind::Homography, ModelKind::Fundamental] {
            let m = refit(kind, &d, &all(10)).unwrap();
            assert_eq!(residuals(&m, &d).unwrap(), residuals(&m.negated(), &d).unwrap());
        }
    }
}
