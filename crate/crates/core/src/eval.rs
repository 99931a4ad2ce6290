//! Synthetic data, evaluation metrics and the scale-estimation benchmark.

use std::io::{self, Write};

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Dataset, Line2, Model, Point2};
use crate::kde::{self, BaselineMethod};

pub const DEFAULT_TOTAL: usize = 2000;
pub const DEFAULT_RIGHT: usize = 100;
pub const DEFAULT_HALF_LENGTH: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("scales must be positive, got {0} and {1}")]
    NonPositiveScale(f64, f64),
    #[error("label vectors differ in length ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("invalid benchmark setup: {0}")]
    InvalidBench(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    /// Square centred at the origin.
    pub fn square(half_width: f64) -> Self {
        Self {
            min: Point2::new(-half_width, -half_width),
            max: Point2::new(half_width, half_width),
        }
    }
}

/// Two perpendicular segments crossing at the origin plus uniform outliers.
///
/// The left structure runs along `(-1, 1)/√2`, the right one along
/// `(1, 1)/√2`; both have half-length `half_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub total_n: usize,
    pub left_n: usize,
    pub right_n: usize,
    pub noise_sigma: f64,
    pub half_length: f64,
    pub bbox: BBox,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Default geometry. The outlier box is the bounding square of both
    /// segments with its side doubled.
    pub fn new(total_n: usize, left_n: usize, right_n: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            total_n,
            left_n,
            right_n,
            noise_sigma,
            half_length: DEFAULT_HALF_LENGTH,
            bbox: default_bbox(DEFAULT_HALF_LENGTH),
            seed,
        }
    }

    pub fn outlier_n(&self) -> usize {
        self.total_n.saturating_sub(self.left_n + self.right_n)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSpec(m));
        if self.left_n + self.right_n > self.total_n {
            return bad(format!(
                "left ({}) + right ({}) exceeds total ({})",
                self.left_n, self.right_n, self.total_n
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if !(self.half_length.is_finite() && self.half_length > 0.0) {
            return bad("half length must be positive".into());
        }
        let b = &self.bbox;
        if !(b.min.x < b.max.x && b.min.y < b.max.y) || !(b.min.x.is_finite() && b.max.x.is_finite())
            || !(b.min.y.is_finite() && b.max.y.is_finite())
        {
            return bad("bounding box must be finite with min < max".into());
        }
        Ok(())
    }
}

pub fn default_bbox(half_length: f64) -> BBox {
    BBox::square(2.0 * half_length * std::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    /// 0 = left line, 1 = right line, -1 = outlier.
    pub gt_labels: Vec<i32>,
    pub true_models: Vec<Model>,
    pub true_scale: f64,
}

pub fn left_line() -> Line2 {
    Line2::new(1.0, 1.0, 0.0)
}

pub fn right_line() -> Line2 {
    Line2::new(1.0, -1.0, 0.0)
}

/// Points are emitted left line first, then right line, then outliers.
pub fn gen_two_lines(spec: &SyntheticSpec) -> Result<LabeledDataset, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let along = Uniform::new_inclusive(-spec.half_length, spec.half_length)
        .map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // (direction, unit normal) for each structure.
    let structures = [((-h, h), (h, h)), ((h, h), (h, -h))];
    let mut pts = Vec::with_capacity(spec.total_n);
    let mut labels = Vec::with_capacity(spec.total_n);
    for (k, (count, ((dx, dy), (nx, ny)))) in [spec.left_n, spec.right_n]
        .into_iter()
        .zip(structures)
        .enumerate()
    {
        for _ in 0..count {
            let t = along.sample(&mut rng);
            let o = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            pts.push(Point2::new(t * dx + o * nx, t * dy + o * ny));
            labels.push(k as i32);
        }
    }
    let b = spec.bbox;
    let ux = Uniform::new_inclusive(b.min.x, b.max.x).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let uy = Uniform::new_inclusive(b.min.y, b.max.y).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    for _ in 0..spec.outlier_n() {
        let x = ux.sample(&mut rng);
        let y = uy.sample(&mut rng);
        pts.push(Point2::new(x, y));
        labels.push(-1);
    }
    Ok(LabeledDataset {
        data: Dataset::Points(pts),
        gt_labels: labels,
        true_models: vec![Model::Line(left_line()), Model::Line(right_line())],
        true_scale: spec.noise_sigma,
    })
}

/// `max(s_e/s_t, s_t/s_e) - 1`.
pub fn scale_error(estimated: f64, truth: f64) -> Result<f64, EvalError> {
    if !(estimated > 0.0 && truth > 0.0) || !estimated.is_finite() || !truth.is_finite() {
        return Err(EvalError::NonPositiveScale(estimated, truth));
    }
    Ok((estimated / truth).max(truth / estimated) - 1.0)
}

fn distinct_ids(labels: &[i32]) -> Vec<i32> {
    let mut ids: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Percentage of points mislabeled under the best one-to-one matching of
/// predicted cluster ids to ground-truth ids. Negative labels (outliers)
/// only ever match negative labels.
pub fn misclassification(pred: &[i32], gt: &[i32]) -> Result<f64, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let n = pred.len();
    if n == 0 {
        return Ok(0.0);
    }
    let pid = distinct_ids(pred);
    let gid = distinct_ids(gt);
    let mut counts = vec![vec![0i64; gid.len()]; pid.len()];
    let mut matched = 0i64;
    for (&p, &g) in pred.iter().zip(gt) {
        match (p < 0, g < 0) {
            (true, true) => matched += 1,
            (false, false) => {
                let a = pid.binary_search(&p).unwrap();
                let b = gid.binary_search(&g).unwrap();
                counts[a][b] += 1;
            }
            _ => {}
        }
    }
    if !pid.is_empty() && !gid.is_empty() {
        // Kuhn-Munkres needs rows <= columns.
        let (rows, cols) = if pid.len() <= gid.len() {
            (pid.len(), gid.len())
        } else {
            (gid.len(), pid.len())
        };
        let values = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| if pid.len() <= gid.len() { counts[r][c] } else { counts[c][r] })
            .collect();
        let m = Matrix::from_vec(rows, cols, values).expect("contingency shape");
        matched += kuhn_munkres(&m).0;
    }
    Ok(100.0 * (n as i64 - matched) as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Aie,
    Med,
    Mad,
    Ikose,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Aie, Estimator::Med, Estimator::Mad, Estimator::Ikose];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Aie => "aie",
            Estimator::Med => "med",
            Estimator::Mad => "mad",
            Estimator::Ikose => "ikose",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name().eq_ignore_ascii_case(s.trim()))
    }

    pub fn estimate(self, residuals: &[f64], kappa: usize) -> Result<f64, kde::KdeError> {
        match self {
            Estimator::Aie => Ok(kde::estimate_inliers(residuals, kappa)?.scale.scale),
            Estimator::Med => Ok(kde::baseline_scale(BaselineMethod::Med, residuals, kappa)?.scale),
            Estimator::Mad => Ok(kde::baseline_scale(BaselineMethod::Mad, residuals, kappa)?.scale),
            Estimator::Ikose => Ok(kde::baseline_scale(BaselineMethod::Ikose, residuals, kappa)?.scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ratios: Vec<f64>,
    pub runs: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub kappa: usize,
    pub total_n: usize,
    pub right_n: usize,
    pub noise_sigma: f64,
    pub half_length: f64,
}

impl BenchConfig {
    pub fn new(ratios: Vec<f64>, runs: usize, estimators: Vec<Estimator>, seed: u64) -> Self {
        Self {
            ratios,
            runs,
            estimators,
            seed,
            kappa: kde::DEFAULT_KAPPA,
            total_n: DEFAULT_TOTAL,
            right_n: DEFAULT_RIGHT,
            noise_sigma: 1.0,
            half_length: DEFAULT_HALF_LENGTH,
        }
    }

    /// Synthetic spec for one (ratio, run) cell. The outlier ratio is taken
    /// with respect to the left line: every non-left point is an outlier.
    pub fn spec_for(&self, ratio_index: usize, run: usize) -> SyntheticSpec {
        let ratio = self.ratios[ratio_index];
        let left = ((self.total_n as f64) * (1.0 - ratio)).round() as usize;
        SyntheticSpec {
            total_n: self.total_n,
            left_n: left.min(self.total_n - self.right_n.min(self.total_n)),
            right_n: self.right_n,
            noise_sigma: self.noise_sigma,
            half_length: self.half_length,
            bbox: default_bbox(self.half_length),
            seed: derive_seed(self.seed, ratio_index as u64, run as u64),
        }
    }
}

/// Evenly spaced ratios from `start` to `stop` inclusive.
pub fn ratio_sweep(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && start <= stop) {
        return Err(EvalError::InvalidBench(format!("bad sweep {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// SplitMix64 finalizer over the run coordinates, giving each benchmark
/// cell its own seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    mix(mix(mix(seed) ^ a) ^ b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: Estimator,
    /// `None` for the aggregate over the whole sweep.
    pub ratio: Option<f64>,
    pub std: f64,
    pub mean: f64,
    pub med: f64,
    pub max: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, estimator: Estimator, ratio: f64) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.ratio.is_some_and(|x| (x - ratio).abs() < 1e-9))
    }

    pub fn aggregate(&self, estimator: Estimator) -> Option<&BenchRow> {
        self.aggregates.iter().find(|r| r.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "estimator,ratio,std,mean,med,max,failures")?;
        for r in self.rows.iter().chain(&self.aggregates) {
            let ratio = r.ratio.map_or_else(|| "all".to_string(), fmt_sig);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.estimator.name(),
                ratio,
                fmt_sig(r.std),
                fmt_sig(r.mean),
                fmt_sig(r.med),
                fmt_sig(r.max),
                r.failures
            )?;
        }
        Ok(())
    }
}

fn summarize(estimator: Estimator, ratio: Option<f64>, errors: &[f64], failures: usize) -> BenchRow {
    let n = errors.len();
    let nan = f64::NAN;
    if n == 0 {
        return BenchRow { estimator, ratio, std: nan, mean: nan, med: nan, max: nan, failures };
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    BenchRow { estimator, ratio, std, mean, med, max: sorted[n - 1], failures }
}

/// Scale errors for every estimator over the ratio sweep. Residuals are taken
/// to the true left line; estimator errors count as failures and are left out
/// of the statistics.
pub fn scale_bench(config: &BenchConfig) -> Result<BenchTable, EvalError> {
    if config.runs == 0 || config.ratios.is_empty() || config.estimators.is_empty() {
        return Err(EvalError::InvalidBench("need at least one run, ratio and estimator".into()));
    }
    if config.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(EvalError::InvalidBench("ratios must lie in [0, 1]".into()));
    }
    if !(config.noise_sigma > 0.0) {
        return Err(EvalError::InvalidBench("noise sigma must be positive".into()));
    }
    let k = config.estimators.len();
    let mut pooled: Vec<(Vec<f64>, usize)> = vec![(Vec::new(), 0); k];
    let mut rows = Vec::with_capacity(k * config.ratios.len());
    let mut per_ratio: Vec<Vec<(Vec<f64>, usize)>> = Vec::with_capacity(config.ratios.len());
    for ri in 0..config.ratios.len() {
        let mut cell: Vec<(Vec<f64>, usize)> = vec![(Vec::with_capacity(config.runs), 0); k];
        for run in 0..config.runs {
            let spec = config.spec_for(ri, run);
            let set = gen_two_lines(&spec)?;
            let residuals = geometry::residuals(&set.true_models[0], &set.data)
                .expect("points against a line model");
            for (e, est) in config.estimators.iter().enumerate() {
                match est
                    .estimate(&residuals, config.kappa)
                    .ok()
                    .and_then(|s| scale_error(s, config.noise_sigma).ok())
                {
                    Some(err) => cell[e].0.push(err),
                    None => cell[e].1 += 1,
                }
            }
        }
        per_ratio.push(cell);
    }
    for (e, &est) in config.estimators.iter().enumerate() {
        for (ri, cell) in per_ratio.iter().enumerate() {
            let (errs, fails) = &cell[e];
            rows.push(summarize(est, Some(config.ratios[ri]), errs, *fails));
            pooled[e].0.extend_from_slice(errs);
            pooled[e].1 += fails;
        }
    }
    let aggregates = config
        .estimators
        .iter()
        .zip(&pooled)
        .map(|(&est, (errs, fails))| summarize(est, None, errs, *fails))
        .collect();
    Ok(BenchTable { rows, aggregates })
}

/// Rounds to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Shortest decimal form of `x` rounded to 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    round_sig(x).to_string()
}
