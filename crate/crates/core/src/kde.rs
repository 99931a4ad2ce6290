//! Adaptive inlier estimation.
//!
//! Residuals to a hypothesis are turned into kernel weighting scores, the
//! entropy of the normalized weight gaps separates significant points
//! (inliers) from the rest, and the inlier noise scale is read off the
//! significant residuals with a K-th order statistic.
//!
//! The classical scale estimators MED, MAD and IKOSE are provided for
//! comparison in [`baseline_scale`].

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// `∫ EK(u)² du` over the kernel support.
pub const KERNEL_ROUGHNESS: f64 = 0.6;
/// `∫ u² EK(u) du` over the kernel support.
pub const KERNEL_SECOND_MOMENT: f64 = 0.2;
/// Consistency factor turning a median of absolute normal deviates into σ.
pub const MAD_TO_SIGMA: f64 = 1.4826;
/// Inlier band of IKOSE, in units of the current scale.
pub const IKOSE_BAND: f64 = 2.5;
pub const IKOSE_MAX_ITERATIONS: usize = 50;
/// Default K of the order statistic.
pub const DEFAULT_KAPPA: usize = 10;

// Scale estimates are floored relative to the largest residual so that exact
// fits (all inlier residuals zero) still yield a usable positive scale.
const SCALE_FLOOR: f64 = 1e-12;
/// Spreads below this fraction of the largest residual magnitude are
/// rounding noise from equal residuals.
const SPREAD_EPS: f64 = 1e-12;
/// `-ln p` within this relative distance of the entropy counts as a tie
/// (not significant), so rounding cannot flip exact ties such as equal
/// priors.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KdeError {
    #[error("need at least {needed} residuals, got {got}")]
    TooFewResiduals { needed: usize, got: usize },
    #[error("residuals have zero spread")]
    ZeroSpread,
    #[error("all weighting scores are equal")]
    AllEqualWeights,
    #[error("{found} significant points, need at least {needed}")]
    TooFewSignificant { needed: usize, found: usize },
    #[error("probability {0} outside (0, 1)")]
    OutOfDomain(f64),
    #[error("residuals and mask differ in length ({residuals} vs {mask})")]
    LengthMismatch { residuals: usize, mask: usize },
}

/// Epanechnikov kernel `0.75 (1 - u²)` on `[-1, 1]`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Sample standard deviation of the residuals, the spread the bandwidth is
/// scaled by.
pub fn residual_spread(residuals: &[f64]) -> f64 {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let ss = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// Plug-in bandwidth `[7 R(K) / (n μ₂(K))]^(1/5) · spread`.
pub fn bandwidth_for(n: usize, spread: f64) -> f64 {
    (7.0 * KERNEL_ROUGHNESS / (n as f64 * KERNEL_SECOND_MOMENT)).powf(0.2) * spread
}

pub fn bandwidth(residuals: &[f64]) -> Result<f64, KdeError> {
    if residuals.len() < 2 {
        return Err(KdeError::TooFewResiduals {
            needed: 2,
            got: residuals.len(),
        });
    }
    let spread = residual_spread(residuals);
    let largest = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if !(spread > SPREAD_EPS * largest) || !spread.is_finite() {
        return Err(KdeError::ZeroSpread);
    }
    Ok(bandwidth_for(residuals.len(), spread))
}

/// Weighting score `EK(r_i / b) / (n b)` of every residual.
pub fn weight_scores(residuals: &[f64]) -> Result<Vec<f64>, KdeError> {
    let b = bandwidth(residuals)?;
    let nb = residuals.len() as f64 * b;
    Ok(residuals
        .iter()
        .map(|r| epanechnikov(r / b) / nb)
        .collect())
}

/// Outcome of the entropy test on a weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Significance {
    pub significant: Vec<bool>,
    /// Entropy of the gap priors, in nats.
    pub entropy: f64,
    /// `max(ω²) - ω_i²`.
    pub gaps: Vec<f64>,
    /// Gaps normalized to sum to one.
    pub priors: Vec<f64>,
}

impl Significance {
    pub fn count(&self) -> usize {
        self.significant.iter().filter(|&&s| s).count()
    }
}

/// Marks point `i` significant when `-ln p_i` exceeds the entropy of the gap
/// priors (ties within [`TIE_TOLERANCE`] are not significant). Points with
/// the maximal weight have `p_i = 0` and are always significant.
pub fn select_significant(weights: &[f64]) -> Result<Significance, KdeError> {
    if weights.len() < 2 {
        return Err(KdeError::TooFewResiduals {
            needed: 2,
            got: weights.len(),
        });
    }
    let max_sq = weights.iter().map(|w| w * w).fold(0.0, f64::max);
    let gaps: Vec<f64> = weights.iter().map(|w| max_sq - w * w).collect();
    let total: f64 = gaps.iter().sum();
    if !(total > 0.0) {
        return Err(KdeError::AllEqualWeights);
    }
    let priors: Vec<f64> = gaps.iter().map(|g| g / total).collect();
    let entropy = -priors
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let cut = entropy + TIE_TOLERANCE * entropy.max(1.0);
    let significant = priors.iter().map(|&p| p == 0.0 || -p.ln() > cut).collect();
    Ok(Significance {
        significant,
        entropy,
        gaps,
        priors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub scale: f64,
    /// Order statistic actually used.
    pub kappa: usize,
    pub n_significant: usize,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64, KdeError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(KdeError::OutOfDomain(p));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

// |r̃_κ| / Φ⁻¹((1 + κ/n)/2) for residuals already sorted ascending.
fn kth_order_scale(sorted: &[f64], kappa: usize, n: usize) -> Result<f64, KdeError> {
    let q = normal_quantile(0.5 * (1.0 + kappa as f64 / n as f64))?;
    Ok(sorted[kappa - 1].abs() / q)
}

fn floor_scale(scale: f64, residuals: &[f64]) -> f64 {
    let largest = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    scale.max(SCALE_FLOOR * largest).max(f64::MIN_POSITIVE)
}

fn sorted_abs<'a>(values: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.map(|r| r.abs()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Inlier noise scale from the `kappa`-th smallest significant residual.
///
/// When `kappa` equals the number of significant points the quantile
/// argument would reach 1, so `kappa - 1` is used instead.
pub fn inlier_scale(
    residuals: &[f64],
    significant: &[bool],
    kappa: usize,
) -> Result<ScaleEstimate, KdeError> {
    if residuals.len() != significant.len() {
        return Err(KdeError::LengthMismatch {
            residuals: residuals.len(),
            mask: significant.len(),
        });
    }
    let sig = sorted_abs(
        residuals
            .iter()
            .zip(significant)
            .filter(|(_, &s)| s)
            .map(|(r, _)| r),
    );
    let n_sig = sig.len();
    let kappa = kappa.max(1);
    if n_sig < kappa {
        return Err(KdeError::TooFewSignificant {
            needed: kappa,
            found: n_sig,
        });
    }
    let kappa = if kappa == n_sig { kappa - 1 } else { kappa };
    if kappa == 0 {
        return Err(KdeError::TooFewSignificant {
            needed: 2,
            found: n_sig,
        });
    }
    let scale = floor_scale(kth_order_scale(&sig, kappa, n_sig)?, residuals);
    Ok(ScaleEstimate {
        scale,
        kappa,
        n_significant: n_sig,
    })
}

/// Full adaptive inlier estimation on one residual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InlierEstimate {
    pub weights: Vec<f64>,
    pub significance: Significance,
    pub scale: ScaleEstimate,
}

/// Weights, significant set and inlier scale. `kappa` is capped at the number
/// of significant points.
pub fn estimate_inliers(residuals: &[f64], kappa: usize) -> Result<InlierEstimate, KdeError> {
    let weights = weight_scores(residuals)?;
    let significance = select_significant(&weights)?;
    let kappa = kappa.min(significance.count());
    let scale = inlier_scale(residuals, &significance.significant, kappa)?;
    Ok(InlierEstimate {
        weights,
        significance,
        scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Med,
    Mad,
    Ikose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineScale {
    pub scale: f64,
    pub iterations: usize,
    /// Always true for MED and MAD. For IKOSE, false when the iteration cap
    /// was hit; `scale` then holds the last iterate.
    pub converged: bool,
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn baseline_scale(
    method: BaselineMethod,
    residuals: &[f64],
    kappa: usize,
) -> Result<BaselineScale, KdeError> {
    let n = residuals.len();
    let done = |scale| BaselineScale {
        scale,
        iterations: 1,
        converged: true,
    };
    match method {
        BaselineMethod::Med => {
            if n == 0 {
                return Err(KdeError::TooFewResiduals { needed: 1, got: 0 });
            }
            Ok(done(MAD_TO_SIGMA * median_sorted(&sorted_abs(residuals.iter()))))
        }
        BaselineMethod::Mad => {
            if n == 0 {
                return Err(KdeError::TooFewResiduals { needed: 1, got: 0 });
            }
            let mut sorted = residuals.to_vec();
            sorted.sort_by(f64::total_cmp);
            let med = median_sorted(&sorted);
            let dev = sorted_abs(sorted.iter().map(|r| r - med).collect::<Vec<_>>().iter());
            Ok(done(MAD_TO_SIGMA * median_sorted(&dev)))
        }
        BaselineMethod::Ikose => ikose(residuals, kappa),
    }
}

fn ikose(residuals: &[f64], kappa: usize) -> Result<BaselineScale, KdeError> {
    let n = residuals.len();
    let kappa = kappa.max(1);
    if n <= kappa {
        return Err(KdeError::TooFewResiduals {
            needed: kappa + 1,
            got: n,
        });
    }
    let sorted = sorted_abs(residuals.iter());
    let mut n_inliers = n;
    let mut scale = 0.0;
    for iteration in 1..=IKOSE_MAX_ITERATIONS {
        scale = floor_scale(kth_order_scale(&sorted, kappa, n_inliers)?, residuals);
        let band = IKOSE_BAND * scale;
        let next = sorted
            .partition_point(|&r| r <= band)
            .clamp(kappa + 1, n);
        if next == n_inliers {
            return Ok(BaselineScale {
                scale,
                iterations: iteration,
                converged: true,
            });
        }
        n_inliers = next;
    }
    Ok(BaselineScale {
        scale,
        iterations: IKOSE_MAX_ITERATIONS,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as Gauss};
    use statrs::function::erf::erf;

    fn cdf(x: f64) -> f64 {
        0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn integrate(f: impl Fn(f64) -> f64) -> f64 {
        // Composite Simpson on [-1, 1].
        let n = 2000;
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn half_normal(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gauss::new(0.0, sigma).unwrap();
        (0..n).map(|_| g.sample(&mut rng).abs()).collect()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(epanechnikov(0.0), 0.75);
        assert_eq!(epanechnikov(1.0), 0.0);
        assert_eq!(epanechnikov(-1.0), 0.0);
        assert_eq!(epanechnikov(2.0), 0.0);
    }

    #[test]
    fn kernel_constants_match_quadrature() {
        let roughness = integrate(|u| epanechnikov(u).powi(2));
        let moment = integrate(|u| u * u * epanechnikov(u));
        assert_abs_diff_eq!(roughness, KERNEL_ROUGHNESS, epsilon = 1e-9);
        assert_abs_diff_eq!(moment, KERNEL_SECOND_MOMENT, epsilon = 1e-9);
        assert_abs_diff_eq!(bandwidth_for(21, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bandwidth_scales_with_residuals() {
        let r: Vec<f64> = (0..21).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let scaled: Vec<f64> = r.iter().map(|x| x * 10.0).collect();
        let (b, b10) = (bandwidth(&r).unwrap(), bandwidth(&scaled).unwrap());
        assert_abs_diff_eq!(b10 / b, 10.0, epsilon = 1e-12);
        assert_eq!(bandwidth(&[3.0; 21]), Err(KdeError::ZeroSpread));
        assert_eq!(weight_scores(&[0.5; 8]), Err(KdeError::ZeroSpread));
    }

    #[test]
    fn weights_peak_at_zero_and_vanish_outside_support() {
        let r = [0.0, 0.1, 0.3, 0.5, 2.0, 5.0, 9.0];
        let b = bandwidth(&r).unwrap();
        let w = weight_scores(&r).unwrap();
        assert_abs_diff_eq!(w[0], 0.75 / (r.len() as f64 * b), epsilon = 1e-15);
        for (ri, wi) in r.iter().zip(&w) {
            if *ri >= b {
                assert_eq!(*wi, 0.0);
            }
        }
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn entropy_selection_worked_example() {
        let s = select_significant(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.gaps, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(s.priors, vec![0.0, 0.0, 0.5, 0.5]);
        assert_abs_diff_eq!(s.entropy, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(s.significant, vec![true, true, false, false]);
        assert_eq!(select_significant(&[0.3; 5]), Err(KdeError::AllEqualWeights));
    }

    #[test]
    fn inlier_scale_worked_example() {
        // 100 significant residuals whose 10th smallest is 0.5.
        let mut r: Vec<f64> = (1..=100).map(|i| i as f64 * 0.05).collect();
        r.push(1000.0);
        let mut mask = vec![true; 100];
        mask.push(false);
        let s = inlier_scale(&r, &mask, 10).unwrap();
        let expected = 0.5 / bisect_quantile(0.55);
        assert_abs_diff_eq!(s.scale, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(s.scale, 3.9789, epsilon = 1e-4);
        assert_eq!((s.kappa, s.n_significant), (10, 100));

        let doubled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        assert_eq!(inlier_scale(&doubled, &mask, 10).unwrap().scale, 2.0 * s.scale);

        assert_eq!(
            inlier_scale(&r[..5], &[true; 5], 10),
            Err(KdeError::TooFewSignificant { needed: 10, found: 5 })
        );
    }

    #[test]
    fn kappa_equal_to_significant_count_stays_finite() {
        let s = inlier_scale(&[0.1, 0.2, 0.3], &[true; 3], 3).unwrap();
        assert_eq!(s.kappa, 2);
        assert!(s.scale.is_finite() && s.scale > 0.0);
    }

    #[test]
    fn inlier_scale_monte_carlo() {
        let mut errs: Vec<f64> = (0..50)
            .map(|seed| {
                let r = half_normal(1000, 2.0, seed);
                let s = inlier_scale(&r, &vec![true; r.len()], 100).unwrap();
                (s.scale / 2.0 - 1.0).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[25] < 0.15, "median relative error {}", errs[25]);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(normal_quantile(0.975).unwrap(), 1.959964, epsilon = 1e-6);
        assert_abs_diff_eq!(
            normal_quantile(0.975).unwrap(),
            bisect_quantile(0.975),
            epsilon = 1e-10
        );
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(p), Err(KdeError::OutOfDomain(_))));
        }
    }

    #[test]
    fn baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Gauss::new(0.0, 1.0).unwrap();
        let r: Vec<f64> = (0..10_000).map(|_| g.sample(&mut rng)).collect();
        let med = baseline_scale(BaselineMethod::Med, &r, 10).unwrap().scale;
        assert!((med - 1.0).abs() < 0.05, "{med}");

        let flat = baseline_scale(BaselineMethod::Mad, &[4.0; 9], 3).unwrap();
        assert_eq!(flat.scale, 0.0);

        let runs: Vec<BaselineScale> = (0..50)
            .map(|seed| baseline_scale(BaselineMethod::Ikose, &half_normal(1000, 3.0, seed), 100).unwrap())
            .collect();
        assert!(runs.iter().all(|r| r.converged));
        let mut iters: Vec<usize> = runs.iter().map(|r| r.iterations).collect();
        iters.sort();
        assert!(iters[25] <= 3, "{iters:?}");
        let mut ratios: Vec<f64> = runs.iter().map(|r| r.scale / 3.0).collect();
        ratios.sort_by(f64::total_cmp);
        assert!((ratios[25] - 1.0).abs() < 0.1, "{ratios:?}");
    }

    fn brute_force_significance(w: &[f64]) -> Vec<bool> {
        let mut max_sq = 0.0;
        for x in w {
            if x * x > max_sq {
                max_sq = x * x;
            }
        }
        let mut total = 0.0;
        for x in w {
            total += max_sq - x * x;
        }
        let mut entropy = 0.0;
        for x in w {
            let p = (max_sq - x * x) / total;
            if p > 0.0 {
                entropy -= p * p.ln();
            }
        }
        w.iter()
            .map(|x| {
                let p = (max_sq - x * x) / total;
                -(p.ln()) > entropy + 1e-12 * f64::max(entropy, 1.0)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn selection_matches_brute_force(w in prop::collection::vec(0.0f64..10.0, 2..60)) {
            prop_assume!(w.iter().any(|x| *x != w[0]));
            let s = select_significant(&w).unwrap();
            prop_assert_eq!(s.significant, brute_force_significance(&w));
            prop_assert!(s.entropy >= 0.0);
            prop_assert!(s.entropy <= (w.len() as f64).ln() + 1e-9);
            prop_assert!((s.priors.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn significance_is_monotone_in_weight(w in prop::collection::vec(0.0f64..10.0, 2..60)) {
            prop_assume!(w.iter().any(|x| *x != w[0]));
            let s = select_significant(&w).unwrap();
            for i in 0..w.len() {
                for j in 0..w.len() {
                    if w[i] * w[i] >= w[j] * w[j] && s.significant[j] {
                        prop_assert!(s.significant[i]);
                    }
                }
            }
        }

        #[test]
        fn weights_are_bounded(r in prop::collection::vec(0.0f64..50.0, 2..80)) {
            if let Ok(w) = weight_scores(&r) {
                let b = bandwidth(&r).unwrap();
                let cap = 0.75 / (r.len() as f64 * b);
                prop_assert!(w.iter().all(|&x| x >= 0.0 && x <= cap * (1.0 + 1e-12)));
            }
        }

        #[test]
        fn significant_set_invariant_under_scaling(
            r in prop::collection::vec(0.0f64..50.0, 3..80),
            c in 0.5f64..8.0,
        ) {
            let c = c.round().max(1.0) * 0.5;  // power-of-two friendly factors keep ranks exact
            let c = if c == 1.5 || c == 2.5 || c == 3.5 { 2.0 } else { c };
            let scaled: Vec<f64> = r.iter().map(|x| x * c).collect();
            match (weight_scores(&r), weight_scores(&scaled)) {
                (Ok(a), Ok(b)) => {
                    if let (Ok(sa), Ok(sb)) = (select_significant(&a), select_significant(&b)) {
                        prop_assert_eq!(sa.significant, sb.significant);
                    }
                }
                (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
                _ => prop_assert!(false, "scaling changed degeneracy"),
            }
        }

        #[test]
        fn quantile_inverts_cdf(p in 1e-6f64..(1.0 - 1e-6)) {
            let x = normal_quantile(p).unwrap();
            prop_assert!((cdf(x) - p).abs() < 1e-10);
            prop_assert!((x + normal_quantile(1.0 - p).unwrap()).abs() < 1e-9);
        }
    }
}
