//! Robust (OOD-SCP) thresholds.
//!
//! For targets within divergence `rho` of the convex hull of the source score
//! laws, the worst-case `beta`-quantile is `Q(g^{-1}(beta); F_min)`. With only
//! empirical source CDFs the level has to absorb the DKW deviation as well:
//!
//! ```text
//! level(eps) = eps + g^{-1}((1 - alpha) / (1 - delta(eps))),
//! delta(eps) = 2 sum_i exp(-2 m_i eps^2),
//! ```
//!
//! and the threshold is `Q(level(eps*); F_min_hat)` for the `eps*` that
//! minimizes `level` subject to `level <= 1`. The equivalent corrected
//! miscoverage is `alpha' = 1 - g(level(eps*))`.
//!
//! The true divergence between the target and the hull is never observable;
//! every bound here is stated with the user's `rho` in its place, which is
//! conservative whenever `rho` is an upper bound.

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceFamily;
use crate::empirical::{dkw_failure_bound, CalibrationBundle, Cdf};
use crate::error::{Error, Result};
use crate::gcurve::GCurve;
use crate::io::{ext_real, opt_real};

pub const DEFAULT_EPSILON_GRID: usize = 2000;
const MIN_EPSILON_GRID: usize = 10;
const REFINE_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustConfig {
    pub family: DivergenceFamily,
    pub rho: f64,
    pub alpha: f64,
    pub epsilon_grid: usize,
}

impl RobustConfig {
    pub fn new(family: DivergenceFamily, rho: f64, alpha: f64) -> Result<Self> {
        Self::with_grid(family, rho, alpha, DEFAULT_EPSILON_GRID)
    }

    pub fn with_grid(
        family: DivergenceFamily,
        rho: f64,
        alpha: f64,
        epsilon_grid: usize,
    ) -> Result<Self> {
        let cfg = Self {
            family,
            rho,
            alpha,
            epsilon_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rho must be >= 0, got {}",
                self.rho
            )));
        }
        check_alpha(self.alpha)?;
        if self.epsilon_grid < MIN_EPSILON_GRID {
            return Err(Error::InvalidParameter(format!(
                "epsilon grid must have at least {MIN_EPSILON_GRID} points, got {}",
                self.epsilon_grid
            )));
        }
        Ok(())
    }

    pub fn curve(&self) -> Result<GCurve> {
        GCurve::new(self.family.clone(), self.rho)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::InfeasibleEpsilon(epsilon))
    }
}

/// Outcome of the robust threshold pipeline. When `feasible` is false the
/// threshold is `+inf` (the full prediction set) and the optional fields are
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustThresholdReport {
    #[serde(with = "ext_real")]
    pub threshold: f64,
    pub feasible: bool,
    #[serde(with = "opt_real")]
    pub epsilon_star: Option<f64>,
    #[serde(with = "opt_real")]
    pub corrected_alpha: Option<f64>,
    #[serde(with = "opt_real")]
    pub dkw_delta: Option<f64>,
    #[serde(with = "opt_real")]
    pub quantile_level: Option<f64>,
}

impl RobustThresholdReport {
    fn full_set() -> Self {
        Self {
            threshold: f64::INFINITY,
            feasible: false,
            epsilon_star: None,
            corrected_alpha: None,
            dkw_delta: None,
            quantile_level: None,
        }
    }
}

/// The chosen DKW slack and the quantile level it produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    pub level: f64,
    pub delta: f64,
}

/// `Q(g^{-1}(level); F_min)`.
pub fn worst_case_quantile<C: Cdf + ?Sized>(fmin: &C, curve: &GCurve, level: f64) -> f64 {
    fmin.quantile(curve.g_inverse(level))
}

/// The level function `eps + g^{-1}((1 - alpha) / (1 - delta))`; `+inf` once
/// `delta >= 1` or the inner argument leaves `[0, 1]`. Values above 1 are
/// returned as-is.
pub fn epsilon_h(ms: &[usize], curve: &GCurve, alpha: f64, epsilon: f64) -> f64 {
    let delta = dkw_failure_bound(ms, epsilon);
    if delta >= 1.0 {
        return f64::INFINITY;
    }
    let argument = (1.0 - alpha) / (1.0 - delta);
    if argument > 1.0 {
        return f64::INFINITY;
    }
    epsilon + curve.g_inverse(argument)
}

/// Minimizes [`epsilon_h`] over `{k / grid : k = 1..=grid}` subject to
/// `level <= 1`, ties going to the smaller `eps`, then polishes the winner
/// with a bisection pass over its two neighbouring cells.
pub fn optimize_epsilon(
    ms: &[usize],
    curve: &GCurve,
    alpha: f64,
    grid: usize,
) -> Result<EpsilonChoice> {
    check_alpha(alpha)?;
    if grid < MIN_EPSILON_GRID {
        return Err(Error::InvalidParameter(format!(
            "epsilon grid must have at least {MIN_EPSILON_GRID} points, got {grid}"
        )));
    }
    if ms.is_empty() || ms.contains(&0) {
        return Err(Error::InvalidParameter(
            "sample sizes must be positive".into(),
        ));
    }
    let step = 1.0 / grid as f64;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=grid {
        let level = epsilon_h(ms, curve, alpha, k as f64 * step);
        if level <= 1.0 && best.is_none_or(|(_, b)| level < b) {
            best = Some((k, level));
        }
    }
    let (k, mut level) = best.ok_or(Error::Infeasible)?;
    let mut epsilon = k as f64 * step;

    let lo = (k - 1) as f64 * step;
    let hi = ((k + 1) as f64 * step).min(1.0);
    let (refined_eps, refined_level) = bisect_minimum(|e| epsilon_h(ms, curve, alpha, e), lo, hi);
    if refined_level < level && refined_level <= 1.0 {
        epsilon = refined_eps;
        level = refined_level;
    }
    Ok(EpsilonChoice {
        epsilon,
        level,
        delta: dkw_failure_bound(ms, epsilon),
    })
}

/// Bisection on the sign of the local slope; the bracket halves each step.
fn bisect_minimum(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    for _ in 0..REFINE_ITERATIONS {
        let mid = 0.5 * (a + b);
        let probe = 1e-4 * (b - a);
        if f(mid - probe) <= f(mid + probe) {
            b = mid;
        } else {
            a = mid;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `alpha' = 1 - g(level(eps))`. A level above 1 is read as 1.
pub fn corrected_alpha(ms: &[usize], curve: &GCurve, alpha: f64, epsilon: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let level = epsilon_h(ms, curve, alpha, epsilon);
    if !level.is_finite() {
        return Err(Error::InfeasibleEpsilon(epsilon));
    }
    Ok(1.0 - curve.g(level.min(1.0)))
}

/// Finite-sample coverage bound `(1 - delta) g(g^{-1}(1 - alpha) - eps)`,
/// clamped to `[0, 1]`; 0 when `delta >= 1`.
pub fn coverage_lower_bound(ms: &[usize], curve: &GCurve, alpha: f64, epsilon: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let delta = dkw_failure_bound(ms, epsilon);
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let inner = (curve.g_inverse(1.0 - alpha) - epsilon).max(0.0);
    Ok(((1.0 - delta) * curve.g(inner)).clamp(0.0, 1.0))
}

/// Full pipeline on a calibration bundle.
pub fn robust_threshold(
    bundle: &CalibrationBundle,
    config: &RobustConfig,
) -> Result<RobustThresholdReport> {
    robust_threshold_with_sample_sizes(bundle, config, &bundle.sample_sizes())
}

/// Same as [`robust_threshold`] but with the per-domain sample sizes used in
/// the DKW correction supplied explicitly.
pub fn robust_threshold_with_sample_sizes(
    bundle: &CalibrationBundle,
    config: &RobustConfig,
    ms: &[usize],
) -> Result<RobustThresholdReport> {
    config.validate()?;
    if ms.len() != bundle.domains() {
        return Err(Error::LengthMismatch {
            left: ms.len(),
            right: bundle.domains(),
        });
    }
    let curve = config.curve()?;
    let choice = match optimize_epsilon(ms, &curve, config.alpha, config.epsilon_grid) {
        Ok(c) => c,
        Err(Error::Infeasible) => return Ok(RobustThresholdReport::full_set()),
        Err(e) => return Err(e),
    };
    Ok(report_for_level(&bundle.min_cdf(), &curve, choice))
}

pub(crate) fn report_for_level<C: Cdf + ?Sized>(
    fmin: &C,
    curve: &GCurve,
    choice: EpsilonChoice,
) -> RobustThresholdReport {
    RobustThresholdReport {
        threshold: fmin.quantile(choice.level),
        feasible: true,
        epsilon_star: Some(choice.epsilon),
        corrected_alpha: Some(1.0 - curve.g(choice.level)),
        dkw_delta: Some(choice.delta),
        quantile_level: Some(choice.level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{EmpiricalCdf, MinCdf};
    use crate::scp_threshold;
    use proptest::prelude::*;

    fn tv(rho: f64) -> GCurve {
        GCurve::new(DivergenceFamily::total_variation(), rho).unwrap()
    }

    fn range(n: u32) -> Vec<f64> {
        (1..=n).map(f64::from).collect()
    }

    #[test]
    fn worst_case_quantile_examples() {
        let single = MinCdf::new(vec![EmpiricalCdf::new(&range(100)).unwrap()]).unwrap();
        assert_eq!(worst_case_quantile(&single, &tv(0.05), 0.9), 95.0);
        assert_eq!(
            worst_case_quantile(&single, &tv(0.0), 0.37),
            single.quantile(0.37)
        );
        let two = MinCdf::new(vec![
            EmpiricalCdf::new(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            EmpiricalCdf::new(&[2.0, 4.0, 6.0, 8.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(worst_case_quantile(&two, &tv(0.0), 0.75), 6.0);
    }

    #[test]
    fn epsilon_h_examples() {
        let h = epsilon_h(&[1_000_000], &tv(0.05), 0.1, 0.5);
        assert!((h - 1.45).abs() < 1e-12);
        assert_eq!(epsilon_h(&[10], &tv(0.05), 0.1, 1e-3), f64::INFINITY);
        let h = epsilon_h(&[10_000], &tv(0.05), 0.1, 0.02);
        let delta = 2.0 * (-8.0f64).exp();
        assert!((h - (0.02 + 0.9 / (1.0 - delta) + 0.05)).abs() < 1e-12);
        assert!((h - 0.970604).abs() < 5e-7);
    }

    #[test]
    fn optimizer_finds_the_grid_minimum() {
        let curve = tv(0.05);
        let ms = [1_000_000];
        let choice = optimize_epsilon(&ms, &curve, 0.1, 2000).unwrap();
        for k in 1..=2000 {
            assert!(choice.level <= epsilon_h(&ms, &curve, 0.1, k as f64 / 2000.0));
        }
        // fine scan of the same objective
        let fine = (1..=200_000)
            .map(|k| epsilon_h(&ms, &curve, 0.1, k as f64 / 200_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(choice.level <= fine + 1e-9);
        assert!(choice.level > 0.95 && choice.level < 0.9530);
        assert!(choice.epsilon < 0.005);
    }

    #[test]
    fn optimizer_reports_infeasible() {
        assert!(matches!(
            optimize_epsilon(&[10], &tv(0.5), 0.05, 2000),
            Err(Error::Infeasible)
        ));
        assert!(optimize_epsilon(&[10], &tv(0.5), 0.05, 5).is_err());
    }

    #[test]
    fn vanishing_corrections_approach_nominal_level() {
        let choice = optimize_epsilon(&[100_000_000], &tv(0.0), 0.1, 2000).unwrap();
        assert!(choice.level > 0.9 && choice.level < 0.9005);
        let coarse = optimize_epsilon(&[100_000], &tv(0.0), 0.1, 2000).unwrap();
        assert!(choice.level < coarse.level);
    }

    #[test]
    fn correction_chain() {
        let curve = tv(0.05);
        let a = corrected_alpha(&[10_000], &curve, 0.1, 0.02).unwrap();
        let delta = 2.0 * (-8.0f64).exp();
        let level = 0.02 + 0.9 / (1.0 - delta) + 0.05;
        assert!((a - (1.0 - (level - 0.05))).abs() < 1e-12);
        assert!((a - 0.079396).abs() < 5e-7);
        let b = coverage_lower_bound(&[10_000], &curve, 0.1, 0.02).unwrap();
        assert!((b - (1.0 - delta) * 0.88).abs() < 1e-12);
        assert!((b - 0.879410).abs() < 5e-7);
    }

    #[test]
    fn correction_plateau_for_tv() {
        // level >= 1 maps to g(1) = 1 - rho
        let curve = tv(0.2);
        let a = corrected_alpha(&[1000], &curve, 0.1, 0.5).unwrap();
        assert!((a - 0.2).abs() < 1e-12);
    }

    #[test]
    fn correction_errors_and_edges() {
        let curve = tv(0.05);
        assert!(matches!(
            corrected_alpha(&[10], &curve, 0.1, 1e-3),
            Err(Error::InfeasibleEpsilon(_))
        ));
        assert!(corrected_alpha(&[10], &curve, 0.1, 0.0).is_err());
        assert!(coverage_lower_bound(&[10], &curve, 0.1, 1.5).is_err());
        assert_eq!(coverage_lower_bound(&[10], &curve, 0.1, 1e-3).unwrap(), 0.0);
        let b = coverage_lower_bound(&[usize::MAX / 4], &tv(0.0), 0.1, 1e-6).unwrap();
        assert!((b - 0.9).abs() < 1e-5);
    }

    #[test]
    fn pipeline_matches_manual_composition() {
        let bundle = CalibrationBundle::new(vec![range(10000)]).unwrap();
        let config = RobustConfig::new(DivergenceFamily::total_variation(), 0.05, 0.1).unwrap();
        let report = robust_threshold(&bundle, &config).unwrap();
        assert!(report.feasible);
        let curve = tv(0.05);
        let choice = optimize_epsilon(&[10000], &curve, 0.1, 2000).unwrap();
        let level = report.quantile_level.unwrap();
        assert_eq!(level, choice.level);
        assert!(level > 0.95 && level <= 1.0);
        let rank = (10000.0 * level - 1e-9).ceil();
        assert_eq!(report.threshold, rank);
        assert_eq!(report.corrected_alpha.unwrap(), 1.0 - curve.g(level));
        assert_eq!(
            report.dkw_delta.unwrap(),
            dkw_failure_bound(&[10000], choice.epsilon)
        );
    }

    #[test]
    fn zero_radius_with_huge_m_is_scp_like() {
        let scores = range(1000);
        let bundle = CalibrationBundle::new(vec![scores.clone()]).unwrap();
        let config = RobustConfig::new(DivergenceFamily::total_variation(), 0.0, 0.1).unwrap();
        let report =
            robust_threshold_with_sample_sizes(&bundle, &config, &[1_000_000_000_000]).unwrap();
        let scp = scp_threshold(&scores, 0.1).unwrap();
        assert!(
            (report.threshold - scp).abs() <= 2.0,
            "{} vs {scp}",
            report.threshold
        );
    }

    #[test]
    fn infeasible_pipeline_emits_full_set() {
        let bundle = CalibrationBundle::new(vec![range(10)]).unwrap();
        let config = RobustConfig::new(DivergenceFamily::total_variation(), 0.5, 0.05).unwrap();
        let report = robust_threshold(&bundle, &config).unwrap();
        assert!(!report.feasible);
        assert_eq!(report.threshold, f64::INFINITY);
        assert_eq!(report.epsilon_star, None);
    }

    #[test]
    fn config_validation() {
        let tv = DivergenceFamily::total_variation();
        assert!(RobustConfig::new(tv.clone(), -1.0, 0.1).is_err());
        assert!(RobustConfig::new(tv.clone(), 0.1, 1.0).is_err());
        assert!(RobustConfig::with_grid(tv, 0.1, 0.1, 9).is_err());
        let bundle = CalibrationBundle::new(vec![range(10)]).unwrap();
        let config = RobustConfig::new(DivergenceFamily::kullback_leibler(), 0.1, 0.1).unwrap();
        assert!(robust_threshold_with_sample_sizes(&bundle, &config, &[10, 10]).is_err());
    }

    fn bundle_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..10.0, 50..300), 1..3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn threshold_dominates_pooled_scp(parts in bundle_strategy(), rho in 0.001f64..0.05, alpha in 0.2f64..0.5) {
            let bundle = CalibrationBundle::new(parts).unwrap();
            for family in [DivergenceFamily::total_variation(), DivergenceFamily::chi_square(), DivergenceFamily::kullback_leibler()] {
                let config = RobustConfig::with_grid(family, rho, alpha, 200).unwrap();
                let report = robust_threshold(&bundle, &config).unwrap();
                let scp = scp_threshold(&bundle.pooled(), alpha).unwrap();
                if report.threshold.is_finite() && scp.is_finite() {
                    prop_assert!(report.threshold >= scp);
                }
            }
        }

        #[test]
        fn threshold_is_monotone(parts in bundle_strategy(), r1 in 0.0f64..0.1, r2 in 0.0f64..0.1, a1 in 0.05f64..0.5, a2 in 0.05f64..0.5) {
            let bundle = CalibrationBundle::new(parts).unwrap();
            let family = DivergenceFamily::kullback_leibler();
            let t = |rho: f64, alpha: f64| {
                robust_threshold(&bundle, &RobustConfig::with_grid(family.clone(), rho, alpha, 200).unwrap())
                    .unwrap()
                    .threshold
            };
            let (rlo, rhi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(t(rlo, a1) <= t(rhi, a1));
            prop_assert!(t(r1, ahi) <= t(r1, alo));
        }

        #[test]
        fn report_rederives(parts in bundle_strategy(), rho in 0.0f64..0.1, alpha in 0.05f64..0.5) {
            let bundle = CalibrationBundle::new(parts).unwrap();
            let config = RobustConfig::with_grid(DivergenceFamily::chi_square(), rho, alpha, 200).unwrap();
            let report = robust_threshold(&bundle, &config).unwrap();
            if let Some(level) = report.quantile_level {
                let curve = config.curve().unwrap();
                prop_assert_eq!(report.corrected_alpha.unwrap(), 1.0 - curve.g(level));
                prop_assert_eq!(report.threshold, bundle.min_cdf().quantile(level));
                prop_assert!(level <= 1.0);
            }
        }
    }
}
