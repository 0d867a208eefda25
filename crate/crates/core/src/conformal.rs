//! Plain split conformal prediction.
//!
//! With `n` calibration scores the threshold is the `ceil((n + 1)(1 - alpha))`-th
//! order statistic, or `+inf` (the full prediction set) when that rank exceeds
//! `n`. Coverage `>= 1 - alpha` holds whenever calibration and test points are
//! exchangeable. Ties are resolved by deterministic order statistics, which
//! can only make the set larger than random tie-breaking would.

use serde::{Deserialize, Serialize};

use crate::empirical::{Cdf, EmpiricalCdf};
use crate::error::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// SCP threshold `Q((n + 1)(1 - alpha) / n; P_hat)`.
pub fn scp_threshold(calibration_scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let cdf = EmpiricalCdf::new(calibration_scores).map_err(|e| match e {
        Error::EmptyInput => Error::EmptyCalibration,
        other => other,
    })?;
    Ok(threshold_from_cdf(&cdf, alpha))
}

fn threshold_from_cdf(cdf: &EmpiricalCdf, alpha: f64) -> f64 {
    let n = cdf.len() as f64;
    cdf.quantile((n + 1.0) * (1.0 - alpha) / n)
}

/// A closed real interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

/// Inverts the absolute-residual score `|y_hat - y| <= t`.
pub fn interval_set(model_prediction: f64, threshold: f64) -> Result<Interval> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::NegativeThreshold(threshold));
    }
    if threshold == f64::INFINITY {
        return Ok(Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    Ok(Interval {
        lo: model_prediction - threshold,
        hi: model_prediction + threshold,
    })
}

/// Inverts the classification score `1 - p_y <= t`, returning the admitted
/// label indices.
pub fn label_set(probabilities: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::NegativeThreshold(threshold));
    }
    Ok(probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| 1.0 - p <= threshold)
        .map(|(i, _)| i)
        .collect())
}

/// A calibrated SCP predictor.
#[derive(Debug, Clone)]
pub struct ScpPredictor {
    calibration: EmpiricalCdf,
    alpha: f64,
    threshold: f64,
}

impl ScpPredictor {
    pub fn new(calibration_scores: &[f64], alpha: f64) -> Result<Self> {
        let threshold = scp_threshold(calibration_scores, alpha)?;
        let calibration = EmpiricalCdf::new(calibration_scores)?;
        Ok(Self {
            calibration,
            alpha,
            threshold,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn calibration(&self) -> &EmpiricalCdf {
        &self.calibration
    }

    pub fn predict_interval(&self, model_prediction: f64) -> Interval {
        interval_set(model_prediction, self.threshold.max(0.0))
            .expect("threshold clamped to be non-negative")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn range(n: u32) -> Vec<f64> {
        (1..=n).map(f64::from).collect()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(scp_threshold(&range(19), 0.1).unwrap(), 18.0);
        assert_eq!(scp_threshold(&range(9), 0.1).unwrap(), 9.0);
        assert_eq!(scp_threshold(&range(9), 0.01).unwrap(), f64::INFINITY);
    }

    #[test]
    fn threshold_errors() {
        assert!(matches!(
            scp_threshold(&[], 0.1),
            Err(Error::EmptyCalibration)
        ));
        assert!(scp_threshold(&[1.0], 0.0).is_err());
        assert!(scp_threshold(&[1.0], 1.0).is_err());
    }

    #[test]
    fn intervals() {
        assert_eq!(
            interval_set(2.0, 0.5).unwrap(),
            Interval { lo: 1.5, hi: 2.5 }
        );
        let point = interval_set(0.0, 0.0).unwrap();
        assert_eq!(point.length(), 0.0);
        assert!(point.contains(0.0));
        let full = interval_set(1.0, f64::INFINITY).unwrap();
        assert!(full.is_full());
        assert!(full.contains(-1e300));
        assert!(matches!(
            interval_set(0.0, -1.0),
            Err(Error::NegativeThreshold(_))
        ));
    }

    #[test]
    fn labels() {
        assert_eq!(label_set(&[0.7, 0.2, 0.1], 0.8).unwrap(), vec![0, 1]);
        assert_eq!(label_set(&[0.7, 0.2, 0.1], 1.0).unwrap(), vec![0, 1, 2]);
        assert!(label_set(&[0.5], -0.1).is_err());
    }

    #[test]
    fn predictor_caches_threshold() {
        let p = ScpPredictor::new(&range(19), 0.1).unwrap();
        assert_eq!(p.threshold(), 18.0);
        assert_eq!(
            p.predict_interval(0.0),
            Interval {
                lo: -18.0,
                hi: 18.0
            }
        );
        assert_eq!(p.calibration().len(), 19);
    }

    #[test]
    fn exchangeable_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for alpha in [0.1, 0.2] {
            let trials = 2000;
            let mut total = 0.0;
            for _ in 0..trials {
                let cal: Vec<f64> = (0..100).map(|_| rng.random::<f64>().powi(2)).collect();
                let t = scp_threshold(&cal, alpha).unwrap();
                let hits = (0..100)
                    .filter(|_| rng.random::<f64>().powi(2) <= t)
                    .count();
                total += hits as f64 / 100.0;
            }
            assert!(total / trials as f64 >= 1.0 - alpha - 0.01);
        }
    }

    proptest! {
        #[test]
        fn threshold_is_monotone_and_permutation_invariant(
            mut scores in prop::collection::vec(-100.0f64..100.0, 1..60),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(scp_threshold(&scores, hi).unwrap() <= scp_threshold(&scores, lo).unwrap());
            let before = scp_threshold(&scores, a).unwrap();
            scores.reverse();
            prop_assert_eq!(scp_threshold(&scores, a).unwrap(), before);
        }
    }
}
