//! Empirical CDFs of nonconformity scores.

use crate::error::{Error, Result};
use crate::COUNT_SLACK;

/// A right-continuous CDF together with its generalized inverse
/// `Q(beta) = inf { s : F(s) >= beta }`.
pub trait Cdf {
    fn eval(&self, x: f64) -> f64;

    /// `-inf` for `beta <= 0` and `+inf` for `beta > 1`.
    fn quantile(&self, beta: f64) -> f64;
}

/// Step CDF `F(x) = #{i : v_i <= x} / m` over a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(scores: &[f64]) -> Result<Self> {
        Self::from_vec(scores.to_vec())
    }

    pub fn from_vec(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteScore { index, value });
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_scores(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of sample points `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v <= x)
    }

    /// The `k`-th order statistic (1-based) needed for level `beta`, or
    /// `None` when `beta` is outside `(0, 1]`.
    fn rank_for(&self, beta: f64) -> Option<usize> {
        if beta.is_nan() || beta <= 0.0 {
            return None;
        }
        let m = self.sorted.len();
        let k = (beta * m as f64 - COUNT_SLACK).ceil().max(1.0);
        if k > m as f64 {
            None
        } else {
            Some(k as usize)
        }
    }
}

impl Cdf for EmpiricalCdf {
    fn eval(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.sorted.len() as f64
    }

    fn quantile(&self, beta: f64) -> f64 {
        if beta.is_nan() || beta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.rank_for(beta) {
            Some(k) => self.sorted[k - 1],
            None => f64::INFINITY,
        }
    }
}

/// Pointwise minimum `F_min(x) = min_i F_i(x)` of several source CDFs.
#[derive(Debug, Clone, PartialEq)]
pub struct MinCdf {
    components: Vec<EmpiricalCdf>,
}

impl MinCdf {
    pub fn new(components: Vec<EmpiricalCdf>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[EmpiricalCdf] {
        &self.components
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.components.iter().map(EmpiricalCdf::len).collect()
    }
}

impl Cdf for MinCdf {
    fn eval(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// `F_min(x) >= beta` holds exactly when every component has reached
    /// `beta`, so the smallest such `x` is the largest component quantile.
    /// It is always one of the merged atoms.
    fn quantile(&self, beta: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.quantile(beta))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// DKW union bound `2 sum_i exp(-2 m_i eps^2)` on
/// `P(sup_x |F_min(x) - F_min_hat(x)| > eps)`. Not capped at 1; underflow
/// yields 0.
pub fn dkw_failure_bound(ms: &[usize], epsilon: f64) -> f64 {
    2.0 * ms
        .iter()
        .map(|&m| (-2.0 * m as f64 * epsilon * epsilon).exp())
        .sum::<f64>()
}

/// Per-domain calibration scores `V_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBundle {
    domain_scores: Vec<Vec<f64>>,
}

impl CalibrationBundle {
    pub fn new(domain_scores: Vec<Vec<f64>>) -> Result<Self> {
        if domain_scores.is_empty() || domain_scores.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        for scores in &domain_scores {
            if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFiniteScore { index, value });
            }
        }
        Ok(Self { domain_scores })
    }

    pub fn domains(&self) -> usize {
        self.domain_scores.len()
    }

    pub fn domain_scores(&self) -> &[Vec<f64>] {
        &self.domain_scores
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.domain_scores.iter().map(Vec::len).collect()
    }

    pub fn min_cdf(&self) -> MinCdf {
        let components = self
            .domain_scores
            .iter()
            .map(|s| EmpiricalCdf::new(s).expect("validated at construction"))
            .collect();
        MinCdf { components }
    }

    /// All scores concatenated, as plain SCP would see them.
    pub fn pooled(&self) -> Vec<f64> {
        self.domain_scores.iter().flatten().copied().collect()
    }
}
