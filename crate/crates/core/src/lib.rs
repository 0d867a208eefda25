//! Split conformal prediction with distributionally robust thresholds.
//!
//! Standard split conformal prediction (SCP) loses its coverage guarantee as
//! soon as the test distribution drifts away from the calibration data. This
//! crate computes thresholds that stay valid for every target distribution
//! whose nonconformity-score law lies within an f-divergence ball of radius
//! `rho` around the convex hull of one or more source domains:
//!
//! * [`divergence`]: f-divergence generators and the two-point objective
//!   `h(z, beta)` every worst-case computation reduces to.
//! * [`gcurve`]: the level-distortion curve `g` and its inverse.
//! * [`empirical`]: empirical CDFs, the pointwise-minimum CDF over sources and
//!   the DKW union bound.
//! * [`conformal`]: the plain SCP baseline.
//! * [`robust`]: the corrected (OOD-SCP) threshold with finite-sample
//!   correction.
//! * [`sim`]: the Gaussian linear-regression coverage simulations.
//! * [`cli`]: the `oodcp` command-line front end.
//!
//! Extended reals are plain `f64` with `f64::INFINITY` /
//! `f64::NEG_INFINITY` as the sentinels; no large finite surrogate is used.

pub mod cli;
pub mod conformal;
pub mod divergence;
pub mod empirical;
mod error;
pub mod gcurve;
pub mod io;
pub mod robust;
pub mod sim;

pub use conformal::{interval_set, scp_threshold, Interval, ScpPredictor};
pub use divergence::{DivergenceFamily, FamilyKind};
pub use empirical::{dkw_failure_bound, CalibrationBundle, Cdf, EmpiricalCdf, MinCdf};
pub use error::{Error, Result};
pub use gcurve::GCurve;
pub use robust::{RobustConfig, RobustThresholdReport};

/// Slack, in units of sample counts, used when turning a probability level
/// into an order-statistic index. Keeps `ceil(0.95 * 100)` at 95 even when
/// the level carries a few ulps of rounding error from upstream arithmetic.
pub(crate) const COUNT_SLACK: f64 = 1e-9;
