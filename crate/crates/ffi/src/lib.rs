//! C ABI over `oodcp`.
//!
//! Every fallible function returns an [`OodcpStatus`] and writes its result
//! through an out-pointer. On failure a description is available from
//! [`oodcp_last_error_message`] on the same thread. Panics never cross the
//! boundary; they surface as [`OodcpStatus::Internal`].
//!
//! Handles are opaque and owned by the caller once created; release them
//! with the matching `_free` function. Passing a freed or foreign pointer is
//! undefined behaviour, as in any C API.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use oodcp::empirical::dkw_failure_bound;
use oodcp::robust::{
    corrected_alpha, coverage_lower_bound, robust_threshold, DEFAULT_EPSILON_GRID,
};
use oodcp::{
    scp_threshold, CalibrationBundle, DivergenceFamily, EmpiricalCdf, Error, GCurve, RobustConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    EmptyInput = 3,
    NonFiniteInput = 4,
    /// The request is valid but only the full prediction set satisfies it.
    Infeasible = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodcpFamily {
    ChiSquare = 0,
    TotalVariation = 1,
    KullbackLeibler = 2,
}

impl From<OodcpFamily> for DivergenceFamily {
    fn from(f: OodcpFamily) -> Self {
        match f {
            OodcpFamily::ChiSquare => DivergenceFamily::chi_square(),
            OodcpFamily::TotalVariation => DivergenceFamily::total_variation(),
            OodcpFamily::KullbackLeibler => DivergenceFamily::kullback_leibler(),
        }
    }
}

/// Opaque `g` curve for one family and radius.
pub struct OodcpGCurve {
    inner: GCurve,
}

/// Opaque set of per-domain calibration scores.
pub struct OodcpCalibration {
    domains: Vec<Vec<f64>>,
}

/// Robust threshold report. The optional fields are NaN when `feasible` is
/// false; `threshold` is then `+inf`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodcpThresholdReport {
    pub threshold: f64,
    pub feasible: bool,
    pub epsilon_star: f64,
    pub corrected_alpha: f64,
    pub dkw_delta: f64,
    pub quantile_level: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(OodcpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::EmptyInput | Error::EmptyCalibration => OodcpStatus::EmptyInput,
            Error::NonFiniteScore { .. } => OodcpStatus::NonFiniteInput,
            Error::Infeasible | Error::InfeasibleEpsilon(_) => OodcpStatus::Infeasible,
            Error::Io(_) | Error::Json(_) | Error::TrialFailed { .. } => OodcpStatus::Internal,
            _ => OodcpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OodcpStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> OodcpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            OodcpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            OodcpStatus::Internal
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn oodcp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string with static lifetime.
#[no_mangle]
pub extern "C" fn oodcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a curve; `*out_curve` receives the handle.
///
/// # Safety
/// `out_curve` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_gcurve_new(
    family: OodcpFamily,
    rho: f64,
    out_curve: *mut *mut OodcpGCurve,
) -> OodcpStatus {
    guard(|| {
        let slot = out(out_curve, "out_curve")?;
        let inner = GCurve::new(family.into(), rho)?;
        *slot = Box::into_raw(Box::new(OodcpGCurve { inner }));
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a handle from [`oodcp_gcurve_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodcp_gcurve_free(curve: *mut OodcpGCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// # Safety
/// `curve` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_gcurve_g(
    curve: *const OodcpGCurve,
    beta: f64,
    out_value: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let c = curve.as_ref().ok_or_else(|| null("curve"))?;
        *out(out_value, "out_value")? = c.inner.g(beta);
        Ok(())
    })
}

/// # Safety
/// `curve` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_gcurve_g_inverse(
    curve: *const OodcpGCurve,
    tau: f64,
    out_value: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let c = curve.as_ref().ok_or_else(|| null("curve"))?;
        *out(out_value, "out_value")? = c.inner.g_inverse(tau);
        Ok(())
    })
}

/// Creates an empty calibration set.
///
/// # Safety
/// `out_calibration` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_calibration_new(
    out_calibration: *mut *mut OodcpCalibration,
) -> OodcpStatus {
    guard(|| {
        let slot = out(out_calibration, "out_calibration")?;
        *slot = Box::into_raw(Box::new(OodcpCalibration {
            domains: Vec::new(),
        }));
        Ok(())
    })
}

/// Appends one source domain; the scores are copied.
///
/// # Safety
/// `calibration` must be a live handle and `scores` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn oodcp_calibration_add_domain(
    calibration: *mut OodcpCalibration,
    scores: *const f64,
    len: usize,
) -> OodcpStatus {
    guard(|| {
        let cal = calibration.as_mut().ok_or_else(|| null("calibration"))?;
        let scores = input(scores, len, "scores")?;
        EmpiricalCdf::new(scores)?;
        cal.domains.push(scores.to_vec());
        Ok(())
    })
}

/// Number of domains added so far; 0 for a null handle.
///
/// # Safety
/// `calibration` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oodcp_calibration_domains(calibration: *const OodcpCalibration) -> usize {
    calibration.as_ref().map_or(0, |c| c.domains.len())
}

/// # Safety
/// `calibration` must be null or a handle from [`oodcp_calibration_new`] not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodcp_calibration_free(calibration: *mut OodcpCalibration) {
    if !calibration.is_null() {
        drop(Box::from_raw(calibration));
    }
}

/// Robust threshold over every domain in `calibration`. `epsilon_grid` of 0
/// selects the default grid. Returns [`OodcpStatus::Infeasible`] with a
/// filled full-set report when no finite threshold exists.
///
/// # Safety
/// `calibration` must be a live handle and `out_report` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_robust_threshold(
    calibration: *const OodcpCalibration,
    family: OodcpFamily,
    rho: f64,
    alpha: f64,
    epsilon_grid: usize,
    out_report: *mut OodcpThresholdReport,
) -> OodcpStatus {
    guard(|| {
        let cal = calibration.as_ref().ok_or_else(|| null("calibration"))?;
        let slot = out(out_report, "out_report")?;
        let grid = if epsilon_grid == 0 {
            DEFAULT_EPSILON_GRID
        } else {
            epsilon_grid
        };
        let config = RobustConfig::with_grid(family.into(), rho, alpha, grid)?;
        let bundle = CalibrationBundle::new(cal.domains.clone())?;
        let report = robust_threshold(&bundle, &config)?;
        *slot = OodcpThresholdReport {
            threshold: report.threshold,
            feasible: report.feasible,
            epsilon_star: report.epsilon_star.unwrap_or(f64::NAN),
            corrected_alpha: report.corrected_alpha.unwrap_or(f64::NAN),
            dkw_delta: report.dkw_delta.unwrap_or(f64::NAN),
            quantile_level: report.quantile_level.unwrap_or(f64::NAN),
        };
        if report.feasible {
            Ok(())
        } else {
            Err(Failure(
                OodcpStatus::Infeasible,
                "only the full set is valid".into(),
            ))
        }
    })
}

/// Plain split conformal threshold; `+inf` when the rank exceeds the sample.
///
/// # Safety
/// `scores` must be valid for `len` reads and `out_threshold` for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_scp_threshold(
    scores: *const f64,
    len: usize,
    alpha: f64,
    out_threshold: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let scores = input(scores, len, "scores")?;
        *out(out_threshold, "out_threshold")? = scp_threshold(scores, alpha)?;
        Ok(())
    })
}

/// `2 sum_i exp(-2 m_i eps^2)`.
///
/// # Safety
/// `ms` must be valid for `len` reads and `out_delta` for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_dkw_failure_bound(
    ms: *const usize,
    len: usize,
    epsilon: f64,
    out_delta: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let ms = input(ms, len, "ms")?;
        *out(out_delta, "out_delta")? = dkw_failure_bound(ms, epsilon);
        Ok(())
    })
}

/// Corrected miscoverage for a fixed DKW slack.
///
/// # Safety
/// `ms` must be valid for `len` reads and `out_alpha` for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_corrected_alpha(
    ms: *const usize,
    len: usize,
    family: OodcpFamily,
    rho: f64,
    alpha: f64,
    epsilon: f64,
    out_alpha: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let ms = input(ms, len, "ms")?;
        let curve = GCurve::new(family.into(), rho)?;
        *out(out_alpha, "out_alpha")? = corrected_alpha(ms, &curve, alpha, epsilon)?;
        Ok(())
    })
}

/// Finite-sample coverage lower bound for a fixed DKW slack.
///
/// # Safety
/// `ms` must be valid for `len` reads and `out_bound` for writes.
#[no_mangle]
pub unsafe extern "C" fn oodcp_coverage_lower_bound(
    ms: *const usize,
    len: usize,
    family: OodcpFamily,
    rho: f64,
    alpha: f64,
    epsilon: f64,
    out_bound: *mut f64,
) -> OodcpStatus {
    guard(|| {
        let ms = input(ms, len, "ms")?;
        let curve = GCurve::new(family.into(), rho)?;
        *out(out_bound, "out_bound")? = coverage_lower_bound(ms, &curve, alpha, epsilon)?;
        Ok(())
    })
}
