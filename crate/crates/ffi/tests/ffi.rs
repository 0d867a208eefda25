use std::ffi::CStr;
use std::ptr;

use oodcp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(oodcp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn gcurve_handle_round_trip() {
    let mut curve = ptr::null_mut();
    unsafe {
        assert_eq!(
            oodcp_gcurve_new(OodcpFamily::TotalVariation, 0.1, &mut curve),
            OodcpStatus::Ok
        );
        let (mut g, mut gi) = (0.0, 0.0);
        assert_eq!(oodcp_gcurve_g(curve, 0.5, &mut g), OodcpStatus::Ok);
        assert_eq!(oodcp_gcurve_g_inverse(curve, 0.5, &mut gi), OodcpStatus::Ok);
        assert!((g - 0.4).abs() < 1e-15);
        assert!((gi - 0.6).abs() < 1e-15);
        assert_eq!(
            oodcp_gcurve_g(curve, 0.5, ptr::null_mut()),
            OodcpStatus::NullPointer
        );
        assert!(last_error().contains("out_value"));
        oodcp_gcurve_free(curve);
        oodcp_gcurve_free(ptr::null_mut());
    }
}

#[test]
fn invalid_radius_is_reported() {
    let mut curve = ptr::null_mut();
    let status = unsafe { oodcp_gcurve_new(OodcpFamily::ChiSquare, -1.0, &mut curve) };
    assert_eq!(status, OodcpStatus::InvalidArgument);
    assert!(curve.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn robust_threshold_matches_library() {
    let a: Vec<f64> = (1..=4000).map(|i| i as f64 / 40.0).collect();
    let b: Vec<f64> = (1..=3000).map(|i| (i as f64 / 30.0).sqrt()).collect();
    let mut cal = ptr::null_mut();
    let mut report = OodcpThresholdReport {
        threshold: 0.0,
        feasible: false,
        epsilon_star: 0.0,
        corrected_alpha: 0.0,
        dkw_delta: 0.0,
        quantile_level: 0.0,
    };
    unsafe {
        assert_eq!(oodcp_calibration_new(&mut cal), OodcpStatus::Ok);
        assert_eq!(
            oodcp_calibration_add_domain(cal, a.as_ptr(), a.len()),
            OodcpStatus::Ok
        );
        assert_eq!(
            oodcp_calibration_add_domain(cal, b.as_ptr(), b.len()),
            OodcpStatus::Ok
        );
        assert_eq!(oodcp_calibration_domains(cal), 2);
        let status =
            oodcp_robust_threshold(cal, OodcpFamily::KullbackLeibler, 0.01, 0.2, 0, &mut report);
        assert_eq!(status, OodcpStatus::Ok, "{}", last_error());
    }
    let bundle = oodcp::CalibrationBundle::new(vec![a, b]).unwrap();
    let config =
        oodcp::RobustConfig::new(oodcp::DivergenceFamily::kullback_leibler(), 0.01, 0.2).unwrap();
    let direct = oodcp::robust::robust_threshold(&bundle, &config).unwrap();
    assert!(report.feasible);
    assert_eq!(report.threshold, direct.threshold);
    assert_eq!(Some(report.epsilon_star), direct.epsilon_star);
    assert_eq!(Some(report.corrected_alpha), direct.corrected_alpha);
    assert_eq!(Some(report.quantile_level), direct.quantile_level);

    unsafe {
        let status =
            oodcp_robust_threshold(cal, OodcpFamily::KullbackLeibler, 2.0, 0.01, 0, &mut report);
        assert_eq!(status, OodcpStatus::Infeasible);
        oodcp_calibration_free(cal);
    }
    assert!(!report.feasible);
    assert_eq!(report.threshold, f64::INFINITY);
    assert!(report.epsilon_star.is_nan());
}

#[test]
fn calibration_rejects_bad_scores() {
    let mut cal = ptr::null_mut();
    unsafe {
        oodcp_calibration_new(&mut cal);
        assert_eq!(
            oodcp_calibration_add_domain(cal, ptr::null(), 0),
            OodcpStatus::EmptyInput
        );
        let bad = [1.0, f64::NAN];
        assert_eq!(
            oodcp_calibration_add_domain(cal, bad.as_ptr(), 2),
            OodcpStatus::NonFiniteInput
        );
        assert_eq!(
            oodcp_calibration_add_domain(cal, ptr::null(), 3),
            OodcpStatus::NullPointer
        );
        assert_eq!(oodcp_calibration_domains(cal), 0);
        let mut report = std::mem::zeroed();
        assert_eq!(
            oodcp_robust_threshold(cal, OodcpFamily::TotalVariation, 0.1, 0.1, 0, &mut report),
            OodcpStatus::EmptyInput
        );
        oodcp_calibration_free(cal);
    }
}

#[test]
fn scalar_functions() {
    let ms = [10_000usize];
    let (mut delta, mut alpha, mut bound, mut t) = (0.0, 0.0, 0.0, 0.0);
    let scores: Vec<f64> = (1..=19).map(f64::from).collect();
    unsafe {
        assert_eq!(
            oodcp_dkw_failure_bound(ms.as_ptr(), 1, 0.02, &mut delta),
            OodcpStatus::Ok
        );
        assert_eq!(
            oodcp_corrected_alpha(
                ms.as_ptr(),
                1,
                OodcpFamily::TotalVariation,
                0.05,
                0.1,
                0.02,
                &mut alpha
            ),
            OodcpStatus::Ok
        );
        assert_eq!(
            oodcp_coverage_lower_bound(
                ms.as_ptr(),
                1,
                OodcpFamily::TotalVariation,
                0.05,
                0.1,
                0.02,
                &mut bound
            ),
            OodcpStatus::Ok
        );
        assert_eq!(
            oodcp_scp_threshold(scores.as_ptr(), scores.len(), 0.1, &mut t),
            OodcpStatus::Ok
        );
        assert_eq!(
            oodcp_scp_threshold(scores.as_ptr(), scores.len(), 1.5, &mut t),
            OodcpStatus::InvalidArgument
        );
        assert_eq!(
            oodcp_corrected_alpha(
                ms.as_ptr(),
                1,
                OodcpFamily::TotalVariation,
                0.05,
                0.1,
                1.5,
                &mut alpha
            ),
            OodcpStatus::Infeasible
        );
    }
    assert!((delta - 2.0 * (-8.0f64).exp()).abs() < 1e-15);
    assert!((bound - 0.879410).abs() < 5e-7);
    assert_eq!(t, 18.0);
    let version = unsafe { CStr::from_ptr(oodcp_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
