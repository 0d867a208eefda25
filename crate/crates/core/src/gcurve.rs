//! The level-distortion curve of an f-divergence ball.
//!
//! For a family `f` and radius `rho`,
//!
//! ```text
//! g(beta)       = inf { z in [0, 1]    : h(z, beta) <= rho }
//! g^{-1}(tau)   = sup { beta in [tau, 1] : h(tau, beta) <= rho }
//! ```
//!
//! `g(F(t))` is the smallest CDF value at `t` that any distribution within
//! divergence `rho` of `F` can have, and `g^{-1}` lifts a desired coverage
//! level to the quantile level that has to be read off the source CDF.
//!
//! Chi-square and total variation use closed forms. Every other family runs a
//! bisection that relies on `h(., beta)` being non-increasing on `[0, beta]`
//! and `h(tau, .)` being non-decreasing on `[tau, 1]`. The bisection answer is
//! rounded in the coverage-safe direction: `g` returns the lower bracket end
//! and `g^{-1}` the upper bracket end, each within `tolerance` of the exact
//! value.

use crate::divergence::{DivergenceFamily, FamilyKind};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_TOLERANCE: f64 = 1e-4;

/// `(g, g^{-1})` for a fixed family and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct GCurve {
    family: DivergenceFamily,
    rho: f64,
    tolerance: f64,
}

impl GCurve {
    pub fn new(family: DivergenceFamily, rho: f64) -> Result<Self> {
        if rho.is_nan() || rho < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rho must be >= 0, got {rho}"
            )));
        }
        Ok(Self {
            family,
            rho,
            tolerance: DEFAULT_TOLERANCE,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance <= MAX_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must lie in (0, {MAX_TOLERANCE}], got {tolerance}"
            )));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn family(&self) -> &DivergenceFamily {
        &self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn feasible(&self, z: f64, beta: f64) -> bool {
        self.family.h_objective(z, beta) <= self.rho
    }

    /// `g(beta)`; `beta` is clamped to `[0, 1]`.
    pub fn g(&self, beta: f64) -> f64 {
        let beta = clamp_unit(beta);
        if self.rho == 0.0 {
            return beta;
        }
        if self.rho.is_infinite() {
            return 0.0;
        }
        match self.family.kind() {
            FamilyKind::ChiSquare => (beta - (self.rho * beta * (1.0 - beta)).sqrt()).max(0.0),
            FamilyKind::TotalVariation => (beta - self.rho).max(0.0),
            _ => self.g_generic(beta),
        }
    }

    /// `g^{-1}(tau)`; `tau` is clamped to `[0, 1]`.
    pub fn g_inverse(&self, tau: f64) -> f64 {
        let tau = clamp_unit(tau);
        if self.rho == 0.0 || tau == 1.0 {
            return tau;
        }
        if self.rho.is_infinite() {
            return 1.0;
        }
        match self.family.kind() {
            FamilyKind::ChiSquare => {
                let rho = self.rho;
                let disc = rho * rho + 4.0 * rho * tau * (1.0 - tau);
                let root = ((2.0 * tau + rho) + disc.sqrt()) / (2.0 * (1.0 + rho));
                root.clamp(tau.max(rho / (rho + 1.0)), 1.0)
            }
            FamilyKind::TotalVariation => (tau + self.rho).min(1.0),
            _ => self.g_inverse_generic(tau),
        }
    }

    /// `g` by bisection on `z in [0, beta]`, regardless of closed forms.
    pub fn g_generic(&self, beta: f64) -> f64 {
        let beta = clamp_unit(beta);
        if self.feasible(0.0, beta) {
            return 0.0;
        }
        // h(beta, beta) = 0 <= rho, so the bracket always holds a feasible end.
        debug_assert!(self.feasible(beta, beta));
        let (mut lo, mut hi) = (0.0, beta);
        while hi - lo > self.tolerance {
            let mid = 0.5 * (lo + hi);
            if self.feasible(mid, beta) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// `g^{-1}` by bisection on `beta in [tau, 1]`, regardless of closed forms.
    pub fn g_inverse_generic(&self, tau: f64) -> f64 {
        let tau = clamp_unit(tau);
        if self.feasible(tau, 1.0) {
            return 1.0;
        }
        let (mut lo, mut hi) = (tau, 1.0);
        while hi - lo > self.tolerance {
            let mid = 0.5 * (lo + hi);
            if self.feasible(tau, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Multi-input `g`: the worst case over the convex hull of several source
    /// levels is attained at the smallest one.
    pub fn g_multi(&self, betas: &[f64]) -> Result<f64> {
        let min = betas
            .iter()
            .copied()
            .reduce(f64::min)
            .ok_or(Error::EmptyInput)?;
        Ok(self.g(min))
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(family: DivergenceFamily, rho: f64) -> GCurve {
        GCurve::new(family, rho).unwrap()
    }

    fn tv(rho: f64) -> GCurve {
        curve(DivergenceFamily::total_variation(), rho)
    }

    fn chi2(rho: f64) -> GCurve {
        curve(DivergenceFamily::chi_square(), rho)
    }

    fn kl(rho: f64) -> GCurve {
        curve(DivergenceFamily::kullback_leibler(), rho)
    }

    /// Largest feasible beta on a uniform grid over [tau, 1].
    fn grid_g_inverse(family: &DivergenceFamily, rho: f64, tau: f64, steps: usize) -> f64 {
        (0..=steps)
            .map(|k| tau + (1.0 - tau) * k as f64 / steps as f64)
            .filter(|&b| family.h_objective(tau, b) <= rho)
            .fold(tau, f64::max)
    }

    /// Smallest feasible z on a uniform grid over [0, beta].
    fn grid_g(family: &DivergenceFamily, rho: f64, beta: f64, steps: usize) -> f64 {
        (0..=steps)
            .map(|k| beta * k as f64 / steps as f64)
            .filter(|&z| family.h_objective(z, beta) <= rho)
            .fold(beta, f64::min)
    }

    #[test]
    fn closed_form_examples() {
        assert!((tv(0.1).g(0.5) - 0.4).abs() < 1e-15);
        assert!((chi2(0.25).g(0.9) - 0.75).abs() < 1e-12);
        for c in [tv(0.3), chi2(0.3), kl(0.3)] {
            assert_eq!(c.g(0.0), 0.0);
        }
        assert!((tv(0.05).g_inverse(0.9) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn g_inverse_at_one_is_one() {
        for rho in [0.0, 0.01, 0.5, 3.0] {
            for c in [tv(rho), chi2(rho), kl(rho)] {
                assert_eq!(c.g_inverse(1.0), 1.0);
            }
        }
    }

    #[test]
    fn kl_g_inverse_matches_grid_oracle() {
        let family = DivergenceFamily::kullback_leibler();
        let oracle = grid_g_inverse(&family, 0.01, 0.9, 100_000);
        assert!((kl(0.01).g_inverse(0.9) - oracle).abs() < 1e-4);
        for &(rho, tau) in &[(0.05, 0.5), (0.2, 0.1), (0.3, 0.95)] {
            let oracle = grid_g_inverse(&family, rho, tau, 100_000);
            assert!((kl(rho).g_inverse(tau) - oracle).abs() < 1e-4);
        }
        for &(rho, beta) in &[(0.01, 0.9), (0.05, 0.5), (0.2, 0.3)] {
            let oracle = grid_g(&family, rho, beta, 100_000);
            assert!((kl(rho).g(beta) - oracle).abs() < 1e-4);
        }
    }

    #[test]
    fn kl_plateau_at_zero() {
        // h(0, beta) = -ln(1 - beta) for KL, so g vanishes up to 1 - e^{-rho}.
        let rho: f64 = 0.2;
        let edge = 1.0 - (-rho).exp();
        let c = kl(rho);
        assert!((c.g_inverse(0.0) - edge).abs() < 1e-9);
        assert_eq!(c.g(edge - 1e-6), 0.0);
        assert!(c.g(edge + 1e-3) > 0.0);
    }

    #[test]
    fn chi2_plateau_at_zero() {
        let rho = 0.5;
        assert!((chi2(rho).g_inverse(0.0) - rho / (rho + 1.0)).abs() < 1e-12);
        assert!((chi2(rho).g_inverse_generic(0.0) - rho / (rho + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn multi_input() {
        assert!((tv(0.1).g_multi(&[0.5, 0.9, 0.7]).unwrap() - 0.4).abs() < 1e-15);
        assert!((chi2(0.25).g_multi(&[0.9, 1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(kl(0.1).g_multi(&[0.6]).unwrap(), kl(0.1).g(0.6));
        assert!(matches!(tv(0.1).g_multi(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn multi_input_matches_hull_brute_force() {
        // inf over mixtures lambda b1 + (1 - lambda) b2 of the feasible z.
        let family = DivergenceFamily::chi_square();
        let rho = 0.1;
        for &(b1, b2) in &[(0.3, 0.8), (0.9, 0.5), (0.6, 0.6)] {
            let brute = (0..=100)
                .map(|k| {
                    let lam = k as f64 / 100.0;
                    grid_g(&family, rho, lam * b1 + (1.0 - lam) * b2, 4000)
                })
                .fold(f64::INFINITY, f64::min);
            let got = chi2(rho).g_multi(&[b1, b2]).unwrap();
            assert!((got - brute).abs() < 1e-3, "{got} vs {brute}");
        }
    }

    #[test]
    fn zero_radius_is_identity() {
        for c in [tv(0.0), chi2(0.0), kl(0.0)] {
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                assert_eq!(c.g(x), x);
                assert_eq!(c.g_inverse(x), x);
                assert!((c.g_generic(x) - x).abs() <= 1e-10);
                assert!((c.g_inverse_generic(x) - x).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn tv_saturates() {
        let c = tv(0.05);
        assert!((c.g(1.0) - 0.95).abs() < 1e-15);
        assert_eq!(c.g_inverse(0.97), 1.0);
        assert!((c.g_generic(1.0) - 0.95).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GCurve::new(DivergenceFamily::total_variation(), -0.1).is_err());
        assert!(tv(0.1).with_tolerance(0.0).is_err());
        assert!(tv(0.1).with_tolerance(1e-3).is_err());
        assert!(tv(0.1).with_tolerance(1e-6).is_ok());
    }

    #[test]
    fn deflation_is_strict_inside() {
        for rho in [0.01, 0.1, 1.0] {
            for c in [tv(rho), chi2(rho), kl(rho)] {
                for i in 1..100 {
                    let b = i as f64 / 100.0;
                    assert!(c.g(b) < b, "{:?} g({b}) = {}", c.family(), c.g(b));
                }
            }
        }
    }

    #[test]
    fn custom_family_uses_bisection() {
        let hellinger =
            DivergenceFamily::custom("hellinger", |t: f64| (t.sqrt() - 1.0).powi(2), 1.0).unwrap();
        let c = curve(hellinger.clone(), 0.05);
        let oracle = grid_g_inverse(&hellinger, 0.05, 0.8, 100_000);
        assert!((c.g_inverse(0.8) - oracle).abs() < 1e-4);
        let b = c.g_inverse(0.8);
        assert!((c.g(b) - 0.8).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn g_multi_is_permutation_invariant(
            mut betas in prop::collection::vec(0.0f64..=1.0, 1..6),
            extra in 0.0f64..=1.0,
            rho in 0.0f64..1.0,
        ) {
            for c in [tv(rho), chi2(rho), kl(rho)] {
                let base = c.g_multi(&betas).unwrap();
                betas.reverse();
                prop_assert_eq!(c.g_multi(&betas).unwrap(), base);
                let min = betas.iter().copied().fold(f64::INFINITY, f64::min);
                let mut grown = betas.clone();
                grown.push(min.max(extra));
                prop_assert_eq!(c.g_multi(&grown).unwrap(), base);
            }
        }

        #[test]
        fn g_inverse_is_a_right_inverse(tau in 0.01f64..0.99, rho in 0.001f64..0.5) {
            for c in [tv(rho), chi2(rho), kl(rho)] {
                let b = c.g_inverse(tau);
                prop_assert!(b >= tau);
                if b < 1.0 && c.family().has_closed_form_g() {
                    prop_assert!((c.g(b) - tau).abs() < 1e-6, "{:?}", c.family());
                }
                if b < 1.0 {
                    // bisection brackets the exact inverse within the tolerance
                    let below = (b - 2.0 * c.tolerance()).max(tau);
                    prop_assert!(c.g(b) >= tau - 1e-9, "{:?}", c.family());
                    prop_assert!(c.g(below) <= tau + 1e-9, "{:?}", c.family());
                }
            }
        }
    }
}
