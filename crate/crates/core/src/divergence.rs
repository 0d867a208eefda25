//! f-divergence generators.
//!
//! A family is described by its generator `f` on `[0, inf)` together with the
//! recession slope `f'(inf) = lim_{t -> inf} f(t) / t`, which is what the
//! perspective `y f(x / y)` tends to as `y -> 0`. All generators here are
//! normalized so that `f(1) = 0`, `f'(1) = 0` and `f >= 0`; adding a multiple
//! of `t - 1` to a generator leaves every divergence unchanged, so nothing is
//! lost by the normalization.
//!
//! | family | `f(t)`              | `f'(inf)` |
//! |--------|---------------------|-----------|
//! | chi2   | `(t - 1)^2`         | `inf`     |
//! | tv     | `|t - 1| / 2`       | `1/2`     |
//! | kl     | `t ln t - t + 1`    | `inf`     |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Which generator a [`DivergenceFamily`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    ChiSquare,
    TotalVariation,
    KullbackLeibler,
    Custom,
}

type Generator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
struct CustomGenerator {
    name: String,
    f: Generator,
    slope_at_infinity: f64,
}

/// An f-divergence family.
#[derive(Clone)]
pub struct DivergenceFamily {
    kind: FamilyKind,
    custom: Option<CustomGenerator>,
}

/// Convexity/normalization spot checks run on this many points of `[0, 8]`.
const REGISTRATION_GRID: usize = 64;
const CONVEXITY_SLACK: f64 = 1e-12;

impl DivergenceFamily {
    pub const fn chi_square() -> Self {
        Self {
            kind: FamilyKind::ChiSquare,
            custom: None,
        }
    }

    pub const fn total_variation() -> Self {
        Self {
            kind: FamilyKind::TotalVariation,
            custom: None,
        }
    }

    pub const fn kullback_leibler() -> Self {
        Self {
            kind: FamilyKind::KullbackLeibler,
            custom: None,
        }
    }

    /// Registers a user-supplied generator.
    ///
    /// `f` is only consulted on `[0, inf)`. Registration checks `f(1) = 0`,
    /// non-negativity and midpoint convexity on a 64-point grid; this is a
    /// spot check, not a proof.
    pub fn custom<F>(name: impl Into<String>, f: F, slope_at_infinity: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        if slope_at_infinity.is_nan() || slope_at_infinity < 0.0 {
            return Err(Error::InvalidGenerator(format!(
                "{name}: f'(inf) must be a non-negative extended real, got {slope_at_infinity}"
            )));
        }
        let at_one = f(1.0);
        if at_one.abs() > 1e-12 {
            return Err(Error::InvalidGenerator(format!(
                "{name}: f(1) = {at_one}, expected 0"
            )));
        }
        let grid: Vec<f64> = (0..REGISTRATION_GRID)
            .map(|i| 8.0 * i as f64 / (REGISTRATION_GRID - 1) as f64)
            .collect();
        for &t in &grid {
            let v = f(t);
            if v.is_nan() || v < -1e-12 {
                return Err(Error::InvalidGenerator(format!(
                    "{name}: f({t}) = {v} is negative"
                )));
            }
        }
        for w in grid.windows(3) {
            let (a, b, c) = (f(w[0]), f(w[1]), f(w[2]));
            if a.is_finite() && c.is_finite() && b > 0.5 * (a + c) + CONVEXITY_SLACK {
                return Err(Error::InvalidGenerator(format!(
                    "{name}: not convex around t = {}",
                    w[1]
                )));
            }
        }
        Ok(Self {
            kind: FamilyKind::Custom,
            custom: Some(CustomGenerator {
                name,
                f: Arc::new(f),
                slope_at_infinity,
            }),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Short name used in CLI flags and config files.
    pub fn name(&self) -> &str {
        match self.kind {
            FamilyKind::ChiSquare => "chi2",
            FamilyKind::TotalVariation => "tv",
            FamilyKind::KullbackLeibler => "kl",
            FamilyKind::Custom => self.custom.as_ref().map_or("custom", |c| c.name.as_str()),
        }
    }

    /// Whether `g` and `g^{-1}` have closed forms.
    pub fn has_closed_form_g(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::ChiSquare | FamilyKind::TotalVariation
        )
    }

    /// `lim_{t -> inf} f(t) / t`.
    pub fn f_prime_at_infinity(&self) -> f64 {
        match self.kind {
            FamilyKind::ChiSquare | FamilyKind::KullbackLeibler => f64::INFINITY,
            FamilyKind::TotalVariation => 0.5,
            FamilyKind::Custom => self
                .custom
                .as_ref()
                .map_or(f64::INFINITY, |c| c.slope_at_infinity),
        }
    }

    /// The generator `f(t)`; `+inf` for `t < 0`.
    pub fn f_value(&self, t: f64) -> f64 {
        if t < 0.0 || t.is_nan() {
            return f64::INFINITY;
        }
        if t.is_infinite() {
            return f64::INFINITY;
        }
        match self.kind {
            FamilyKind::ChiSquare => (t - 1.0) * (t - 1.0),
            FamilyKind::TotalVariation => 0.5 * (t - 1.0).abs(),
            FamilyKind::KullbackLeibler => kl_generator(t),
            FamilyKind::Custom => match &self.custom {
                Some(c) => (c.f)(t),
                None => f64::INFINITY,
            },
        }
    }

    /// The perspective `y f(x / y)` for `x, y >= 0`, closed at `y = 0` by its
    /// limit `x f'(inf)` and by `0 f(0 / 0) = 0`.
    pub fn perspective(&self, x: f64, y: f64) -> f64 {
        if y > 0.0 {
            y * self.f_value(x / y)
        } else if x == 0.0 {
            0.0
        } else if x > 0.0 {
            x * self.f_prime_at_infinity()
        } else {
            f64::INFINITY
        }
    }

    /// The two-point objective
    /// `h(z, beta) = beta f(z / beta) + (1 - beta) f((1 - z) / (1 - beta))`,
    /// i.e. the divergence between Bernoulli(z) and Bernoulli(beta).
    pub fn h_objective(&self, z: f64, beta: f64) -> f64 {
        let h = self.perspective(z, beta) + self.perspective(1.0 - z, 1.0 - beta);
        // h(z, z) = 0 exactly; the generic formula can leave a few ulps.
        if z == beta {
            0.0
        } else {
            h
        }
    }

    /// `D_f(p || q) = sum_i q_i f(p_i / q_i)` for discrete distributions.
    pub fn divergence_between_discrete(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: q.len(),
            });
        }
        for v in [p, q] {
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::NotNormalized { sum });
            }
        }
        Ok(p.iter()
            .zip(q)
            .map(|(&pi, &qi)| self.perspective(pi, qi))
            .sum())
    }
}

impl fmt::Debug for DivergenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceFamily")
            .field("kind", &self.kind)
            .field("name", &self.name())
            .field("f_prime_at_infinity", &self.f_prime_at_infinity())
            .finish()
    }
}

impl PartialEq for DivergenceFamily {
    fn eq(&self, other: &Self) -> bool {
        match (&self.custom, &other.custom) {
            (None, None) => self.kind == other.kind,
            (Some(a), Some(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

impl fmt::Display for DivergenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chi2" => Ok(Self::chi_square()),
            "tv" => Ok(Self::total_variation()),
            "kl" => Ok(Self::kullback_leibler()),
            _ => Err(Error::UnknownFamily(s.to_string())),
        }
    }
}

impl serde::Serialize for DivergenceFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for DivergenceFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `t ln t - t + 1`. Near `t = 1` the direct form cancels to zero, so the
/// series `sum_{k>=2} (-u)^k / (k (k - 1))` in `u = t - 1` is used instead.
fn kl_generator(t: f64) -> f64 {
    let u = t - 1.0;
    if u.abs() < 0.1 {
        let mut power = u * u;
        let mut sum = 0.0;
        for k in 2..=24 {
            let term = power / (k * (k - 1)) as f64;
            sum += if k % 2 == 0 { term } else { -term };
            power *= u;
        }
        return sum;
    }
    // 0 ln 0 = 0
    let t_ln_t = if t == 0.0 { 0.0 } else { t * t.ln() };
    (t_ln_t - u).max(0.0)
}
