//! Coverage simulations on Gaussian linear-regression data.
//!
//! Each source domain draws `X ~ N(mu_i, sigma_sx^2 I)` and
//! `Y | X = x ~ N(<w*, x> + b*, sigma_sy^2)`. The target draws `X` from a
//! mixture of the source marginals and uses the noise scale `sigma_ty`
//! instead. A trial fits OLS on source training data, scores calibration
//! data with `|y_hat - y|`, builds both the plain SCP threshold (pooled
//! scores) and the robust threshold (one empirical CDF per source), and
//! measures coverage and interval length on target test data.
//!
//! Trials are independent: trial `k` uses a ChaCha20 stream selected by `k`
//! under the experiment seed, so results do not depend on thread count or
//! completion order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::scp_threshold;
use crate::divergence::{DivergenceFamily, FamilyKind};
use crate::empirical::{Cdf, EmpiricalCdf, MinCdf};
use crate::error::{Error, Result};
use crate::gcurve::GCurve;
use crate::io::{ext_real, ext_real_vec, fmt_f64};
use crate::robust::{optimize_epsilon, EpsilonChoice};

pub const SCHEMA_VERSION: u32 = 1;

/// Identity of the random generator and how per-trial streams are derived.
pub const GENERATOR: &str =
    "rand_chacha::ChaCha20Rng; seed_from_u64(seed); set_stream(trial index)";

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "OODCP_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: usize,
    pub w_star: Vec<f64>,
    pub b_star: f64,
    /// Per-source means of `X`; the number of entries is the number of
    /// source domains.
    pub mu_list: Vec<Vec<f64>>,
    pub sigma_sx: f64,
    pub sigma_sy: f64,
    pub sigma_ty: f64,
    /// Target mixture weights over the source `X` marginals; uniform when
    /// absent.
    pub target_mix: Option<Vec<f64>>,
    pub m_train: usize,
    pub n_calib: usize,
    pub m_test: usize,
    pub alpha_list: Vec<f64>,
    pub family: DivergenceFamily,
    /// Ambiguity radius. When absent, `rho_multiplier * rho_oracle(...)`.
    pub rho: Option<f64>,
    pub rho_multiplier: f64,
    pub epsilon_grid: usize,
    pub n_trials: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::single_source()
    }
}

impl ExperimentConfig {
    /// One source, target differs only in label noise (`sigma_ty = 1.5`).
    pub fn single_source() -> Self {
        let dims = 5;
        Self {
            dims,
            w_star: vec![1.0; dims],
            b_star: 1.0,
            mu_list: vec![vec![0.0; dims]],
            sigma_sx: 1.0,
            sigma_sy: 1.0,
            sigma_ty: 1.5,
            target_mix: None,
            m_train: 2000,
            n_calib: 2000,
            m_test: 1000,
            alpha_list: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            family: DivergenceFamily::kullback_leibler(),
            rho: None,
            rho_multiplier: 1.5,
            epsilon_grid: crate::robust::DEFAULT_EPSILON_GRID,
            n_trials: 1000,
            seed: 2024,
        }
    }

    /// Two sources at `+1` and `-1`, target an equal mixture of both.
    pub fn multi_source() -> Self {
        let base = Self::single_source();
        let dims = base.dims;
        Self {
            mu_list: vec![vec![1.0; dims], vec![-1.0; dims]],
            target_mix: Some(vec![0.5, 0.5]),
            ..base
        }
    }

    pub fn sources(&self) -> usize {
        self.mu_list.len()
    }

    /// Every violated invariant, or `Ok` when there are none.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(self.dims >= 1, "dims must be >= 1".into());
        need(
            self.w_star.len() == self.dims,
            format!(
                "w_star has {} entries, dims is {}",
                self.w_star.len(),
                self.dims
            ),
        );
        need(
            self.w_star.iter().all(|v| v.is_finite()),
            "w_star must be finite".into(),
        );
        need(self.b_star.is_finite(), "b_star must be finite".into());
        need(
            !self.mu_list.is_empty(),
            "mu_list must name at least one source".into(),
        );
        for (i, mu) in self.mu_list.iter().enumerate() {
            need(
                mu.len() == self.dims,
                format!(
                    "mu_list[{i}] has {} entries, dims is {}",
                    mu.len(),
                    self.dims
                ),
            );
            need(
                mu.iter().all(|v| v.is_finite()),
                format!("mu_list[{i}] must be finite"),
            );
        }
        for (name, v) in [
            ("sigma_sx", self.sigma_sx),
            ("sigma_sy", self.sigma_sy),
            ("sigma_ty", self.sigma_ty),
        ] {
            need(
                v > 0.0 && v.is_finite(),
                format!("{name} must be a positive finite number, got {v}"),
            );
        }
        if let Some(mix) = &self.target_mix {
            need(
                mix.len() == self.mu_list.len(),
                format!(
                    "target_mix has {} weights for {} sources",
                    mix.len(),
                    self.mu_list.len()
                ),
            );
            need(
                mix.iter().all(|&w| w >= 0.0 && w.is_finite()),
                "target_mix weights must be >= 0".into(),
            );
            let sum: f64 = mix.iter().sum();
            need(
                (sum - 1.0).abs() <= 1e-9,
                format!("target_mix sums to {sum}, expected 1"),
            );
        }
        need(
            self.m_train > self.dims + 1,
            format!(
                "m_train must exceed dims + 1 = {}, got {}",
                self.dims + 1,
                self.m_train
            ),
        );
        need(
            self.n_calib >= self.mu_list.len().max(1),
            "n_calib must give every source at least one calibration point".into(),
        );
        need(self.m_test >= 1, "m_test must be >= 1".into());
        need(
            !self.alpha_list.is_empty(),
            "alpha_list must not be empty".into(),
        );
        for &a in &self.alpha_list {
            need(a > 0.0 && a < 1.0, format!("alpha {a} is outside (0, 1)"));
        }
        if let Some(rho) = self.rho {
            need(rho >= 0.0, format!("rho must be >= 0, got {rho}"));
        }
        need(
            self.rho_multiplier >= 0.0 && self.rho_multiplier.is_finite(),
            "rho_multiplier must be a non-negative finite number".into(),
        );
        need(self.epsilon_grid >= 10, "epsilon_grid must be >= 10".into());
        need(self.n_trials >= 1, "n_trials must be >= 1".into());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// The radius actually used for the robust threshold.
    pub fn effective_rho(&self) -> f64 {
        self.rho.unwrap_or_else(|| {
            self.rho_multiplier * rho_oracle(self.sigma_sy, self.sigma_ty, &self.family)
        })
    }

    fn mixture(&self) -> Vec<f64> {
        self.target_mix.clone().unwrap_or_else(|| {
            let d = self.mu_list.len();
            vec![1.0 / d as f64; d]
        })
    }
}

/// Splits `total` as evenly as possible over `parts`, earlier parts taking the
/// remainder.
pub fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

/// `y_hat = <w, x> + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// Row-major regression data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub dims: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Source index each row was drawn from.
    pub source: Vec<usize>,
}

impl Dataset {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.x
            .chunks_exact(self.dims.max(1))
            .zip(self.y.iter().copied())
    }

    pub fn extend(&mut self, other: Dataset) {
        debug_assert_eq!(self.dims, other.dims);
        self.x.extend(other.x);
        self.y.extend(other.y);
        self.source.extend(other.source);
    }
}

fn draw_row<R: Rng + ?Sized>(mu: &[f64], sigma_x: f64, rng: &mut R, out: &mut Vec<f64>) {
    for &m in mu {
        let z: f64 = StandardNormal.sample(rng);
        out.push(m + sigma_x * z);
    }
}

/// `count` draws of `x ~ N(mu, sigma_x^2 I)`, `y = <w, x> + b + N(0, sigma_y^2)`.
pub fn gen_gaussian_linear<R: Rng + ?Sized>(
    mu: &[f64],
    sigma_x: f64,
    sigma_y: f64,
    model: &LinearModel,
    count: usize,
    rng: &mut R,
) -> Dataset {
    let mut data = Dataset::new(mu.len());
    data.x.reserve(count * mu.len());
    for _ in 0..count {
        let start = data.x.len();
        draw_row(mu, sigma_x, rng, &mut data.x);
        let noise: f64 = StandardNormal.sample(rng);
        data.y
            .push(model.predict(&data.x[start..]) + sigma_y * noise);
    }
    data.source = vec![0; count];
    data
}

/// Target data: each row picks a source by `target_mix`, draws `x` from that
/// source's marginal and labels it with the target noise `sigma_ty`.
pub fn gen_target_mixture<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    count: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let mix = config.mixture();
    let picker = WeightedIndex::new(&mix)
        .map_err(|e| Error::InvalidParameter(format!("target_mix: {e}")))?;
    let model = oracle_model(config);
    let mut data = Dataset::new(config.dims);
    for _ in 0..count {
        let src = picker.sample(rng);
        let start = data.x.len();
        draw_row(&config.mu_list[src], config.sigma_sx, rng, &mut data.x);
        let noise: f64 = StandardNormal.sample(rng);
        data.y
            .push(model.predict(&data.x[start..]) + config.sigma_ty * noise);
        data.source.push(src);
    }
    Ok(data)
}

fn oracle_model(config: &ExperimentConfig) -> LinearModel {
    LinearModel {
        w: config.w_star.clone(),
        b: config.b_star,
    }
}

/// Relative size below which a Cholesky pivot counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least squares with an intercept column, via the normal equations.
pub fn fit_ols(data: &Dataset) -> Result<LinearModel> {
    let (n, l) = (data.len(), data.dims);
    if n <= l + 1 {
        return Err(Error::RankDeficient);
    }
    let design = DMatrix::from_fn(
        n,
        l + 1,
        |i, j| if j == l { 1.0 } else { data.x[i * l + j] },
    );
    let y = DVector::from_column_slice(&data.y);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * y;
    let scale: Vec<f64> = gram.diagonal().iter().copied().collect();
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let pivots = chol.l_dirty().diagonal();
    if pivots
        .iter()
        .zip(&scale)
        .any(|(p, s)| p * p <= RANK_TOLERANCE * s)
    {
        return Err(Error::RankDeficient);
    }
    let coef = chol.solve(&rhs);
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(LinearModel {
        w: coef.rows(0, l).iter().copied().collect(),
        b: coef[l],
    })
}

/// `|y_hat(x) - y|`.
pub fn abs_residual_score(model: &LinearModel, x: &[f64], y: f64) -> f64 {
    (model.predict(x) - y).abs()
}

fn half_normal_pdf(x: f64, sigma: f64) -> f64 {
    (2.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt())) * (-0.5 * (x / sigma).powi(2)).exp()
}

const QUADRATURE_PANELS: usize = 20_000;

/// `D_f(target || source)` between the half-normal laws of `|N(0, sigma_ty^2)|`
/// and `|N(0, sigma_sy^2)|`, by composite Simpson quadrature on
/// `[0, 12 max(sigma)]`.
pub fn half_normal_divergence_quadrature(
    sigma_sy: f64,
    sigma_ty: f64,
    family: &DivergenceFamily,
) -> f64 {
    let upper = 12.0 * sigma_sy.max(sigma_ty);
    let h = upper / QUADRATURE_PANELS as f64;
    let integrand =
        |x: f64| family.perspective(half_normal_pdf(x, sigma_ty), half_normal_pdf(x, sigma_sy));
    let mut acc = integrand(0.0) + integrand(upper);
    for i in 1..QUADRATURE_PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    (acc * h / 3.0).max(0.0)
}

/// Divergence from the source score law to the target score law when the
/// fitted model is exact, i.e. between half-normals of scale `sigma_sy` and
/// `sigma_ty`. Folding preserves the density ratio, so the Gaussian closed
/// form applies to KL. Chi-square is `+inf` once `sigma_ty^2 >= 2 sigma_sy^2`,
/// where the integral diverges.
pub fn rho_oracle(sigma_sy: f64, sigma_ty: f64, family: &DivergenceFamily) -> f64 {
    if sigma_sy == sigma_ty {
        return 0.0;
    }
    match family.kind() {
        FamilyKind::KullbackLeibler => {
            (sigma_sy / sigma_ty).ln() + sigma_ty * sigma_ty / (2.0 * sigma_sy * sigma_sy) - 0.5
        }
        FamilyKind::ChiSquare if sigma_ty * sigma_ty >= 2.0 * sigma_sy * sigma_sy => f64::INFINITY,
        _ => half_normal_divergence_quadrature(sigma_sy, sigma_ty, family),
    }
}

/// Coverage and length of both methods at one miscoverage level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaOutcome {
    pub alpha: f64,
    pub coverage_scp: f64,
    pub coverage_ood: f64,
    #[serde(with = "ext_real")]
    pub avg_length_scp: f64,
    #[serde(with = "ext_real")]
    pub avg_length_ood: f64,
    pub ood_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub outcomes: Vec<AlphaOutcome>,
}

/// Data-independent pieces shared by every trial of an experiment.
#[derive(Debug, Clone)]
struct TrialPlan {
    train_split: Vec<usize>,
    calib_split: Vec<usize>,
    /// Robust quantile level per alpha; `None` when infeasible.
    levels: Vec<Option<EpsilonChoice>>,
}

impl TrialPlan {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let d = config.sources();
        let calib_split = split_evenly(config.n_calib, d);
        let curve = GCurve::new(config.family.clone(), config.effective_rho())?;
        let levels = config
            .alpha_list
            .iter()
            .map(|&alpha| {
                match optimize_epsilon(&calib_split, &curve, alpha, config.epsilon_grid) {
                    Ok(c) => Ok(Some(c)),
                    Err(Error::Infeasible) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            train_split: split_evenly(config.m_train, d),
            calib_split,
            levels,
        })
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// One trial with its own RNG stream.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    let plan = TrialPlan::new(config)?;
    run_planned_trial(config, &plan, trial)
}

fn run_planned_trial(
    config: &ExperimentConfig,
    plan: &TrialPlan,
    trial: usize,
) -> Result<TrialResult> {
    let mut rng = trial_rng(config.seed, trial);
    let oracle = oracle_model(config);

    let mut train = Dataset::new(config.dims);
    for (i, (&count, mu)) in plan.train_split.iter().zip(&config.mu_list).enumerate() {
        let mut part = gen_gaussian_linear(
            mu,
            config.sigma_sx,
            config.sigma_sy,
            &oracle,
            count,
            &mut rng,
        );
        part.source = vec![i; count];
        train.extend(part);
    }
    let model = fit_ols(&train)?;

    let per_source: Vec<Vec<f64>> = plan
        .calib_split
        .iter()
        .zip(&config.mu_list)
        .map(|(&count, mu)| {
            let part = gen_gaussian_linear(
                mu,
                config.sigma_sx,
                config.sigma_sy,
                &oracle,
                count,
                &mut rng,
            );
            part.rows()
                .map(|(x, y)| abs_residual_score(&model, x, y))
                .collect()
        })
        .collect();
    let pooled: Vec<f64> = per_source.iter().flatten().copied().collect();
    let fmin = MinCdf::new(
        per_source
            .into_iter()
            .map(EmpiricalCdf::from_vec)
            .collect::<Result<Vec<_>>>()?,
    )?;

    let test = gen_target_mixture(config, config.m_test, &mut rng)?;
    let mut test_scores: Vec<f64> = test
        .rows()
        .map(|(x, y)| abs_residual_score(&model, x, y))
        .collect();
    test_scores.sort_by(f64::total_cmp);
    let coverage =
        |t: f64| test_scores.partition_point(|&s| s <= t) as f64 / test_scores.len() as f64;

    let outcomes = config
        .alpha_list
        .iter()
        .zip(&plan.levels)
        .map(|(&alpha, level)| {
            let scp = scp_threshold(&pooled, alpha)?;
            let ood = level.map_or(f64::INFINITY, |c| fmin.quantile(c.level));
            Ok(AlphaOutcome {
                alpha,
                coverage_scp: coverage(scp),
                coverage_ood: coverage(ood),
                avg_length_scp: 2.0 * scp,
                avg_length_ood: 2.0 * ood,
                ood_feasible: level.is_some(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialResult { trial, outcomes })
}

/// Order statistics of one metric across trials. Quantiles interpolate
/// linearly between order statistics; an infinite neighbour makes the
/// quantile infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    #[serde(with = "ext_real")]
    pub mean: f64,
    #[serde(with = "ext_real")]
    pub q05: f64,
    #[serde(with = "ext_real")]
    pub q25: f64,
    #[serde(with = "ext_real")]
    pub median: f64,
    #[serde(with = "ext_real")]
    pub q75: f64,
    #[serde(with = "ext_real")]
    pub q95: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.iter().any(|v| v.is_infinite()) {
            f64::INFINITY
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        Self {
            mean,
            q05: sample_quantile(&sorted, 0.05),
            q25: sample_quantile(&sorted, 0.25),
            median: sample_quantile(&sorted, 0.5),
            q75: sample_quantile(&sorted, 0.75),
            q95: sample_quantile(&sorted, 0.95),
        }
    }
}

/// Linear-interpolation sample quantile of already sorted values.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        a
    } else if a.is_infinite() || b.is_infinite() {
        f64::INFINITY
    } else {
        a + (pos - lo as f64) * (b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub coverage: Stats,
    pub length: Stats,
    pub coverage_values: Vec<f64>,
    #[serde(with = "ext_real_vec")]
    pub length_values: Vec<f64>,
}

impl MethodSummary {
    fn new(coverage_values: Vec<f64>, length_values: Vec<f64>) -> Self {
        Self {
            coverage: Stats::from_values(&coverage_values),
            length: Stats::from_values(&length_values),
            coverage_values,
            length_values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    /// Robust quantile level, absent when no feasible epsilon exists.
    pub ood_quantile_level: Option<f64>,
    pub ood_epsilon: Option<f64>,
    pub scp: MethodSummary,
    pub ood: MethodSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub generator: String,
    pub seed: u64,
    pub n_trials: usize,
    pub rho: f64,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub metadata: Metadata,
    pub per_alpha: Vec<AlphaSummary>,
    #[serde(skip)]
    pub trials: Vec<TrialResult>,
}

impl ExperimentSummary {
    pub fn alpha(&self, alpha: f64) -> Option<&AlphaSummary> {
        self.per_alpha.iter().find(|a| a.alpha == alpha)
    }

    /// Long-format rows `trial,alpha,method,coverage,length`.
    pub fn write_trials_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,alpha,method,coverage,length")?;
        for t in &self.trials {
            for o in &t.outcomes {
                let alpha = fmt_f64(o.alpha);
                writeln!(
                    out,
                    "{},{alpha},scp,{},{}",
                    t.trial,
                    fmt_f64(o.coverage_scp),
                    fmt_f64(o.avg_length_scp)
                )?;
                writeln!(
                    out,
                    "{},{alpha},ood_scp,{},{}",
                    t.trial,
                    fmt_f64(o.coverage_ood),
                    fmt_f64(o.avg_length_ood)
                )?;
            }
        }
        Ok(())
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Runs `n_trials` trials (in parallel, capped by `OODCP_THREADS`) and
/// aggregates them in trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let plan = TrialPlan::new(config)?;
    let run_all = || -> Vec<Result<TrialResult>> {
        (0..config.n_trials)
            .into_par_iter()
            .map(|k| run_planned_trial(config, &plan, k))
            .collect()
    };
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("{THREADS_ENV}: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let mut trials = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trials.push(t),
            Err(e) => {
                return Err(Error::TrialFailed {
                    trial: k,
                    seed: config.seed,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(summarize(config, &plan, trials))
}

fn summarize(
    config: &ExperimentConfig,
    plan: &TrialPlan,
    trials: Vec<TrialResult>,
) -> ExperimentSummary {
    let per_alpha = config
        .alpha_list
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let pick = |f: fn(&AlphaOutcome) -> f64| {
                trials.iter().map(|t| f(&t.outcomes[j])).collect::<Vec<_>>()
            };
            AlphaSummary {
                alpha,
                ood_quantile_level: plan.levels[j].map(|c| c.level),
                ood_epsilon: plan.levels[j].map(|c| c.epsilon),
                scp: MethodSummary::new(pick(|o| o.coverage_scp), pick(|o| o.avg_length_scp)),
                ood: MethodSummary::new(pick(|o| o.coverage_ood), pick(|o| o.avg_length_ood)),
            }
        })
        .collect();
    ExperimentSummary {
        metadata: Metadata {
            schema_version: SCHEMA_VERSION,
            generator: GENERATOR.to_string(),
            seed: config.seed,
            n_trials: config.n_trials,
            rho: config.effective_rho(),
            config: config.clone(),
        },
        per_alpha,
        trials,
    }
}
