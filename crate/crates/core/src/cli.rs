//! The `oodcp` command-line front end.
//!
//! Exit codes: 0 on success, 2 for bad input, 3 when the request is valid but
//! no finite threshold exists (the full prediction set is reported).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::divergence::DivergenceFamily;
use crate::empirical::{dkw_failure_bound, CalibrationBundle};
use crate::error::{Error, Result};
use crate::gcurve::GCurve;
use crate::io::{fmt_f64, opt_real, read_scores};
use crate::robust::{
    corrected_alpha, coverage_lower_bound, epsilon_h, optimize_epsilon,
    robust_threshold_with_sample_sizes, RobustConfig, RobustThresholdReport, DEFAULT_EPSILON_GRID,
};
use crate::sim::{run_experiment, ExperimentConfig, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "oodcp",
    version,
    about = "Conformal thresholds robust to f-divergence distribution shift"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate g and its inverse as CSV.
    Gcurve(GcurveArgs),
    /// Robust threshold from per-source calibration score files.
    Threshold(ThresholdArgs),
    /// Run a coverage simulation from a JSON config.
    Simulate(SimulateArgs),
    /// Finite-sample coverage bound and corrected miscoverage.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Divergence family: chi2, tv or kl.
    #[arg(long)]
    pub family: DivergenceFamily,
    /// Radius of the divergence ball.
    #[arg(long)]
    pub rho: f64,
}

#[derive(Debug, Args)]
pub struct GcurveArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Grid spacing in (0, 0.1].
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long)]
    pub alpha: f64,
    /// Calibration scores of one source domain (CSV with a `score` header or
    /// a JSON array). Repeat once per source.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// Sample sizes to use in the DKW correction instead of the file lengths,
    /// one per source.
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_EPSILON_GRID)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON); missing fields take the single-source
    /// defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for `trials.csv` and `summary.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub family: Option<DivergenceFamily>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long)]
    pub alpha: f64,
    /// Per-source calibration sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ms: Vec<usize>,
    /// DKW slack; optimized when omitted.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON_GRID)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON printed by `threshold`.
#[derive(Debug, Serialize)]
pub struct ThresholdOutput {
    pub schema_version: u32,
    pub family: DivergenceFamily,
    pub rho: f64,
    pub alpha: f64,
    pub sample_sizes: Vec<usize>,
    #[serde(flatten)]
    pub report: RobustThresholdReport,
}

/// JSON printed by `bound`.
#[derive(Debug, Serialize)]
pub struct BoundOutput {
    pub schema_version: u32,
    pub family: DivergenceFamily,
    pub rho: f64,
    pub alpha: f64,
    pub ms: Vec<usize>,
    pub feasible: bool,
    #[serde(with = "opt_real")]
    pub epsilon_star: Option<f64>,
    #[serde(with = "opt_real")]
    pub delta: Option<f64>,
    #[serde(with = "opt_real")]
    pub coverage_lower_bound: Option<f64>,
    #[serde(with = "opt_real")]
    pub corrected_alpha: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Gcurve(a) => cmd_gcurve(&a, stdout),
        Command::Threshold(a) => cmd_threshold(&a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(&a, stdout, stderr),
        Command::Bound(a) => cmd_bound(&a, stdout, stderr),
    }
}

/// Opens the destination before any computation so unwritable paths fail
/// fast.
fn open_sink<'a>(out: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(stdout),
    })
}

fn write_json<T: Serialize>(sink: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *sink, value)?;
    writeln!(sink)?;
    sink.flush()?;
    Ok(())
}

fn curve(args: &CurveArgs) -> Result<GCurve> {
    GCurve::new(args.family.clone(), args.rho)
}

/// Evenly spaced points `0, step, ..., 1`, always ending at 1.
pub fn unit_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "step must lie in (0, 0.1], got {step}"
        )));
    }
    let inv = 1.0 / step;
    let n = (inv - 1e-9).ceil() as usize;
    let divides = (inv - inv.round()).abs() < 1e-9;
    let mut points: Vec<f64> = (0..n)
        .map(|k| {
            if divides {
                k as f64 / n as f64
            } else {
                k as f64 * step
            }
        })
        .collect();
    points.push(1.0);
    Ok(points)
}

pub fn cmd_gcurve(args: &GcurveArgs, stdout: &mut dyn Write) -> Result<i32> {
    let curve = curve(&args.curve)?;
    let grid = unit_grid(args.step)?;
    let mut sink = open_sink(&args.out, stdout)?;
    writeln!(sink, "beta,g,tau,g_inverse")?;
    for &x in &grid {
        let (g, gi) = (fmt_f64(curve.g(x)), fmt_f64(curve.g_inverse(x)));
        let x = fmt_f64(x);
        writeln!(sink, "{x},{g},{x},{gi}")?;
    }
    sink.flush()?;
    Ok(EXIT_OK)
}

fn read_bundle(paths: &[PathBuf]) -> Result<CalibrationBundle> {
    let scores = paths
        .iter()
        .map(|p| read_scores(p))
        .collect::<Result<Vec<_>>>()?;
    CalibrationBundle::new(scores)
}

fn warn_alpha(stderr: &mut dyn Write, alpha: f64, corrected: Option<f64>) {
    if let Some(a) = corrected.filter(|&a| a > alpha) {
        let _ = writeln!(
            stderr,
            "warning: corrected miscoverage {} exceeds the nominal {}",
            fmt_f64(a),
            fmt_f64(alpha)
        );
    }
}

pub fn cmd_threshold(
    args: &ThresholdArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let config = RobustConfig::with_grid(
        args.curve.family.clone(),
        args.curve.rho,
        args.alpha,
        args.grid,
    )?;
    let mut sink = open_sink(&args.out, stdout)?;
    let bundle = read_bundle(&args.scores)?;
    let ms = args
        .sample_sizes
        .clone()
        .unwrap_or_else(|| bundle.sample_sizes());
    let report = robust_threshold_with_sample_sizes(&bundle, &config, &ms)?;
    warn_alpha(stderr, args.alpha, report.corrected_alpha);
    let feasible = report.feasible;
    write_json(
        &mut *sink,
        &ThresholdOutput {
            schema_version: SCHEMA_VERSION,
            family: config.family,
            rho: config.rho,
            alpha: config.alpha,
            sample_sizes: ms,
            report,
        },
    )?;
    if feasible {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(
            stderr,
            "infeasible: no DKW slack keeps the quantile level below 1; full set returned"
        );
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn cmd_simulate(
    args: &SimulateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.trials {
        config.n_trials = n;
    }
    if let Some(f) = &args.family {
        config.family = f.clone();
    }
    if args.rho.is_some() {
        config.rho = args.rho;
    }
    config.validate()?;
    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("trials.csv");
    let json_path = args.out.join("summary.json");
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    let mut json = BufWriter::new(File::create(&json_path)?);

    let summary = run_experiment(&config)?;
    summary.write_trials_csv(&mut csv)?;
    csv.flush()?;
    write_json(&mut json, &summary)?;
    for a in summary
        .per_alpha
        .iter()
        .filter(|a| a.ood_quantile_level.is_none())
    {
        let _ = writeln!(
            stderr,
            "note: alpha {} is infeasible; OOD-SCP used the full set",
            fmt_f64(a.alpha)
        );
    }
    writeln!(
        stdout,
        "wrote {} and {}",
        csv_path.display(),
        json_path.display()
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_bound(args: &BoundArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    if args.ms.is_empty() || args.ms.contains(&0) {
        return Err(Error::InvalidParameter(
            "ms must be positive integers".into(),
        ));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    if let Some(e) = args.epsilon.filter(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {e}"
        )));
    }
    let curve = curve(&args.curve)?;
    let mut sink = open_sink(&args.out, stdout)?;
    // an explicit slack is reported even when its level exceeds 1
    let (epsilon, feasible) = match args.epsilon {
        Some(e) => (Some(e), epsilon_h(&args.ms, &curve, args.alpha, e) <= 1.0),
        None => match optimize_epsilon(&args.ms, &curve, args.alpha, args.grid) {
            Ok(c) => (Some(c.epsilon), true),
            Err(Error::Infeasible) => (None, false),
            Err(e) => return Err(e),
        },
    };
    let mut out = BoundOutput {
        schema_version: SCHEMA_VERSION,
        family: args.curve.family.clone(),
        rho: args.curve.rho,
        alpha: args.alpha,
        ms: args.ms.clone(),
        feasible,
        epsilon_star: epsilon,
        delta: None,
        coverage_lower_bound: None,
        corrected_alpha: None,
    };
    if let Some(e) = epsilon {
        out.delta = Some(dkw_failure_bound(&args.ms, e));
        out.coverage_lower_bound = Some(coverage_lower_bound(&args.ms, &curve, args.alpha, e)?);
        out.corrected_alpha = corrected_alpha(&args.ms, &curve, args.alpha, e).ok();
    }
    warn_alpha(stderr, args.alpha, out.corrected_alpha);
    write_json(&mut *sink, &out)?;
    if out.feasible {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(
            stderr,
            "infeasible: quantile level exceeds 1 for this configuration"
        );
        Ok(EXIT_INFEASIBLE)
    }
}
