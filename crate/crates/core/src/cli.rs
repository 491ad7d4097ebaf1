//! Command-line front end. Every report embeds the configuration that
//! produced it, the seed, the generator identity and the library version, so
//! a rerun with the same flags reproduces it byte for byte.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analysis::{bounds_at, fit_rate, FamilyKind, ProblemFamily, RateTarget};
use crate::bounds::{upper_radius, BoundsReport, ErrorBudget};
use crate::detection::{
    calibrate_spectral, null_quantile_upper_form, spectral_gaussian, DetectionTest, IngsterCalibration,
};
use crate::error::Error;
use crate::extremal::{solve_extremal, solve_extremal_truncated};
use crate::mc::{empirical_radius, estimate_miss, estimate_size, Execution, RadiusOptions};
use crate::model::{ProblemSpec, RngStream, GENERATOR_ID};

const CALIBRATION_STREAM: u64 = 0;
const SIMULATION_STREAM: u64 = 1;
const SIZE_STREAM: u64 = 2;

#[derive(Debug, Parser)]
#[command(name = "gsm-minimax", version, about = "Minimax signal detection in the Gaussian sequence model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lower and upper bounds on the minimax separation radius.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// JSON-lines file of per-row overrides.
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Solve the extremal problem at a radius.
    Extremal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<f64>,
        /// Emit the extremal signal and filters, one row per coordinate.
        #[arg(long)]
        dump_theta: bool,
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Calibrate a test threshold and check its size on fresh draws.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Second-kind error at the extremal signal for a list of radii.
    Power {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        test: TestArgs,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', required = true)]
        radius: Vec<f64>,
    },
    /// Empirical separation radius by bisection.
    Radius {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        test: TestArgs,
        /// Stop when the bracket is this tight (relative).
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Fit rate exponents over a grid of noise levels.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = RateChoice::All)]
        which: RateChoice,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', default_values_t = default_eps_grid())]
        eps_grid: Vec<f64>,
    },
}

fn default_eps_grid() -> Vec<f64> {
    vec![1e-4, 10f64.powf(-3.5), 1e-3, 10f64.powf(-2.5), 1e-2]
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long, value_enum, default_value_t = FamilyArg::Mild)]
    pub family: FamilyArg,
    /// Smoothness exponent, `a_j = j^s`.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Operator exponent: `b_j = j^-t` (mild) or `exp(-t j)` (severe).
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Working dimension; chosen automatically when absent.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Monte Carlo replicates per probe.
    #[arg(long, default_value_t = 50_000)]
    pub mc_samples: usize,
    /// Replicates for threshold calibration.
    #[arg(long, default_value_t = 200_000)]
    pub calibration_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run Monte Carlo blocks on one thread (results are identical).
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[arg(long = "test", value_enum, default_value_t = TestKind::Spectral)]
    pub kind: TestKind,
    /// Spectral bandwidth; defaults to the upper-bound optimizer.
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Design radius of the Ingster test (calibrate only).
    #[arg(long)]
    pub design_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Direct,
    Mild,
    Severe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Spectral,
    Ingster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateChoice {
    Lower,
    Upper,
    Critical,
    All,
}

/// Failures of a CLI run, mapped to exit codes by [`CliError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 usage, 2 infeasible, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Library(e) if e.is_infeasible() => 2,
            CliError::Library(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Per-row overrides read from a `--batch` file.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BatchLine {
    family: Option<FamilyArg>,
    s: Option<f64>,
    t: Option<f64>,
    eps: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    truncation: Option<usize>,
    radius: Option<f64>,
}

impl Common {
    fn family(&self) -> CliResult<ProblemFamily> {
        let kind = match self.family {
            FamilyArg::Direct => FamilyKind::Direct,
            FamilyArg::Mild => FamilyKind::Mild,
            FamilyArg::Severe => FamilyKind::Severe,
        };
        Ok(ProblemFamily::new(kind, self.s, self.t)?)
    }

    fn budget(&self) -> CliResult<ErrorBudget> {
        Ok(ErrorBudget::new(self.alpha, self.beta)?)
    }

    fn exec(&self) -> Execution {
        if self.sequential { Execution::Sequential } else { Execution::Parallel }
    }

    fn stream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, id)
    }

    /// Spec at the configured noise level. The truncation comes from the
    /// flag, else from the radius policy, else from the bounds policy.
    fn spec(&self, radius: Option<f64>) -> CliResult<ProblemSpec> {
        let family = self.family()?;
        if let Some(n) = self.truncation {
            return Ok(family.spec(self.eps, n)?);
        }
        match radius {
            Some(r) if r > 0.0 => Ok(family.spec_for_radius(self.eps, r)?),
            _ => Ok(family.spec(self.eps, bounds_at(&family, &self.budget()?, self.eps)?.truncation)?),
        }
    }

    fn apply(&self, line: &BatchLine) -> Common {
        let mut c = self.clone();
        c.family = line.family.unwrap_or(c.family);
        c.s = line.s.unwrap_or(c.s);
        c.t = line.t.unwrap_or(c.t);
        c.eps = line.eps.unwrap_or(c.eps);
        c.alpha = line.alpha.unwrap_or(c.alpha);
        c.beta = line.beta.unwrap_or(c.beta);
        c.truncation = line.truncation.or(c.truncation);
        c
    }
}

fn read_batch(path: &PathBuf) -> CliResult<Vec<BatchLine>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Usage(format!("batch line {}: {e}", i + 1)))
        })
        .collect()
}

/// Rows plus a summary, rendered as one JSON object or as CSV with a
/// trailing `# summary:` comment line.
struct Report {
    command: &'static str,
    config: Value,
    seed: u64,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
    summary: Value,
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Report {
    fn metadata(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("config".into(), self.config.clone());
        m.insert("seed".into(), json!(self.seed));
        m.insert("generator".into(), json!(GENERATOR_ID));
        m.insert("version".into(), json!(crate::VERSION));
        m
    }

    fn render(&self, format: Format) -> CliResult<String> {
        match format {
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                let mut m = self.metadata();
                m.insert("rows".into(), Value::Array(rows));
                m.insert("summary".into(), self.summary.clone());
                let mut s = serde_json::to_string_pretty(&Value::Object(m)).map_err(|e| CliError::Usage(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => {
                let mut s = self.columns.join(",");
                s.push('\n');
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(csv_cell).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                let mut m = self.metadata();
                m.insert("summary".into(), self.summary.clone());
                let _ = writeln!(s, "# summary: {}", Value::Object(m));
                Ok(s)
            }
        }
    }
}

fn emit(report: &Report, common: &Common) -> CliResult<()> {
    let text = report.render(common.format)?;
    match &common.output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn config_echo<T: Serialize>(common: &Common, extra: T) -> Value {
    let mut v = serde_json::to_value(common).unwrap_or(Value::Null);
    if let (Value::Object(m), Value::Object(e)) = (&mut v, serde_json::to_value(extra).unwrap_or(Value::Null)) {
        m.extend(e);
    }
    v
}

fn check_positive_eps(common: &Common) -> CliResult<()> {
    if common.eps.is_finite() && common.eps > 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--eps must be positive, got {}", common.eps)))
    }
}

const BOUNDS_COLUMNS: [&str; 14] = [
    "noise",
    "truncation",
    "alpha",
    "beta",
    "lower_radius_sq",
    "upper_radius_sq",
    "lower_bandwidth",
    "upper_bandwidth",
    "lower_touches_truncation",
    "upper_touches_truncation",
    "c_const",
    "C_const",
    "ratio",
    "hyp_ab_satisfied",
];

fn bounds_row(common: &Common) -> CliResult<Vec<Value>> {
    let budget = common.budget()?;
    let report = match common.truncation {
        Some(_) => BoundsReport::compute(&common.spec(None)?, &budget)?,
        None => bounds_at(&common.family()?, &budget, common.eps)?,
    };
    let v = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(BOUNDS_COLUMNS.iter().map(|c| v[*c].clone()).collect())
}

fn cmd_bounds(common: &Common, batch: &Option<PathBuf>) -> CliResult<Report> {
    let rows = match batch {
        Some(path) => read_batch(path)?
            .iter()
            .map(|line| bounds_row(&common.apply(line)))
            .collect::<CliResult<Vec<_>>>()?,
        None => vec![bounds_row(common)?],
    };
    let lo = BOUNDS_COLUMNS.iter().position(|c| *c == "lower_radius_sq").expect("column");
    let up = BOUNDS_COLUMNS.iter().position(|c| *c == "upper_radius_sq").expect("column");
    let sandwich = rows.iter().all(|r| r[lo].as_f64() <= r[up].as_f64());
    Ok(Report {
        command: "bounds",
        config: config_echo(common, json!({ "batch": batch })),
        seed: common.seed,
        columns: BOUNDS_COLUMNS.to_vec(),
        rows,
        summary: json!({ "rows": 0, "sandwich_holds": sandwich }),
    })
    .map(|mut r| {
        r.summary["rows"] = json!(r.rows.len());
        r
    })
}

const EXTREMAL_COLUMNS: [&str; 15] = [
    "noise",
    "radius",
    "truncation",
    "lagrange_a",
    "z0_sq",
    "efficient_dim",
    "u_eps",
    "omega0",
    "j0",
    "j1",
    "j2",
    "ellipsoid_active",
    "energy_residual",
    "ellipsoid_residual",
    "uses_full_truncation",
];

fn extremal_row(common: &Common, radius: Option<f64>) -> CliResult<(Vec<Value>, crate::extremal::ExtremalSolution)> {
    let r = radius.ok_or_else(|| CliError::Usage("--radius is required".into()))?;
    if !(r.is_finite() && r > 0.0) {
        return Err(CliError::Usage(format!("--radius must be positive, got {r}")));
    }
    check_positive_eps(common)?;
    let max_r = 1.0 / common.family()?.smoothness().value(1)?;
    if r >= max_r {
        return Err(Error::EmptyAlternative { radius_sq: r * r, max_sq: max_r * max_r }.into());
    }
    let spec = common.spec(Some(r))?;
    let sol = solve_extremal(&spec, r)?;
    let mut v = serde_json::to_value(&sol).map_err(|e| CliError::Usage(e.to_string()))?;
    v["truncation"] = json!(spec.truncation());
    Ok((EXTREMAL_COLUMNS.iter().map(|c| v[*c].clone()).collect(), sol))
}

fn cmd_extremal(common: &Common, radius: Option<f64>, dump_theta: bool, batch: &Option<PathBuf>) -> CliResult<Report> {
    let config = config_echo(common, json!({ "radius": radius, "dump_theta": dump_theta, "batch": batch }));
    if let Some(path) = batch {
        let rows = read_batch(path)?
            .iter()
            .map(|line| Ok(extremal_row(&common.apply(line), line.radius.or(radius))?.0))
            .collect::<CliResult<Vec<_>>>()?;
        let n = rows.len();
        return Ok(Report {
            command: "extremal",
            config,
            seed: common.seed,
            columns: EXTREMAL_COLUMNS.to_vec(),
            rows,
            summary: json!({ "rows": n }),
        });
    }
    let (row, sol) = extremal_row(common, radius)?;
    if dump_theta {
        let scalars: Map<String, Value> =
            EXTREMAL_COLUMNS.iter().map(|c| c.to_string()).zip(row).collect();
        let rows = sol
            .theta_bar
            .as_slice()
            .iter()
            .zip(&sol.filters)
            .enumerate()
            .map(|(j, (t, w))| vec![json!(j + 1), json!(t), json!(w)])
            .collect();
        return Ok(Report {
            command: "extremal",
            config,
            seed: common.seed,
            columns: vec!["j", "theta_bar", "omega"],
            rows,
            summary: Value::Object(scalars),
        });
    }
    Ok(Report {
        command: "extremal",
        config,
        seed: common.seed,
        columns: EXTREMAL_COLUMNS.to_vec(),
        rows: vec![row],
        summary: json!({ "rows": 1 }),
    })
}

fn spectral_bandwidth(spec: &ProblemSpec, common: &Common, test: &TestArgs) -> CliResult<usize> {
    match test.bandwidth {
        Some(d) if d >= 1 && d <= spec.truncation() => Ok(d),
        Some(d) => Err(CliError::Usage(format!("--bandwidth {d} outside 1..={}", spec.truncation()))),
        None => Ok(upper_radius(spec, &common.budget()?).bandwidth),
    }
}

fn cmd_calibrate(common: &Common, test: &TestArgs) -> CliResult<Report> {
    check_positive_eps(common)?;
    let exec = common.exec();
    let cal = common.stream(CALIBRATION_STREAM);
    let size_stream = common.stream(SIZE_STREAM);
    let config = config_echo(common, test);
    let (columns, row) = match test.kind {
        TestKind::Spectral => {
            let spec = common.spec(None)?;
            let d = spectral_bandwidth(&spec, common, test)?;
            let t = calibrate_spectral(&spec, d, common.alpha, common.calibration_samples, &cal, exec)?;
            let size = estimate_size(&t, &spec, common.mc_samples, &size_stream, exec)?;
            let gauss = spectral_gaussian(&spec, d, common.alpha)?.threshold;
            let upper = null_quantile_upper_form(&spec, d, common.alpha)?;
            (
                vec!["test", "truncation", "bandwidth", "alpha", "threshold", "gaussian_threshold", "upper_form", "size", "size_half_width", "calibration_samples", "size_samples"],
                vec![json!("spectral"), json!(spec.truncation()), json!(d), json!(common.alpha), json!(t.threshold), json!(gauss), json!(upper), json!(size.probability), json!(size.half_width), json!(common.calibration_samples), json!(common.mc_samples)],
            )
        }
        TestKind::Ingster => {
            let r = test
                .design_radius
                .ok_or_else(|| CliError::Usage("--design-radius is required for the Ingster test".into()))?;
            let spec = common.spec(Some(r))?;
            let t = crate::detection::build_ingster(
                &spec,
                r,
                common.alpha,
                IngsterCalibration::MonteCarlo { samples: common.calibration_samples, stream: cal },
                exec,
            )?;
            let size = estimate_size(&t, &spec, common.mc_samples, &size_stream, exec)?;
            (
                vec!["test", "truncation", "support", "alpha", "threshold", "gaussian_threshold", "omega0", "u_eps", "size", "size_half_width", "calibration_samples", "size_samples"],
                vec![json!("ingster"), json!(spec.truncation()), json!(t.support()), json!(common.alpha), json!(t.threshold), json!(crate::numeric::normal_quantile(1.0 - common.alpha)), json!(t.omega0), json!(t.u_eps), json!(size.probability), json!(size.half_width), json!(common.calibration_samples), json!(common.mc_samples)],
            )
        }
    };
    Ok(Report { command: "calibrate", config, seed: common.seed, columns, rows: vec![row], summary: json!({ "rows": 1 }) })
}

fn cmd_power(common: &Common, test: &TestArgs, radii: &[f64]) -> CliResult<Report> {
    check_positive_eps(common)?;
    if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(CliError::Usage("radii must be finite and non-negative".into()));
    }
    let exec = common.exec();
    let cal = common.stream(CALIBRATION_STREAM);
    let sim = common.stream(SIMULATION_STREAM);
    let budget = common.budget()?;
    let smallest = radii.iter().copied().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let spec = common.spec(smallest.is_finite().then_some(smallest))?;
    let max_r = spec.max_radius_sq().sqrt();
    if let Some(r) = radii.iter().find(|r| **r >= max_r) {
        return Err(Error::EmptyAlternative { radius_sq: r * r, max_sq: max_r * max_r }.into());
    }
    let mut rows = Vec::new();
    let mut summary = Map::new();
    match test.kind {
        TestKind::Spectral => {
            let d = spectral_bandwidth(&spec, common, test)?;
            let t = calibrate_spectral(&spec, d, common.alpha, common.calibration_samples, &cal, exec)?;
            for &r in radii {
                let theta = if r > 0.0 { solve_extremal_truncated(&spec, r)?.theta_bar.into_inner() } else { Vec::new() };
                let est = estimate_miss(&t, &spec, &theta, common.mc_samples, &sim, exec)?;
                rows.push(vec![json!(r), json!(d), json!(t.threshold), json!(est.probability), json!(est.half_width), json!(est.seed), json!(est.stream)]);
            }
            summary.insert("bandwidth".into(), json!(d));
        }
        TestKind::Ingster => {
            for &r in radii {
                if r == 0.0 {
                    return Err(CliError::Usage("the Ingster test needs a positive radius".into()));
                }
                let t = crate::detection::build_ingster(
                    &spec,
                    r,
                    common.alpha,
                    IngsterCalibration::MonteCarlo { samples: common.calibration_samples, stream: cal },
                    exec,
                )?;
                let theta = solve_extremal(&spec, r)?.theta_bar;
                let est = estimate_miss(&t, &spec, theta.as_slice(), common.mc_samples, &sim, exec)?;
                rows.push(vec![json!(r), json!(t.support()), json!(t.threshold), json!(est.probability), json!(est.half_width), json!(est.seed), json!(est.stream)]);
            }
        }
    }
    summary.insert("rows".into(), json!(rows.len()));
    summary.insert("beta_target".into(), json!(budget.beta));
    summary.insert("signal".into(), json!("extremal"));
    Ok(Report {
        command: "power",
        config: config_echo(common, json!({ "test": test, "radius": radii })),
        seed: common.seed,
        columns: vec!["radius", "support", "threshold", "beta_hat", "half_width", "seed", "stream"],
        rows,
        summary: Value::Object(summary),
    })
}

fn cmd_radius(common: &Common, test: &TestArgs, tolerance: f64) -> CliResult<Report> {
    check_positive_eps(common)?;
    if !(tolerance > 0.0) {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    let exec = common.exec();
    let cal = common.stream(CALIBRATION_STREAM);
    let sim = common.stream(SIMULATION_STREAM);
    let budget = common.budget()?;
    let family = common.family()?;
    let bounds = bounds_at(&family, &budget, common.eps)?;
    let lower_r = bounds.lower_radius_sq.sqrt();
    let spec = match common.truncation {
        Some(_) => common.spec(None)?,
        None => common.spec(Some(lower_r.max(1e-12)))?,
    };
    let options = RadiusOptions { relative_tolerance: tolerance, ..RadiusOptions::default() };
    let search = match test.kind {
        TestKind::Spectral => {
            let d = spectral_bandwidth(&spec, common, test)?;
            let t = calibrate_spectral(&spec, d, common.alpha, common.calibration_samples, &cal, exec)?;
            empirical_radius(|_| Ok(t.clone()), &spec, &budget, common.mc_samples, &sim, exec, options)?
        }
        TestKind::Ingster => empirical_radius(
            |r| {
                crate::detection::build_ingster(
                    &spec,
                    r,
                    common.alpha,
                    IngsterCalibration::MonteCarlo { samples: common.calibration_samples, stream: cal },
                    exec,
                )
            },
            &spec,
            &budget,
            common.mc_samples,
            &sim,
            exec,
            options,
        )?,
    };
    let rows = search
        .probes
        .iter()
        .map(|p| vec![json!(p.radius), json!(p.beta.probability), json!(p.beta.half_width), json!(p.beta.seed), json!(p.beta.stream)])
        .collect();
    let summary = json!({
        "status": search.status,
        "radius": search.radius,
        "bracket_lower": search.lower,
        "bracket_upper": search.upper,
        "relative_width": if search.lower > 0.0 { search.upper / search.lower - 1.0 } else { f64::NAN },
        "lower_bound_radius": lower_r,
        "upper_bound_radius": bounds.upper_radius_sq.sqrt(),
        "truncation": spec.truncation(),
        "signal": "extremal",
    });
    Ok(Report {
        command: "radius",
        config: config_echo(common, json!({ "test": test, "tolerance": tolerance })),
        seed: common.seed,
        columns: vec!["radius", "beta_hat", "half_width", "seed", "stream"],
        rows,
        summary,
    })
}

fn cmd_rates(common: &Common, which: RateChoice, eps_grid: &[f64]) -> CliResult<Report> {
    let family = common.family()?;
    let budget = common.budget()?;
    let targets: Vec<(RateTarget, &str)> = match which {
        RateChoice::Lower => vec![(RateTarget::LowerRadiusSq, "lower")],
        RateChoice::Upper => vec![(RateTarget::UpperRadiusSq, "upper")],
        RateChoice::Critical => vec![(RateTarget::CriticalRadius, "critical")],
        RateChoice::All => vec![
            (RateTarget::LowerRadiusSq, "lower"),
            (RateTarget::UpperRadiusSq, "upper"),
            (RateTarget::CriticalRadius, "critical"),
        ],
    };
    let mut rows = Vec::new();
    let mut verdicts = Map::new();
    for (target, name) in targets {
        let fit = fit_rate(&family, &budget, eps_grid, target)?;
        for (e, v) in fit.eps_grid.iter().zip(&fit.values) {
            rows.push(vec![json!(name), json!(e), json!(v)]);
        }
        verdicts.insert(
            name.into(),
            json!({
                "exponent_expected": fit.expected_exponent,
                "exponent_fitted": fit.slope,
                "relative_error": fit.relative_error,
                "max_residual": fit.max_residual,
                "pass": fit.pass,
            }),
        );
    }
    Ok(Report {
        command: "rates",
        config: config_echo(common, json!({ "which": which, "eps_grid": eps_grid })),
        seed: common.seed,
        columns: vec!["target", "eps", "value"],
        rows,
        summary: Value::Object(verdicts),
    })
}

/// Runs a parsed command and writes its report.
pub fn run(cli: &Cli) -> CliResult<()> {
    let (report, common) = match &cli.command {
        Command::Bounds { common, batch } => (cmd_bounds(common, batch)?, common),
        Command::Extremal { common, radius, dump_theta, batch } => {
            (cmd_extremal(common, *radius, *dump_theta, batch)?, common)
        }
        Command::Calibrate { common, test } => (cmd_calibrate(common, test)?, common),
        Command::Power { common, test, radius } => (cmd_power(common, test, radius)?, common),
        Command::Radius { common, test, tolerance } => (cmd_radius(common, test, *tolerance)?, common),
        Command::Rates { common, which, eps_grid } => (cmd_rates(common, *which, eps_grid)?, common),
    };
    emit(&report, common)
}

/// Parses `args` and runs, returning the process exit code. Help and version
/// requests exit with 0, parse failures with 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
