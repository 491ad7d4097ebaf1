//! Asymptotic checks: rate exponents, the regime of `u_eps` along radius
//! rules, Gaussian-shape replication for both tests, powerfulness of the
//! Ingster test tuned at the balancing radius, and the growth condition on
//! the operator.

use serde::{Deserialize, Serialize};

use crate::bounds::{upper_constant, BoundsReport, ErrorBudget};
use crate::detection::{
    calibrate_spectral, select_bandwidth, uniform_quantile_constant, IngsterCalibration, IngsterTest,
};
use crate::error::{Error, Result};
use crate::extremal::{solve_extremal, solve_extremal_truncated};
use crate::mc::{estimate_miss, Execution, PowerEstimate};
use crate::model::{truncation_for_radius, ProblemSpec, RngStream, SequenceFamily, MAX_TRUNCATION};
use crate::numeric::{fit_line, normal_cdf, normal_quantile};

/// Relative tolerance on fitted exponents.
pub const RATE_TOLERANCE: f64 = 0.05;

/// Slopes of `log u` against `log eps` inside `(-band, band)` count as bounded.
pub const CRITICAL_SLOPE_BAND: f64 = 0.25;

/// Minimal decay exponent accepted by [`gen_cond_check`].
pub const GEN_COND_MIN_DELTA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    /// `b_j = 1`.
    Direct,
    /// `b_j = j^-t`.
    Mild,
    /// `b_j = exp(-t j)`.
    Severe,
}

/// `a_j = j^s` paired with one of the operator shapes of [`FamilyKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemFamily {
    pub kind: FamilyKind,
    pub s: f64,
    pub t: f64,
}

impl ProblemFamily {
    pub fn new(kind: FamilyKind, s: f64, t: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
        }
        let t_ok = match kind {
            FamilyKind::Direct => true,
            FamilyKind::Mild => t.is_finite() && t >= 0.0,
            FamilyKind::Severe => t.is_finite() && t > 0.0,
        };
        if !t_ok {
            return Err(Error::InvalidParameter(format!("invalid t = {t} for {kind:?} family")));
        }
        Ok(Self { kind, s, t })
    }

    pub fn smoothness(&self) -> SequenceFamily {
        SequenceFamily::PolynomialGrowth(self.s)
    }

    pub fn operator(&self) -> SequenceFamily {
        match self.kind {
            FamilyKind::Direct => SequenceFamily::Direct,
            FamilyKind::Mild if self.t == 0.0 => SequenceFamily::Direct,
            FamilyKind::Mild => SequenceFamily::PolynomialDecay(self.t),
            FamilyKind::Severe => SequenceFamily::ExponentialDecay(self.t),
        }
    }

    /// Operator decay exponent, zero for the direct problem.
    pub fn effective_t(&self) -> f64 {
        match self.kind {
            FamilyKind::Direct => 0.0,
            _ => self.t,
        }
    }

    /// Largest truncation at which `sum b^-4` stays finite.
    pub fn max_truncation(&self) -> usize {
        match self.kind {
            FamilyKind::Severe => ((700.0 / (4.0 * self.t)).floor() as usize).clamp(2, MAX_TRUNCATION),
            _ => MAX_TRUNCATION,
        }
    }

    pub fn spec(&self, eps: f64, truncation: usize) -> Result<ProblemSpec> {
        ProblemSpec::new(self.smoothness(), self.operator(), eps, truncation)
    }

    /// Spec truncated by the radius policy of [`truncation_for_radius`].
    pub fn spec_for_radius(&self, eps: f64, r: f64) -> Result<ProblemSpec> {
        let n = truncation_for_radius(&self.smoothness(), r)?.min(self.max_truncation());
        self.spec(eps, n)
    }

    /// `2s / (2s + 2t + 1/2)`, the exponent of the separation radius for
    /// polynomial operators.
    pub fn radius_exponent(&self) -> Result<f64> {
        if self.kind == FamilyKind::Severe {
            return Err(Error::InvalidParameter("rate exponents need a polynomial operator".into()));
        }
        Ok(2.0 * self.s / (2.0 * self.s + 2.0 * self.effective_t() + 0.5))
    }
}

/// Bounds with a truncation doubled until both optimizing bandwidths sit in
/// the lower half of `1..=N`.
pub fn bounds_at(family: &ProblemFamily, budget: &ErrorBudget, eps: f64) -> Result<BoundsReport> {
    let cap = family.max_truncation();
    let mut n = 64.min(cap);
    loop {
        let report = BoundsReport::compute(&family.spec(eps, n)?, budget)?;
        if report.lower_bandwidth.max(report.upper_bandwidth) <= n / 2 || n >= cap {
            return Ok(report);
        }
        n = (2 * n).min(cap);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRadius {
    pub eps: f64,
    pub target_u: f64,
    pub radius: f64,
    pub u_eps: f64,
    pub truncation: usize,
    pub efficient_dim: usize,
    pub omega0: f64,
}

/// Radius at which `u_eps(r)` equals `target_u`, by bisection in `log r`.
pub fn critical_radius(family: &ProblemFamily, eps: f64, target_u: f64) -> Result<CriticalRadius> {
    if !(eps > 0.0 && target_u > 0.0) {
        return Err(Error::InvalidParameter("critical radius needs eps > 0 and a positive target".into()));
    }
    let r_top = (1.0 - 1e-9) / family.smoothness().value(1)?;
    let u_at = |r: f64| -> Result<f64> { Ok(solve_extremal(&family.spec_for_radius(eps, r)?, r)?.u_eps) };
    if u_at(r_top)? < target_u {
        return Err(Error::EmptyAlternative { radius_sq: f64::NAN, max_sq: r_top * r_top });
    }
    let mut hi = r_top;
    let mut lo = 0.5 * hi;
    let mut iter = 0;
    while u_at(lo)? >= target_u {
        hi = lo;
        lo *= 0.5;
        iter += 1;
        if iter > 200 {
            return Err(Error::Numerical("no radius below the target u".into()));
        }
    }
    // fixed truncation across the bracket keeps u monotone in r
    let spec = family.spec_for_radius(eps, lo)?;
    let mut sol = solve_extremal(&spec, hi)?;
    for _ in 0..200 {
        if hi / lo - 1.0 <= 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let s = solve_extremal(&spec, mid)?;
        if s.u_eps >= target_u {
            hi = mid;
            sol = s;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalRadius {
        eps,
        target_u,
        radius: hi,
        u_eps: sol.u_eps,
        truncation: spec.truncation(),
        efficient_dim: sol.efficient_dim,
        omega0: sol.omega0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateTarget {
    /// Squared lower bound on the minimax radius.
    LowerRadiusSq,
    /// Squared upper bound on the minimax radius.
    UpperRadiusSq,
    /// Radius solving `u_eps(r) = 1`.
    CriticalRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub target: RateTarget,
    pub eps_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub expected_exponent: f64,
    pub relative_error: f64,
    pub pass: bool,
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 5 {
        return Err(Error::InvalidParameter("rate fits need at least 5 noise levels".into()));
    }
    if eps_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidParameter("noise levels must be positive".into()));
    }
    let (lo, hi) = eps_grid.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter("noise grid must span at least two decades".into()));
    }
    Ok(())
}

/// Log-log slope of the chosen quantity against `eps`.
pub fn fit_rate(
    family: &ProblemFamily,
    budget: &ErrorBudget,
    eps_grid: &[f64],
    target: RateTarget,
) -> Result<RateFit> {
    check_grid(eps_grid)?;
    let rate = family.radius_exponent()?;
    let expected_exponent = match target {
        RateTarget::CriticalRadius => rate,
        _ => 2.0 * rate,
    };
    let values = eps_grid
        .iter()
        .map(|&eps| -> Result<f64> {
            Ok(match target {
                RateTarget::LowerRadiusSq => bounds_at(family, budget, eps)?.lower_radius_sq,
                RateTarget::UpperRadiusSq => bounds_at(family, budget, eps)?.upper_radius_sq,
                RateTarget::CriticalRadius => critical_radius(family, eps, 1.0)?.radius,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&x, &y)?;
    let relative_error = (fit.slope - expected_exponent).abs() / expected_exponent;
    Ok(RateFit {
        target,
        eps_grid: eps_grid.to_vec(),
        values,
        slope: fit.slope,
        intercept: fit.intercept,
        max_residual: fit.max_residual,
        expected_exponent,
        relative_error,
        pass: relative_error <= RATE_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `u_eps -> 0`: detection impossible.
    Degenerate,
    /// `u_eps` bounded: Gaussian-type sharp asymptotics.
    Critical,
    /// `u_eps -> infinity`: both errors vanish.
    Consistent,
}

impl Regime {
    /// Regime implied by a slope of `log u` against `log eps`.
    pub fn from_slope(slope: f64) -> Self {
        if slope.abs() < CRITICAL_SLOPE_BAND {
            Regime::Critical
        } else if slope > 0.0 {
            Regime::Degenerate
        } else {
            Regime::Consistent
        }
    }
}

/// Radius rule `r(eps) = multiplier * eps^(kappa * 2s / (2s + 2t + 1/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRule {
    pub multiplier: f64,
    pub kappa: f64,
}

impl PowerRule {
    pub fn radius(&self, family: &ProblemFamily, eps: f64) -> Result<f64> {
        Ok(self.multiplier * eps.powf(self.kappa * family.radius_exponent()?))
    }

    /// Net exponent of `eps` in `u_eps(r(eps))`: `u ~ eps^-4 r^((4s+4t+1)/s)`
    /// gives `4 kappa - 4`.
    pub fn predicted_slope(&self) -> f64 {
        4.0 * self.kappa - 4.0
    }

    pub fn predicted_regime(&self) -> Regime {
        let net = self.predicted_slope();
        if net == 0.0 {
            Regime::Critical
        } else if net > 0.0 {
            Regime::Degenerate
        } else {
            Regime::Consistent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub eps_grid: Vec<f64>,
    pub radii: Vec<f64>,
    pub u_values: Vec<Option<f64>>,
    pub omega0_values: Vec<Option<f64>>,
    pub errors: Vec<Option<String>>,
    pub slope: f64,
    pub regime: Regime,
}

/// Tabulates `u_eps(r(eps))` and `omega_0` and classifies the trend.
pub fn regime_scan<F>(family: &ProblemFamily, rule: F, eps_grid: &[f64]) -> Result<RegimeReport>
where
    F: Fn(f64) -> f64,
{
    let mut report = RegimeReport {
        eps_grid: eps_grid.to_vec(),
        radii: Vec::new(),
        u_values: Vec::new(),
        omega0_values: Vec::new(),
        errors: Vec::new(),
        slope: f64::NAN,
        regime: Regime::Critical,
    };
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &eps in eps_grid {
        let r = rule(eps);
        report.radii.push(r);
        match family.spec_for_radius(eps, r).and_then(|spec| solve_extremal(&spec, r)) {
            Ok(sol) => {
                x.push(eps.ln());
                y.push(sol.u_eps.ln());
                report.u_values.push(Some(sol.u_eps));
                report.omega0_values.push(Some(sol.omega0));
                report.errors.push(None);
            }
            Err(e) => {
                report.u_values.push(None);
                report.omega0_values.push(None);
                report.errors.push(Some(e.to_string()));
            }
        }
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("fewer than two feasible points in the regime scan".into()));
    }
    report.slope = fit_line(&x, &y)?.slope;
    report.regime = Regime::from_slope(report.slope);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub radius: f64,
    pub u_eps: f64,
    pub omega0: f64,
    pub threshold: f64,
    /// Non-detection frequency of the Ingster test at the extremal signal.
    pub lhs: PowerEstimate,
    /// `Phi(t_{1-alpha} - u_eps(r))`.
    pub rhs: f64,
}

/// Replicates the Gaussian shape of the second-kind error of the Ingster test
/// with its asymptotic threshold, at the extremal signal.
pub fn gaussian_shape_check(
    spec: &ProblemSpec,
    r: f64,
    alpha: f64,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<ShapeCheck> {
    let sol = solve_extremal(spec, r)?;
    let test = IngsterTest::from_solution(&sol, alpha)?;
    let lhs = estimate_miss(&test, spec, sol.theta_bar.as_slice(), samples, stream, exec)?;
    Ok(ShapeCheck {
        radius: r,
        u_eps: sol.u_eps,
        omega0: sol.omega0,
        threshold: test.threshold,
        lhs,
        rhs: normal_cdf(normal_quantile(1.0 - alpha) - sol.u_eps),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralShapeCheck {
    pub radius: f64,
    pub bandwidth: usize,
    /// Vanishing sequence `h = D^-1/8`.
    pub h: f64,
    pub u_eps: f64,
    pub lhs: PowerEstimate,
    /// `Phi(t_{1-alpha} - (1-h) a_D^-2 / (eps^2 sqrt(sum_{j<=D} b_j^-4)))`.
    pub rhs: f64,
    pub holds: bool,
    /// `c` with `lhs = Phi(t_{1-alpha} - c u_eps)`.
    pub gap: f64,
}

/// Second-kind error of the Monte Carlo calibrated spectral test at the
/// radius-dependent bandwidth, measured at the extremal signal, against its
/// Gaussian-shaped upper bound.
#[allow(clippy::too_many_arguments)]
pub fn spectral_shape_check(
    spec: &ProblemSpec,
    r: f64,
    alpha: f64,
    c_alpha: Option<f64>,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<SpectralShapeCheck> {
    let c_alpha = match c_alpha {
        Some(c) => c,
        None => uniform_quantile_constant(alpha)?,
    };
    let d = select_bandwidth(spec, r, c_alpha)?;
    let h = (d as f64).powf(-0.125);
    let sol = solve_extremal(spec, r)?;
    let test = calibrate_spectral(spec, d, alpha, samples, &stream.with_stream(stream.stream ^ 0x5bec), exec)?;
    let lhs = estimate_miss(&test, spec, sol.theta_bar.as_slice(), samples, stream, exec)?;
    let e2 = spec.noise() * spec.noise();
    let snr = spec.a()[d - 1].powi(-2) / (e2 * spec.b_inv4_prefix()[d].sqrt());
    let t = normal_quantile(1.0 - alpha);
    let rhs = normal_cdf(t - (1.0 - h) * snr);
    let p = lhs.probability.clamp(0.5 / samples as f64, 1.0 - 0.5 / samples as f64);
    Ok(SpectralShapeCheck {
        radius: r,
        bandwidth: d,
        h,
        u_eps: sol.u_eps,
        lhs,
        rhs,
        holds: lhs.probability <= rhs + lhs.half_width,
        gap: (t - normal_quantile(p)) / sol.u_eps,
    })
}

/// Options for [`powerful_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerfulOptions {
    pub c0: f64,
    /// Defaults to `C(alpha, beta)`.
    pub c_prime: Option<f64>,
    pub multipliers: Vec<f64>,
    pub samples: usize,
    pub calibration_samples: usize,
    pub stream: RngStream,
    pub exec: Execution,
}

impl Default for PowerfulOptions {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c_prime: None,
            multipliers: vec![1.0, 2.0, 4.0, 8.0],
            samples: 20_000,
            calibration_samples: 100_000,
            stream: RngStream::new(0, 0),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerfulRow {
    pub eps: f64,
    pub balance_r: f64,
    pub rho: f64,
    pub threshold: f64,
    /// `(multiplier, beta estimate)`; multipliers leaving the ellipsoid are skipped.
    pub betas: Vec<(f64, PowerEstimate)>,
    pub smallest_multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerfulReport {
    pub c0: f64,
    pub c_prime: f64,
    pub rows: Vec<PowerfulRow>,
    pub rho_slope: f64,
    pub expected_exponent: f64,
    /// Every row has a passing multiplier and they span at most one dyadic step.
    pub stable: bool,
}

/// `(R*, rho)` with `R* = max(2, (C0 / (c' eps^2))^(1/(2s+2t+1/2)))` and
/// `rho^2 = max(C0 R*^-2s, c' eps^2 R*^(2t+1/2))`.
pub fn balancing_radius(family: &ProblemFamily, eps: f64, c0: f64, c_prime: f64) -> Result<(f64, f64)> {
    let s = family.s;
    let t = family.effective_t();
    family.radius_exponent()?;
    let big_r = (c0 / (c_prime * eps * eps)).powf(1.0 / (2.0 * s + 2.0 * t + 0.5)).max(2.0);
    let rho_sq = (c0 * big_r.powf(-2.0 * s)).max(c_prime * eps * eps * big_r.powf(2.0 * t + 0.5));
    Ok((big_r, rho_sq.sqrt()))
}

/// Builds the Ingster test at the balancing radius `rho_eps` (Monte Carlo
/// calibrated) and finds the smallest multiplier `C` with miss frequency at
/// most `beta` at the extremal signal of radius `C rho_eps`.
pub fn powerful_check(
    family: &ProblemFamily,
    budget: &ErrorBudget,
    eps_grid: &[f64],
    options: &PowerfulOptions,
) -> Result<PowerfulReport> {
    let c_prime = options.c_prime.unwrap_or_else(|| upper_constant(budget));
    let mut rows = Vec::new();
    for (i, &eps) in eps_grid.iter().enumerate() {
        let (balance_r, rho) = balancing_radius(family, eps, options.c0, c_prime)?;
        let spec = family.spec_for_radius(eps, rho)?;
        let cal_stream = options.stream.with_stream(options.stream.stream.wrapping_add(2 * i as u64));
        let sim_stream = options.stream.with_stream(options.stream.stream.wrapping_add(2 * i as u64 + 1));
        let test = crate::detection::build_ingster(
            &spec,
            rho,
            budget.alpha,
            IngsterCalibration::MonteCarlo { samples: options.calibration_samples, stream: cal_stream },
            options.exec,
        )?;
        let r_max = spec.max_radius_sq().sqrt();
        let mut betas = Vec::new();
        let mut smallest = None;
        for &m in &options.multipliers {
            let r = m * rho;
            if r >= r_max {
                continue;
            }
            let theta = solve_extremal_truncated(&spec, r)?.theta_bar;
            let est = estimate_miss(&test, &spec, theta.as_slice(), options.samples, &sim_stream, options.exec)?;
            if smallest.is_none() && est.probability <= budget.beta {
                smallest = Some(m);
            }
            betas.push((m, est));
        }
        rows.push(PowerfulRow { eps, balance_r, rho, threshold: test.threshold, betas, smallest_multiplier: smallest });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.rho.ln()).collect();
    let rho_slope = if rows.len() >= 2 { fit_line(&x, &y)?.slope } else { f64::NAN };
    let found: Vec<f64> = rows.iter().filter_map(|r| r.smallest_multiplier).collect();
    let stable = found.len() == rows.len()
        && !found.is_empty()
        && found.iter().cloned().fold(0.0, f64::max) / found.iter().cloned().fold(f64::INFINITY, f64::min) <= 2.0;
    Ok(PowerfulReport {
        c0: options.c0,
        c_prime,
        rows,
        rho_slope,
        expected_exponent: family.radius_exponent()?,
        stable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCondReport {
    pub d_grid: Vec<usize>,
    /// `ln(max_{j<=D} b_j^-2 / sqrt(sum_{j<=D} b_j^-4))`.
    pub log_ratios: Vec<f64>,
    pub slope: f64,
    /// `-slope`.
    pub delta: f64,
    pub pass: bool,
}

/// Fits the decay of `max_{j<=D} b_j^-2 / sqrt(sum_{j<=D} b_j^-4)` in `D`,
/// working with logarithms so fast-decaying operators do not overflow.
pub fn gen_cond_check(operator: &SequenceFamily, d_grid: &[usize]) -> Result<GenCondReport> {
    if d_grid.len() < 2 || d_grid.windows(2).any(|w| w[1] <= w[0]) || d_grid[0] == 0 {
        return Err(Error::InvalidParameter("bandwidth grid must be increasing and start at 1 or more".into()));
    }
    let d_max = *d_grid.last().expect("nonempty grid");
    let mut log_max = f64::NEG_INFINITY;
    let mut log_sum = f64::NEG_INFINITY;
    let mut log_ratios = Vec::with_capacity(d_grid.len());
    let mut next = 0;
    for j in 1..=d_max {
        let lb = -2.0 * operator.log_value(j)?;
        log_max = log_max.max(lb);
        let l4 = 2.0 * lb;
        log_sum = if log_sum == f64::NEG_INFINITY {
            l4
        } else {
            let (hi, lo) = if l4 > log_sum { (l4, log_sum) } else { (log_sum, l4) };
            hi + (lo - hi).exp().ln_1p()
        };
        if j == d_grid[next] {
            log_ratios.push(log_max - 0.5 * log_sum);
            next += 1;
        }
    }
    let x: Vec<f64> = d_grid.iter().map(|d| (*d as f64).ln()).collect();
    let slope = fit_line(&x, &log_ratios)?.slope;
    Ok(GenCondReport { d_grid: d_grid.to_vec(), log_ratios, slope, delta: -slope, pass: -slope >= GEN_COND_MIN_DELTA })
}
