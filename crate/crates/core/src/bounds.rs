//! Non-asymptotic lower and upper bounds on the minimax separation radius.
//!
//! Both bounds trade the noise term `eps^2 sqrt(sum_{j<=D} b_j^-4)` against
//! the bias term `a_D^-2`. The optimizing bandwidth is found by an exact
//! integer scan over `1..=N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SequenceFamily};

/// Target first-kind level `alpha` and second-kind level `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub alpha: f64,
    pub beta: f64,
}

impl ErrorBudget {
    /// Both levels must lie in `(0, 1)`. The sum is checked where it matters,
    /// by [`lower_constant`].
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { alpha, beta })
    }
}

/// `x_gamma = ln(1/gamma)`.
pub fn log_inverse(gamma: f64) -> f64 {
    -gamma.ln()
}

/// `c(alpha, beta) = (2 ln(1 + 4 (1 - alpha - beta)^2))^(1/4)`.
pub fn lower_constant(budget: &ErrorBudget) -> Result<f64> {
    let slack = 1.0 - budget.alpha - budget.beta;
    if slack <= 0.0 {
        return Err(Error::DegenerateBudget(budget.alpha + budget.beta));
    }
    Ok((2.0 * (4.0 * slack * slack).ln_1p()).powf(0.25))
}

/// `C(alpha, beta) = sqrt(2 x_b) + sqrt(2 (x_a + x_b)) + sqrt(2) (sqrt(x_a) + sqrt(x_b))^(1/2)`.
pub fn upper_constant(budget: &ErrorBudget) -> f64 {
    let xa = log_inverse(budget.alpha);
    let xb = log_inverse(budget.beta);
    (2.0 * xb).sqrt()
        + (2.0 * (xa + xb)).sqrt()
        + std::f64::consts::SQRT_2 * (xa.sqrt() + xb.sqrt()).sqrt()
}

/// `sum_{j<=D} b_j^-4`, read from the cached prefix sums.
pub fn cumulative_b4(spec: &ProblemSpec, bandwidth: usize) -> Result<f64> {
    if bandwidth == 0 || bandwidth > spec.truncation() {
        return Err(Error::IndexOutOfRange { index: bandwidth, len: spec.truncation() });
    }
    Ok(spec.b_inv4_prefix()[bandwidth])
}

/// A squared radius with its optimizing bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBound {
    pub radius_sq: f64,
    pub bandwidth: usize,
    /// The optimum sits at the truncation `N`, so a larger `N` might move it.
    pub touches_truncation: bool,
}

/// Noise term `k eps^2 sqrt(sum_{j<=D} b_j^-4)` for `D = 1..=N`, index `D-1`.
fn noise_terms(spec: &ProblemSpec, k: f64) -> impl Iterator<Item = f64> + '_ {
    let e2 = spec.noise() * spec.noise();
    spec.b_inv4_prefix()[1..].iter().map(move |s| k * e2 * s.sqrt())
}

/// `max_D min(c eps^2 sqrt(sum b^-4), a_D^-2)` with the smallest maximizer.
pub fn lower_radius(spec: &ProblemSpec, budget: &ErrorBudget) -> Result<RadiusBound> {
    let c = lower_constant(budget)?;
    let mut best = RadiusBound { radius_sq: f64::NEG_INFINITY, bandwidth: 1, touches_truncation: false };
    for (i, (noise, a)) in noise_terms(spec, c).zip(spec.a()).enumerate() {
        let v = noise.min(a.powi(-2));
        if v > best.radius_sq {
            best.radius_sq = v;
            best.bandwidth = i + 1;
        }
    }
    best.touches_truncation = best.bandwidth == spec.truncation();
    Ok(best)
}

/// `min_D [C eps^2 sqrt(sum b^-4) + a_D^-2]` with the smallest minimizer.
pub fn upper_radius(spec: &ProblemSpec, budget: &ErrorBudget) -> RadiusBound {
    let c = upper_constant(budget);
    let mut best = RadiusBound { radius_sq: f64::INFINITY, bandwidth: 1, touches_truncation: false };
    for (i, (noise, a)) in noise_terms(spec, c).zip(spec.a()).enumerate() {
        let v = noise + a.powi(-2);
        if v < best.radius_sq {
            best.radius_sq = v;
            best.bandwidth = i + 1;
        }
    }
    best.touches_truncation = best.bandwidth == spec.truncation();
    best
}

/// Consecutive-ratio diagnostic for the same-order property of the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypAbReport {
    pub satisfied: bool,
    /// Observed `(min, max)` of `a_{D-1}/a_D` over `D = 2..=N`.
    pub a_ratio_range: (f64, f64),
    /// Observed `(min, max)` of `b_{D-1}/b_D` over `D = 2..=N`.
    pub b_ratio_range: (f64, f64),
}

fn ratio_range(v: &[f64]) -> (f64, f64) {
    v.windows(2)
        .map(|w| w[0] / w[1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

fn band_holds(family: &SequenceFamily, range: (f64, f64)) -> bool {
    family
        .ratio_band_bounded()
        .unwrap_or(range.0.is_finite() && range.0 > 0.0 && range.1.is_finite())
}

/// Scans the ratio bands of both sequences. Parametric families are
/// classified by their behaviour over all `D > 1`; explicit sequences by the
/// observed band being finite and positive.
pub fn hyp_ab_check(spec: &ProblemSpec) -> Result<HypAbReport> {
    if spec.truncation() < 3 {
        return Err(Error::InvalidParameter("ratio diagnostic needs N >= 3".into()));
    }
    let a_ratio_range = ratio_range(spec.a());
    let b_ratio_range = ratio_range(spec.b());
    let satisfied = band_holds(spec.smoothness(), a_ratio_range)
        && band_holds(spec.operator(), b_ratio_range)
        && a_ratio_range.0 > 0.0
        && b_ratio_range.0 > 0.0;
    Ok(HypAbReport { satisfied, a_ratio_range, b_ratio_range })
}

/// Both bounds for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub noise: f64,
    pub truncation: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lower_radius_sq: f64,
    pub upper_radius_sq: f64,
    pub lower_bandwidth: usize,
    pub upper_bandwidth: usize,
    pub lower_touches_truncation: bool,
    pub upper_touches_truncation: bool,
    pub c_const: f64,
    #[serde(rename = "C_const")]
    pub upper_const: f64,
    /// `upper_radius_sq / lower_radius_sq`.
    pub ratio: f64,
    pub hyp_ab_satisfied: bool,
}

impl BoundsReport {
    pub fn compute(spec: &ProblemSpec, budget: &ErrorBudget) -> Result<Self> {
        let lower = lower_radius(spec, budget)?;
        let upper = upper_radius(spec, budget);
        let hyp = if spec.truncation() >= 3 { hyp_ab_check(spec)?.satisfied } else { false };
        Ok(Self {
            noise: spec.noise(),
            truncation: spec.truncation(),
            alpha: budget.alpha,
            beta: budget.beta,
            lower_radius_sq: lower.radius_sq,
            upper_radius_sq: upper.radius_sq,
            lower_bandwidth: lower.bandwidth,
            upper_bandwidth: upper.bandwidth,
            lower_touches_truncation: lower.touches_truncation,
            upper_touches_truncation: upper.touches_truncation,
            c_const: lower_constant(budget)?,
            upper_const: upper_constant(budget),
            ratio: upper.radius_sq / lower.radius_sq,
            hyp_ab_satisfied: hyp,
        })
    }

    pub const CSV_HEADER: &'static str = "noise,truncation,alpha,beta,lower_radius_sq,upper_radius_sq,lower_bandwidth,upper_bandwidth,lower_touches_truncation,upper_touches_truncation,c_const,C_const,ratio,hyp_ab_satisfied";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{},{:?},{:?},{:?},{:?},{},{},{},{},{:?},{:?},{:?},{}",
            self.noise,
            self.truncation,
            self.alpha,
            self.beta,
            self.lower_radius_sq,
            self.upper_radius_sq,
            self.lower_bandwidth,
            self.upper_bandwidth,
            self.lower_touches_truncation,
            self.upper_touches_truncation,
            self.c_const,
            self.upper_const,
            self.ratio,
            self.hyp_ab_satisfied
        )
    }
}
