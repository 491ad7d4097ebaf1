//! Spectral cut-off and Ingster tests with their threshold calibration.
//!
//! Both statistics are weighted sums of bias-corrected squared observations.
//! The spectral cut-off statistic is `sum_{j<=D} b_j^-2 (y_j^2 - eps^2)`; the
//! Ingster statistic is `sum_j omega_j ((y_j / eps)^2 - 1)` with filters taken
//! from the extremal signal. A test rejects when its statistic is strictly
//! above the threshold.

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{cumulative_b4, log_inverse};
use crate::error::{Error, Result};
use crate::extremal::{solve_extremal, ExtremalSolution};
use crate::mc::{draw_samples, Execution, MIN_SAMPLES};
use crate::model::{ProblemSpec, RngStream};
use crate::numeric::{normal_quantile, quantile_sorted};

/// How a threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Calibration {
    /// Type-7 empirical quantile of simulated null statistics.
    MonteCarlo { samples: usize, seed: u64, stream: u64 },
    /// Gaussian approximation of the null distribution (asymptotic).
    Gaussian,
}

/// Threshold calibration requested when building an Ingster test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IngsterCalibration {
    /// Standard normal quantile `t_{1-alpha}`.
    Asymptotic,
    MonteCarlo { samples: usize, stream: RngStream },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
}

impl TestOutcome {
    pub fn new(statistic: f64, threshold: f64) -> Self {
        Self { statistic, threshold, reject: statistic > threshold }
    }
}

/// A test reading the first [`support`](DetectionTest::support) observations.
pub trait DetectionTest: Sync {
    /// Number of leading coordinates the statistic depends on.
    fn support(&self) -> usize;

    /// Statistic on `y`, which must hold at least `support()` values.
    fn statistic(&self, y: &[f64]) -> f64;

    fn threshold(&self) -> f64;

    fn decide(&self, y: &[f64]) -> TestOutcome {
        TestOutcome::new(self.statistic(y), self.threshold())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTest {
    pub bandwidth: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub noise: f64,
    pub calibration: Calibration,
    /// `b_j^-2` for `j <= D`.
    pub weights: Vec<f64>,
}

impl DetectionTest for SpectralTest {
    fn support(&self) -> usize {
        self.bandwidth
    }

    fn statistic(&self, y: &[f64]) -> f64 {
        let e2 = self.noise * self.noise;
        self.weights.iter().zip(y).map(|(w, y)| w * (y * y - e2)).sum()
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngsterTest {
    pub radius: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub noise: f64,
    pub calibration: Calibration,
    /// Filters up to the last nonzero one.
    pub filters: Vec<f64>,
    pub omega0: f64,
    pub u_eps: f64,
}

impl DetectionTest for IngsterTest {
    fn support(&self) -> usize {
        self.filters.len()
    }

    fn statistic(&self, y: &[f64]) -> f64 {
        let inv = 1.0 / self.noise;
        self.filters
            .iter()
            .zip(y)
            .map(|(w, y)| {
                let z = y * inv;
                w * (z * z - 1.0)
            })
            .sum()
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_bandwidth(spec: &ProblemSpec, d: usize) -> Result<()> {
    if d == 0 || d > spec.truncation() {
        Err(Error::IndexOutOfRange { index: d, len: spec.truncation() })
    } else {
        Ok(())
    }
}

/// `sum_{j<=D} b_j^-2 (y_j^2 - eps^2)`.
pub fn spectral_statistic(spec: &ProblemSpec, bandwidth: usize, y: &[f64]) -> Result<f64> {
    check_bandwidth(spec, bandwidth)?;
    if y.len() < bandwidth {
        return Err(Error::LengthMismatch { expected: bandwidth, got: y.len() });
    }
    let e2 = spec.noise() * spec.noise();
    Ok(spec.b()[..bandwidth]
        .iter()
        .zip(y)
        .map(|(b, y)| (y * y - e2) / (b * b))
        .sum())
}

fn spectral_weights(spec: &ProblemSpec, bandwidth: usize) -> Vec<f64> {
    spec.b()[..bandwidth].iter().map(|b| b.powi(-2)).collect()
}

/// Null draws of `sum w_j (xi_j^2 - 1)`, sorted.
fn null_chi2_draws(weights: &[f64], samples: usize, stream: &RngStream, exec: Execution) -> Result<Vec<f64>> {
    if samples < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: samples, min: MIN_SAMPLES });
    }
    let mut draws = draw_samples(samples, stream, exec, |rng, _| {
        weights
            .iter()
            .map(|w| {
                let xi: f64 = rng.sample(StandardNormal);
                w * (xi * xi - 1.0)
            })
            .sum()
    });
    draws.sort_by(f64::total_cmp);
    Ok(draws)
}

/// Monte Carlo threshold: the empirical `(1 - alpha)`-quantile of
/// `eps^2 sum_{j<=D} b_j^-2 (xi_j^2 - 1)`.
pub fn calibrate_spectral(
    spec: &ProblemSpec,
    bandwidth: usize,
    alpha: f64,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<SpectralTest> {
    check_bandwidth(spec, bandwidth)?;
    check_alpha(alpha)?;
    let weights = spectral_weights(spec, bandwidth);
    let draws = null_chi2_draws(&weights, samples, stream, exec)?;
    let e2 = spec.noise() * spec.noise();
    Ok(SpectralTest {
        bandwidth,
        threshold: e2 * quantile_sorted(&draws, 1.0 - alpha)?,
        alpha,
        noise: spec.noise(),
        calibration: Calibration::MonteCarlo { samples, seed: stream.seed, stream: stream.stream },
        weights,
    })
}

/// Gaussian-approximation threshold `eps^2 t_{1-alpha} sqrt(2 sum b^-4)`.
pub fn spectral_gaussian(spec: &ProblemSpec, bandwidth: usize, alpha: f64) -> Result<SpectralTest> {
    check_alpha(alpha)?;
    let s = cumulative_b4(spec, bandwidth)?;
    let e2 = spec.noise() * spec.noise();
    Ok(SpectralTest {
        bandwidth,
        threshold: e2 * normal_quantile(1.0 - alpha) * (2.0 * s).sqrt(),
        alpha,
        noise: spec.noise(),
        calibration: Calibration::Gaussian,
        weights: spectral_weights(spec, bandwidth),
    })
}

pub fn run_spectral(test: &SpectralTest, y: &[f64]) -> Result<TestOutcome> {
    if y.len() < test.bandwidth {
        return Err(Error::LengthMismatch { expected: test.bandwidth, got: y.len() });
    }
    Ok(test.decide(y))
}

/// Per-instance quantile constant
/// `C(alpha) = 2 sqrt(x) + 2 x max_{j<=D} b_j^-2 / sqrt(sum_{j<=D} b_j^-4)`,
/// `x = ln(1/alpha)`, from the weighted chi-square deviation inequality.
pub fn quantile_constant(spec: &ProblemSpec, bandwidth: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let s = cumulative_b4(spec, bandwidth)?;
    let max_w = spec.b()[..bandwidth].iter().map(|b| b.powi(-2)).fold(0.0, f64::max);
    let x = log_inverse(alpha);
    Ok(2.0 * x.sqrt() + 2.0 * x * max_w / s.sqrt())
}

/// Instance-free version `2 sqrt(x) + 2 x`, valid for every bandwidth since
/// `max b^-2 <= sqrt(sum b^-4)`.
pub fn uniform_quantile_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let x = log_inverse(alpha);
    Ok(2.0 * x.sqrt() + 2.0 * x)
}

/// Upper form `C(alpha) eps^2 sqrt(sum_{j<=D} b_j^-4)` of the null quantile.
pub fn null_quantile_upper_form(spec: &ProblemSpec, bandwidth: usize, alpha: f64) -> Result<f64> {
    let c = quantile_constant(spec, bandwidth, alpha)?;
    Ok(c * spec.noise() * spec.noise() * cumulative_b4(spec, bandwidth)?.sqrt())
}

/// Lower form of the `beta`-quantile of the spectral statistic under `theta`:
/// `sum_{j<=D} theta^2 - 2 sqrt(x_beta) sqrt(eps^4 sum b^-4 + 2 eps^2 sum b^-2 theta^2)`.
pub fn alternative_quantile_lower_form(
    spec: &ProblemSpec,
    bandwidth: usize,
    theta: &[f64],
    beta: f64,
) -> Result<f64> {
    check_alpha(beta)?;
    let s = cumulative_b4(spec, bandwidth)?;
    let e2 = spec.noise() * spec.noise();
    let mut energy = 0.0;
    let mut weighted = 0.0;
    for (b, t) in spec.b()[..bandwidth].iter().zip(theta) {
        energy += t * t;
        weighted += t * t / (b * b);
    }
    Ok(energy - 2.0 * log_inverse(beta).sqrt() * (e2 * e2 * s + 2.0 * e2 * weighted).sqrt())
}

/// Largest `D` in `1..=N` with `C_alpha eps^2 sqrt(sum_{j<=D} b_j^-4) + a_D^-2 <= r^2 / 2`.
pub fn select_bandwidth(spec: &ProblemSpec, r: f64, c_alpha: f64) -> Result<usize> {
    if !(r.is_finite() && r > 0.0 && c_alpha.is_finite() && c_alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth rule needs r > 0 and C_alpha >= 0, got r = {r}, C_alpha = {c_alpha}"
        )));
    }
    let e2 = spec.noise() * spec.noise();
    let half = 0.5 * r * r;
    spec.b_inv4_prefix()[1..]
        .iter()
        .zip(spec.a())
        .rposition(|(s, a)| c_alpha * e2 * s.sqrt() + a.powi(-2) <= half)
        .map(|i| i + 1)
        .ok_or(Error::RadiusTooSmall)
}

impl IngsterTest {
    /// Test with the asymptotic threshold `t_{1-alpha}` from a solved extremal problem.
    pub fn from_solution(sol: &ExtremalSolution, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sol.noise > 0.0) {
            return Err(Error::InvalidParameter("Ingster statistic needs a positive noise level".into()));
        }
        let last = sol
            .filters
            .iter()
            .rposition(|w| *w > 0.0)
            .ok_or_else(|| Error::InvalidParameter("all Ingster filters vanish".into()))?;
        Ok(Self {
            radius: sol.radius,
            threshold: normal_quantile(1.0 - alpha),
            alpha,
            noise: sol.noise,
            calibration: Calibration::Gaussian,
            filters: sol.filters[..=last].to_vec(),
            omega0: sol.omega0,
            u_eps: sol.u_eps,
        })
    }

    /// Replaces the threshold with the empirical `(1 - alpha)`-quantile of the
    /// null statistic `sum omega_j (xi_j^2 - 1)`.
    pub fn calibrated(mut self, samples: usize, stream: &RngStream, exec: Execution) -> Result<Self> {
        let draws = null_chi2_draws(&self.filters, samples, stream, exec)?;
        self.threshold = quantile_sorted(&draws, 1.0 - self.alpha)?;
        self.calibration = Calibration::MonteCarlo { samples, seed: stream.seed, stream: stream.stream };
        Ok(self)
    }
}

/// Ingster test at radius `r`.
pub fn build_ingster(
    spec: &ProblemSpec,
    r: f64,
    alpha: f64,
    calibration: IngsterCalibration,
    exec: Execution,
) -> Result<IngsterTest> {
    if !(spec.noise() > 0.0) {
        return Err(Error::InvalidParameter("Ingster statistic needs a positive noise level".into()));
    }
    let test = IngsterTest::from_solution(&solve_extremal(spec, r)?, alpha)?;
    match calibration {
        IngsterCalibration::Asymptotic => Ok(test),
        IngsterCalibration::MonteCarlo { samples, stream } => test.calibrated(samples, &stream, exec),
    }
}

/// `sum omega_j ((y_j / eps)^2 - 1)` against the problem's noise level.
pub fn ingster_statistic(test: &IngsterTest, spec: &ProblemSpec, y: &[f64]) -> Result<f64> {
    if !(spec.noise() > 0.0) {
        return Err(Error::InvalidParameter("Ingster statistic needs a positive noise level".into()));
    }
    if y.len() < test.support() {
        return Err(Error::LengthMismatch { expected: test.support(), got: y.len() });
    }
    let inv = 1.0 / spec.noise();
    Ok(test
        .filters
        .iter()
        .zip(y)
        .map(|(w, y)| w * ((y * inv).powi(2) - 1.0))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SequenceFamily, Signal};
    use proptest::prelude::*;

    fn spec(op: SequenceFamily, eps: f64, n: usize) -> ProblemSpec {
        ProblemSpec::new(SequenceFamily::PolynomialGrowth(1.0), op, eps, n).unwrap()
    }

    #[test]
    fn spectral_statistic_examples() {
        let d = spec(SequenceFamily::Direct, 0.3, 10);
        assert_eq!(spectral_statistic(&d, 3, &[0.3; 10]).unwrap(), 0.0);
        let d1 = spec(SequenceFamily::Direct, 1.0, 10);
        let mut y = vec![0.0; 10];
        y[0] = 2.0;
        assert_eq!(spectral_statistic(&d1, 1, &y).unwrap(), 3.0);
        assert!(spectral_statistic(&d1, 11, &y).is_err());
    }

    #[test]
    fn strict_rejection() {
        let d = spec(SequenceFamily::Direct, 1.0, 4);
        let test = spectral_gaussian(&d, 1, 0.05).unwrap();
        let at = (test.threshold + 1.0).sqrt();
        let outcome = run_spectral(&SpectralTest { threshold: at * at - 1.0, ..test.clone() }, &[at]).unwrap();
        assert!(!outcome.reject);
        assert!(run_spectral(&test, &[10.0]).unwrap().reject);
        assert!(!run_spectral(&test, &[0.0]).unwrap().reject);
    }

    #[test]
    fn chi2_quantile_for_one_coordinate() {
        let d = spec(SequenceFamily::Direct, 1.0, 4);
        let test = calibrate_spectral(&d, 1, 0.05, 100_000, &RngStream::new(11, 0), Execution::default()).unwrap();
        // chi^2_1 0.95-quantile is 3.841459
        assert!((test.threshold - 2.841459).abs() < 0.07, "threshold {}", test.threshold);
        assert!(calibrate_spectral(&d, 1, 0.05, 10, &RngStream::new(1, 0), Execution::default()).is_err());
    }

    #[test]
    fn threshold_scales_with_noise_squared() {
        let d = spec(SequenceFamily::PolynomialDecay(1.0), 0.01, 30);
        let s = RngStream::new(5, 2);
        let t1 = calibrate_spectral(&d, 7, 0.05, 20_000, &s, Execution::Sequential).unwrap();
        let t2 = calibrate_spectral(&d.with_noise(0.02).unwrap(), 7, 0.05, 20_000, &s, Execution::Sequential).unwrap();
        assert_eq!(t2.threshold, 4.0 * t1.threshold);
    }

    #[test]
    fn bandwidth_rule() {
        let d = spec(SequenceFamily::PolynomialDecay(1.0), 1e-3, 2000);
        assert_eq!(select_bandwidth(&d, 0.001, 1.0), Err(Error::RadiusTooSmall));
        let mut prev = 0;
        for r in [0.2, 0.3, 0.5, 0.8] {
            let dt = select_bandwidth(&d, r, 0.5).unwrap();
            assert!(dt >= prev);
            prev = dt;
        }
        let quiet = d.with_noise(0.0).unwrap();
        // noise term vanishes: largest D with D^-2 <= r^2/2
        assert_eq!(select_bandwidth(&quiet, 0.2, 1.0).unwrap(), 2000);
        let short = spec(SequenceFamily::Direct, 0.0, 10);
        assert_eq!(select_bandwidth(&short, 1.0, 1.0).unwrap(), 10);
        assert_eq!(select_bandwidth(&short, 0.9, 1.0).unwrap(), 10);
    }

    #[test]
    fn ingster_asymptotic_threshold() {
        let m = spec(SequenceFamily::PolynomialDecay(1.0), 1e-2, 2000);
        let test = build_ingster(&m, 0.1, 0.05, IngsterCalibration::Asymptotic, Execution::default()).unwrap();
        assert!((test.threshold - 1.6449).abs() < 1e-4);
        let w2: f64 = test.filters.iter().map(|w| w * w).sum();
        assert!((w2 - 0.5).abs() < 1e-10);
        let y: Vec<f64> = vec![m.noise(); test.support()];
        assert!(ingster_statistic(&test, &m, &y).unwrap().abs() < 1e-12);
        let quiet = m.with_noise(0.0).unwrap();
        assert!(build_ingster(&quiet, 0.1, 0.05, IngsterCalibration::Asymptotic, Execution::default()).is_err());
    }

    #[test]
    fn quantile_constants() {
        let d = spec(SequenceFamily::Direct, 1.0, 50);
        let x = 20f64.ln();
        let c = quantile_constant(&d, 4, 0.05).unwrap();
        assert!((c - (2.0 * x.sqrt() + x)).abs() < 1e-14);
        assert!(c <= uniform_quantile_constant(0.05).unwrap());
        let theta = Signal::zeros(50);
        let lf = alternative_quantile_lower_form(&d, 4, theta.as_slice(), 0.05).unwrap();
        assert!((lf + 2.0 * x.sqrt() * 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn outcome_rejects_iff_above(stat in -10.0f64..10.0, thr in -10.0f64..10.0) {
            let o = TestOutcome::new(stat, thr);
            prop_assert_eq!(o.reject, stat > thr);
        }

        #[test]
        fn per_instance_constant_below_uniform(t in 0.0f64..3.0, d in 1usize..60, alpha in 0.001f64..0.5) {
            let s = spec(SequenceFamily::PolynomialDecay(t.max(1e-9)), 1.0, 60);
            prop_assert!(quantile_constant(&s, d, alpha).unwrap() <= uniform_quantile_constant(alpha).unwrap() * (1.0 + 1e-12));
        }
    }
}
