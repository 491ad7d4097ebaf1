//! Monte Carlo estimation of error probabilities, the likelihood-ratio
//! quantities behind the lower bound, and empirical separation radii.
//!
//! Work is split into blocks of [`BLOCK_SIZE`] replicates. Block `k` draws
//! from its own window of the stream, so sequential and parallel execution
//! give bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lower_constant, lower_radius, upper_radius, ErrorBudget};
use crate::detection::DetectionTest;
use crate::error::{Error, Result};
use crate::extremal::solve_extremal_truncated;
use crate::model::{ellipsoid_energy, ProblemSpec, RngStream, Signal, SignalClass, StreamRng};
use crate::numeric::ln_cosh;

pub const BLOCK_SIZE: usize = 4096;

/// Smallest replicate count accepted for calibration and size estimation.
pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Data-parallel over blocks; identical to sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

/// Runs `f(rng, scratch)` once per replicate, block by block, and returns the
/// per-block outputs in block order.
fn map_blocks<T, F>(samples: usize, stream: &RngStream, exec: Execution, f: F) -> Vec<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng, &mut Vec<f64>) -> T + Sync,
{
    let blocks = samples.div_ceil(BLOCK_SIZE);
    let run = |k: usize| {
        let mut rng = stream.block_rng(k as u64);
        let mut scratch = Vec::new();
        let count = BLOCK_SIZE.min(samples - k * BLOCK_SIZE);
        (0..count).map(|_| f(&mut rng, &mut scratch)).collect::<Vec<T>>()
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..blocks).into_par_iter().map(run).collect(),
        _ => (0..blocks).map(run).collect(),
    }
}

/// One value per replicate, in replicate order.
pub fn draw_samples<F>(samples: usize, stream: &RngStream, exec: Execution, f: F) -> Vec<f64>
where
    F: Fn(&mut StreamRng, &mut Vec<f64>) -> f64 + Sync,
{
    map_blocks(samples, stream, exec, f).concat()
}

/// Number of replicates for which `f` returns true.
pub fn count_events<F>(samples: usize, stream: &RngStream, exec: Execution, f: F) -> usize
where
    F: Fn(&mut StreamRng, &mut Vec<f64>) -> bool + Sync,
{
    map_blocks(samples, stream, exec, f)
        .iter()
        .map(|b| b.iter().filter(|x| **x).count())
        .sum()
}

/// A Monte Carlo probability with a three-standard-error half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub probability: f64,
    pub half_width: f64,
    pub samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl PowerEstimate {
    pub fn from_count(count: usize, samples: usize, stream: &RngStream) -> Self {
        let p = count as f64 / samples as f64;
        Self {
            probability: p,
            half_width: 3.0 * (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
            seed: stream.seed,
            stream: stream.stream,
        }
    }

    /// The complementary event, with the same half width.
    pub fn complement(&self) -> Self {
        Self { probability: 1.0 - self.probability, ..*self }
    }

    /// Three-standard-error interval around `p0` under the hypothesis `p = p0`.
    pub fn within_binomial_band(&self, p0: f64) -> bool {
        let se = (p0 * (1.0 - p0) / self.samples as f64).sqrt();
        (self.probability - p0).abs() <= 3.0 * se
    }
}

/// Tests that ignore the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantTest {
    AlwaysReject,
    NeverReject,
}

impl DetectionTest for ConstantTest {
    fn support(&self) -> usize {
        0
    }

    fn statistic(&self, _y: &[f64]) -> f64 {
        match self {
            ConstantTest::AlwaysReject => 1.0,
            ConstantTest::NeverReject => -1.0,
        }
    }

    fn threshold(&self) -> f64 {
        0.0
    }
}

/// Frequency with which `test` rejects on data generated from `theta`.
pub fn estimate_rejection<T: DetectionTest + ?Sized>(
    test: &T,
    spec: &ProblemSpec,
    theta: &[f64],
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<PowerEstimate> {
    if samples == 0 {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    let support = test.support();
    if support > spec.truncation() {
        return Err(Error::LengthMismatch { expected: spec.truncation(), got: support });
    }
    let count = count_events(samples, stream, exec, |rng, y| {
        y.resize(support, 0.0);
        spec.simulate_prefix(theta, rng, y);
        test.decide(y).reject
    });
    Ok(PowerEstimate::from_count(count, samples, stream))
}

/// First-kind error: rejection frequency at `theta = 0`.
pub fn estimate_size<T: DetectionTest + ?Sized>(
    test: &T,
    spec: &ProblemSpec,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<PowerEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::TooFewSamples { got: samples, min: MIN_SAMPLES });
    }
    estimate_rejection(test, spec, &[], samples, stream, exec)
}

/// Second-kind error at one signal: non-rejection frequency.
pub fn estimate_miss<T: DetectionTest + ?Sized>(
    test: &T,
    spec: &ProblemSpec,
    theta: &[f64],
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<PowerEstimate> {
    Ok(estimate_rejection(test, spec, theta, samples, stream, exec)?.complement())
}

/// Finite stand-in for the alternative `Theta_a(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySet {
    /// Radius at which every candidate passes the exact membership test. It
    /// differs from the requested radius by at most a few ulps.
    pub radius: f64,
    pub labels: Vec<String>,
    pub candidates: Vec<Signal>,
}

/// Rescales `shape` to norm `r` and pulls it back inside the ellipsoid when
/// rounding pushed it out. Returns the signal and the largest radius it
/// certifies, or `None` when the shape cannot reach norm `r` in the ellipsoid.
fn fit_to_class(spec: &ProblemSpec, shape: &[f64], r: f64) -> Option<(Signal, f64)> {
    let norm = shape.iter().map(|t| t * t).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let mut theta: Vec<f64> = shape.iter().map(|t| t * (r / norm)).collect();
    for _ in 0..8 {
        let e = ellipsoid_energy(spec.a(), &theta);
        if e <= 1.0 {
            break;
        }
        if e > 1.0 + 1e-9 {
            return None;
        }
        let k = (1.0 - 2.0 * f64::EPSILON) / e.sqrt();
        theta.iter_mut().for_each(|t| *t *= k);
    }
    if ellipsoid_energy(spec.a(), &theta) > 1.0 {
        return None;
    }
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let mut rho = norm_sq.sqrt().min(r);
    while rho * rho > norm_sq {
        rho *= 1.0 - f64::EPSILON;
    }
    Some((Signal::new(theta).ok()?, rho))
}

impl AdversarySet {
    /// Validates explicit candidates against `class`.
    pub fn new(class: &SignalClass, labelled: Vec<(String, Signal)>) -> Result<Self> {
        if labelled.is_empty() {
            return Err(Error::InvalidParameter("adversary set is empty".into()));
        }
        for (label, s) in &labelled {
            if !class.contains(s)? {
                return Err(Error::InvalidParameter(format!("candidate '{label}' is outside the alternative")));
            }
        }
        let (labels, candidates) = labelled.into_iter().unzip();
        Ok(Self { radius: class.radius, labels, candidates })
    }

    /// Builds a set from raw shapes, each rescaled to norm `r`. Shapes that
    /// cannot be placed in the alternative are dropped.
    pub fn from_shapes(spec: &ProblemSpec, r: f64, shapes: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut labelled = Vec::new();
        let mut radius = r;
        for (label, shape) in shapes {
            if let Some((s, rho)) = fit_to_class(spec, &shape, r) {
                radius = radius.min(rho);
                labelled.push((label, s));
            }
        }
        let class = SignalClass::new(spec.clone(), radius)?;
        Self::new(&class, labelled)
    }

    /// The extremal signal, the flat lower-bound signals at both optimizing
    /// bandwidths, and single spikes at `j = 1` and at the efficient dimension.
    pub fn default_for(spec: &ProblemSpec, budget: &ErrorBudget, r: f64) -> Result<Self> {
        let n = spec.truncation();
        let sol = solve_extremal_truncated(spec, r)?;
        let flat = |d: usize| -> Vec<f64> {
            (0..n).map(|j| if j < d { spec.b()[j].powi(-2) } else { 0.0 }).collect()
        };
        let spike = |j: usize| -> Vec<f64> { (0..n).map(|i| if i + 1 == j { 1.0 } else { 0.0 }).collect() };
        let d0 = lower_radius(spec, budget)?.bandwidth;
        let dstar = upper_radius(spec, budget).bandwidth;
        let shapes = vec![
            ("extremal".to_string(), sol.theta_bar.as_slice().to_vec()),
            (format!("flat-D{d0}"), flat(d0)),
            (format!("flat-D{dstar}"), flat(dstar)),
            ("spike-1".to_string(), spike(1)),
            (format!("spike-{}", sol.efficient_dim), spike(sol.efficient_dim)),
        ];
        Self::from_shapes(spec, r, shapes)
    }
}

/// Largest non-detection frequency over the candidates. This is a lower
/// bound on the supremum over the whole alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub estimate: PowerEstimate,
    pub argmax: usize,
    pub argmax_label: String,
    pub per_candidate: Vec<PowerEstimate>,
    /// Always `"candidate-sup"`.
    pub kind: String,
}

pub fn estimate_beta<T: DetectionTest + ?Sized>(
    test: &T,
    spec: &ProblemSpec,
    adversaries: &AdversarySet,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
) -> Result<BetaEstimate> {
    if adversaries.candidates.is_empty() {
        return Err(Error::InvalidParameter("adversary set is empty".into()));
    }
    let per_candidate = adversaries
        .candidates
        .iter()
        .map(|c| estimate_miss(test, spec, c.as_slice(), samples, stream, exec))
        .collect::<Result<Vec<_>>>()?;
    let argmax = per_candidate
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.probability > per_candidate[best].probability { i } else { best });
    Ok(BetaEstimate {
        estimate: per_candidate[argmax],
        argmax,
        argmax_label: adversaries.labels[argmax].clone(),
        per_candidate,
        kind: "candidate-sup".into(),
    })
}

/// Symmetric product prior `prod_j (delta_{-theta_j} + delta_{theta_j}) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub base: Signal,
    pub radius: f64,
    pub description: String,
    /// Whether `base` lies in the alternative at `radius`.
    pub in_class: bool,
}

impl PriorSpec {
    pub fn new(spec: &ProblemSpec, base: Signal, radius: f64, description: impl Into<String>) -> Result<Self> {
        let in_class = SignalClass::new(spec.clone(), radius)?.contains(&base)?;
        Ok(Self { base, radius, description: description.into(), in_class })
    }
}

/// Flat signal `theta_j = r b_j^-2 / sqrt(sum_{k<=D} b_k^-4)` for `j <= D`
/// with `r^2 = c(alpha, beta) eps^2 sqrt(sum_{k<=D} b_k^-4)`. Returns the
/// signal and `r`.
pub fn build_theta0(spec: &ProblemSpec, budget: &ErrorBudget, bandwidth: usize) -> Result<(Signal, f64)> {
    let s = crate::bounds::cumulative_b4(spec, bandwidth)?;
    let c = lower_constant(budget)?;
    let r = (c * spec.noise() * spec.noise() * s.sqrt()).sqrt();
    let scale = r / s.sqrt();
    let theta = (0..spec.truncation())
        .map(|j| if j < bandwidth { scale * spec.b()[j].powi(-2) } else { 0.0 })
        .collect();
    Ok((Signal::new(theta)?, r))
}

/// Flat prior at the lower-bound bandwidth `D0` with energy
/// `r_{eps,*}^2 = min(c eps^2 sqrt(sum_{j<=D0} b^-4), a_{D0}^-2)`. Capping the
/// energy at `a_{D0}^-2` keeps the base signal inside the ellipsoid when the
/// optimum falls on the bias side of the crossing.
pub fn lower_bound_prior(spec: &ProblemSpec, budget: &ErrorBudget) -> Result<PriorSpec> {
    let bound = lower_radius(spec, budget)?;
    let (theta0, r_d) = build_theta0(spec, budget, bound.bandwidth)?;
    let r = bound.radius_sq.sqrt();
    let base = if r < r_d { theta0.scaled(r / r_d) } else { theta0 };
    let radius = r * (1.0 - 4.0 * f64::EPSILON);
    PriorSpec::new(spec, base, radius, format!("flat prior at D0 = {}", bound.bandwidth))
}

/// `E_0[L^2] = prod cosh(b_j^2 theta_j^2 / eps^2)` and its bound `exp(u^2)`,
/// both in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    pub log_moment: f64,
    /// `u^2 = sum b^4 theta^4 / (2 eps^4)`.
    pub log_bound: f64,
}

impl SecondMoment {
    pub fn value(&self) -> f64 {
        self.log_moment.exp()
    }

    pub fn bound(&self) -> f64 {
        self.log_bound.exp()
    }
}

pub fn likelihood_second_moment(spec: &ProblemSpec, prior: &PriorSpec) -> Result<SecondMoment> {
    if !(spec.noise() > 0.0) {
        return Err(Error::InvalidParameter("likelihood ratio needs a positive noise level".into()));
    }
    if prior.base.len() > spec.truncation() {
        return Err(Error::LengthMismatch { expected: spec.truncation(), got: prior.base.len() });
    }
    let e2 = spec.noise() * spec.noise();
    let mut log_moment = 0.0;
    let mut log_bound = 0.0;
    for (b, t) in spec.b().iter().zip(prior.base.as_slice()) {
        let x = b * b * t * t / e2;
        log_moment += ln_cosh(x);
        log_bound += 0.5 * x * x;
    }
    Ok(SecondMoment { log_moment, log_bound })
}

/// `1 - alpha - sqrt(E_0[L^2] - 1) / 2`, clamped at 0, from `ln E_0[L^2]`.
pub fn beta_lower_bound_from_log_moment(log_moment: f64, alpha: f64) -> f64 {
    (1.0 - alpha - 0.5 * log_moment.max(0.0).exp_m1().sqrt()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundBeta {
    /// From the exact cosh product.
    pub exact: f64,
    /// From the `exp(u^2)` bound; never larger than `exact`.
    pub via_bound: f64,
}

pub fn lower_bound_beta(spec: &ProblemSpec, prior: &PriorSpec, alpha: f64) -> Result<LowerBoundBeta> {
    let m = likelihood_second_moment(spec, prior)?;
    Ok(LowerBoundBeta {
        exact: beta_lower_bound_from_log_moment(m.log_moment, alpha),
        via_bound: beta_lower_bound_from_log_moment(m.log_bound, alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketStatus {
    /// Bisection converged inside the search range.
    Bracketed,
    /// Already separating at the smallest probed radius; reported as 0.
    BelowRange,
    /// Not separating even at the largest feasible radius.
    NoBracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProbe {
    pub radius: f64,
    pub beta: PowerEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSearch {
    pub status: BracketStatus,
    pub radius: f64,
    pub lower: f64,
    pub upper: f64,
    pub probes: Vec<RadiusProbe>,
}

/// Options for [`empirical_radius`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusOptions {
    /// Stop when `upper / lower - 1 <= relative_tolerance`.
    pub relative_tolerance: f64,
    /// Smallest radius probed, as a fraction of `a_1^-1`.
    pub min_fraction: f64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self { relative_tolerance: 0.02, min_fraction: 1e-4 }
    }
}

/// Smallest `r` at which the test built by `builder(r)` misses the extremal
/// signal `theta_bar(r)` with frequency at most `beta`. Every probe reuses the
/// same stream so the estimated curve is monotone up to the signal change.
#[allow(clippy::too_many_arguments)]
pub fn empirical_radius<T, B>(
    builder: B,
    spec: &ProblemSpec,
    budget: &ErrorBudget,
    samples: usize,
    stream: &RngStream,
    exec: Execution,
    options: RadiusOptions,
) -> Result<RadiusSearch>
where
    T: DetectionTest,
    B: Fn(f64) -> Result<T>,
{
    let r_max = spec.max_radius_sq().sqrt() * (1.0 - 1e-6);
    let r_min = r_max * options.min_fraction;
    let mut probes = Vec::new();
    let mut probe = |r: f64| -> Result<f64> {
        let theta = solve_extremal_truncated(spec, r)?.theta_bar;
        let test = builder(r)?;
        let beta = estimate_miss(&test, spec, theta.as_slice(), samples, stream, exec)?;
        probes.push(RadiusProbe { radius: r, beta });
        Ok(beta.probability)
    };
    if probe(r_max)? > budget.beta {
        return Ok(RadiusSearch { status: BracketStatus::NoBracket, radius: r_max, lower: r_max, upper: r_max, probes });
    }
    if probe(r_min)? <= budget.beta {
        return Ok(RadiusSearch { status: BracketStatus::BelowRange, radius: 0.0, lower: 0.0, upper: r_min, probes });
    }
    let (mut lo, mut hi) = (r_min, r_max);
    while hi / lo - 1.0 > options.relative_tolerance {
        let mid = (lo * hi).sqrt();
        if probe(mid)? <= budget.beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(RadiusSearch { status: BracketStatus::Bracketed, radius: 0.5 * (lo + hi), lower: lo, upper: hi, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::calibrate_spectral;
    use crate::model::SequenceFamily;
    use proptest::prelude::*;

    fn mild(eps: f64, n: usize) -> ProblemSpec {
        ProblemSpec::new(SequenceFamily::PolynomialGrowth(1.0), SequenceFamily::PolynomialDecay(1.0), eps, n).unwrap()
    }

    fn budget() -> ErrorBudget {
        ErrorBudget::new(0.05, 0.05).unwrap()
    }

    #[test]
    fn blocks_are_execution_independent() {
        let s = RngStream::new(9, 1);
        let f = |rng: &mut StreamRng, _: &mut Vec<f64>| rand::Rng::random::<f64>(rng);
        let a = draw_samples(10_000, &s, Execution::Sequential, f);
        let b = draw_samples(10_000, &s, Execution::Parallel, f);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10_000);
    }

    #[test]
    fn constant_tests() {
        let spec = mild(0.1, 10);
        let s = RngStream::new(1, 0);
        let always = estimate_size(&ConstantTest::AlwaysReject, &spec, 10_000, &s, Execution::default()).unwrap();
        let never = estimate_size(&ConstantTest::NeverReject, &spec, 10_000, &s, Execution::default()).unwrap();
        assert_eq!((always.probability, always.half_width), (1.0, 0.0));
        assert_eq!(never.probability, 0.0);
        assert!(estimate_size(&ConstantTest::NeverReject, &spec, 100, &s, Execution::default()).is_err());
    }

    #[test]
    fn theta0_examples() {
        let direct = ProblemSpec::new(SequenceFamily::PolynomialGrowth(1.0), SequenceFamily::Direct, 0.1, 50).unwrap();
        let (theta, r) = build_theta0(&direct, &budget(), 4).unwrap();
        for t in &theta.as_slice()[..4] {
            assert!((t - r / 2.0).abs() < 1e-15);
        }
        assert!(theta.as_slice()[4..].iter().all(|t| *t == 0.0));

        for eps in [1e-2, 3e-3, 1e-3] {
            let spec = mild(eps, 400);
            let lower = lower_radius(&spec, &budget()).unwrap();
            let d0 = lower.bandwidth;
            let (theta, r) = build_theta0(&spec, &budget(), d0).unwrap();
            assert!((theta.norm_sq() - r * r).abs() <= 1e-14 * r * r);
            // the membership step holds when D0 lies on the noise side of the crossing
            let noise_side = r * r <= spec.a()[d0 - 1].powi(-2);
            assert_eq!(noise_side, spec.a()[d0 - 1].powi(2) * r * r <= 1.0 + 1e-15);
            if noise_side {
                assert!(ellipsoid_energy(spec.a(), theta.as_slice()) <= 1.0 + 1e-15);
            }
            let prior = lower_bound_prior(&spec, &budget()).unwrap();
            assert!(prior.in_class, "eps = {eps}");
            assert!((prior.radius - lower.radius_sq.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn second_moment_examples() {
        let spec = ProblemSpec::new(SequenceFamily::PolynomialGrowth(1.0), SequenceFamily::Direct, 0.3, 3).unwrap();
        let zero = PriorSpec::new(&spec, Signal::zeros(3), 0.0, "zero").unwrap();
        let m = likelihood_second_moment(&spec, &zero).unwrap();
        assert_eq!(m.value(), 1.0);
        assert_eq!(lower_bound_beta(&spec, &zero, 0.05).unwrap().exact, 0.95);

        let one = PriorSpec::new(&spec, Signal::new(vec![0.3, 0.0, 0.0]).unwrap(), 0.3, "spike").unwrap();
        let m = likelihood_second_moment(&spec, &one).unwrap();
        assert!((m.value() - 1f64.cosh()).abs() < 1e-14);

        let big = PriorSpec::new(&spec, Signal::new(vec![0.9, 0.4, 0.2]).unwrap(), 0.0, "big").unwrap();
        assert_eq!(lower_bound_beta(&spec, &big, 0.05).unwrap().exact, 0.0);
    }

    #[test]
    fn default_adversaries_are_members() {
        let spec = mild(1e-2, 400);
        let set = AdversarySet::default_for(&spec, &budget(), 0.2).unwrap();
        let class = SignalClass::new(spec.clone(), set.radius).unwrap();
        assert!(set.candidates.iter().all(|c| class.contains(c).unwrap()));
        assert!((set.radius - 0.2).abs() < 1e-12);
        assert!(set.labels.contains(&"extremal".to_string()));
    }

    #[test]
    fn radius_search_trivial_tests() {
        let spec = mild(1e-2, 400);
        let s = RngStream::new(3, 0);
        let always = empirical_radius(|_| Ok(ConstantTest::AlwaysReject), &spec, &budget(), 2000, &s, Execution::default(), RadiusOptions::default()).unwrap();
        assert_eq!((always.status, always.radius), (BracketStatus::BelowRange, 0.0));
        let never = empirical_radius(|_| Ok(ConstantTest::NeverReject), &spec, &budget(), 2000, &s, Execution::default(), RadiusOptions::default()).unwrap();
        assert_eq!(never.status, BracketStatus::NoBracket);
    }

    #[test]
    fn reproducible_estimates() {
        let spec = mild(1e-2, 100);
        let s = RngStream::new(77, 4);
        let test = calibrate_spectral(&spec, 5, 0.05, 10_000, &s, Execution::Parallel).unwrap();
        let a = estimate_size(&test, &spec, 10_000, &s.with_stream(5), Execution::Parallel).unwrap();
        let b = estimate_size(&test, &spec, 10_000, &s.with_stream(5), Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn moment_below_bound(seed in any::<u64>(), eps in 0.05f64..2.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spec = mild(eps, 12);
            let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let prior = PriorSpec::new(&spec, Signal::new(theta).unwrap(), 0.0, "random").unwrap();
            let m = likelihood_second_moment(&spec, &prior).unwrap();
            prop_assert!(m.log_moment <= m.log_bound * (1.0 + 1e-12));
            let lb = lower_bound_beta(&spec, &prior, 0.05).unwrap();
            prop_assert!(lb.via_bound <= lb.exact);
        }

        #[test]
        fn lower_bound_coherence(eps in 1e-3f64..0.2, s in 0.5f64..2.0) {
            let spec = ProblemSpec::new(SequenceFamily::PolynomialGrowth(s), SequenceFamily::PolynomialDecay(1.0), eps, 300).unwrap();
            let b = budget();
            let prior = lower_bound_prior(&spec, &b).unwrap();
            prop_assert!(prior.in_class);
            let lb = lower_bound_beta(&spec, &prior, b.alpha).unwrap();
            prop_assert!(lb.via_bound >= b.beta - 1e-12);
            prop_assert!(lb.exact >= lb.via_bound);
        }

        #[test]
        fn half_width_formula(count in 0usize..=1000) {
            let p = PowerEstimate::from_count(count, 1000, &RngStream::new(0, 0));
            prop_assert!((p.half_width - 3.0 * (p.probability * (1.0 - p.probability) / 1000.0).sqrt()).abs() < 1e-15);
        }
    }
}
