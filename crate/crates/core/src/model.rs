//! Problem instances of the Gaussian sequence model and observation simulation.
//!
//! Observations follow `Y_j = b_j * theta_j + eps * xi_j` for `j = 1..N`, where
//! `(b_j)` are the singular values of the operator, `eps` is the noise level and
//! `xi_j` are independent standard Gaussian draws. Signals live in the ellipsoid
//! `sum a_j^2 theta_j^2 <= 1` whose axes `(a_j)` encode smoothness.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper limit on the working dimension chosen by [`truncation_for_radius`].
pub const MAX_TRUNCATION: usize = 1_000_000;

/// Relative tail budget of the truncation policy: `a_N^-2 <= TAIL_FRACTION * r^2`.
pub const TAIL_FRACTION: f64 = 1e-3;

/// Identity of the pseudo-random generator, embedded in every report.
pub const GENERATOR_ID: &str =
    "ChaCha8Rng(rand_chacha 0.9; seed_from_u64, stream=stream-id, block offset 2^40 words) + StandardNormal ziggurat (rand_distr 0.5)";

/// Word offset between consecutive Monte Carlo blocks of one stream.
const BLOCK_WORD_STRIDE: u128 = 1 << 40;

/// Parametric sequences used for the smoothness axes `a_j` and the operator
/// singular values `b_j`. Proportionality constants are fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceFamily {
    /// `1` for every index.
    Direct,
    /// `j^-t`.
    PolynomialDecay(f64),
    /// `exp(-t j)`.
    ExponentialDecay(f64),
    /// `exp(-t j^power)`.
    PowerExponentialDecay { rate: f64, power: f64 },
    /// `j^s`.
    PolynomialGrowth(f64),
    /// `exp(s j)`.
    ExponentialGrowth(f64),
    /// `exp(s j^power)`.
    PowerExponentialGrowth { rate: f64, power: f64 },
    /// Stored values, indexed from 1.
    Explicit(Vec<f64>),
}

impl SequenceFamily {
    pub fn kind(&self) -> &'static str {
        match self {
            SequenceFamily::Direct => "direct",
            SequenceFamily::PolynomialDecay(_) => "polynomial-decay",
            SequenceFamily::ExponentialDecay(_) => "exponential-decay",
            SequenceFamily::PowerExponentialDecay { .. } => "power-exponential-decay",
            SequenceFamily::PolynomialGrowth(_) => "polynomial-growth",
            SequenceFamily::ExponentialGrowth(_) => "exponential-growth",
            SequenceFamily::PowerExponentialGrowth { .. } => "power-exponential-growth",
            SequenceFamily::Explicit(_) => "explicit",
        }
    }

    /// The rate parameter (`s` or `t`), or `None` for direct and explicit families.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            SequenceFamily::PolynomialDecay(p)
            | SequenceFamily::ExponentialDecay(p)
            | SequenceFamily::PolynomialGrowth(p)
            | SequenceFamily::ExponentialGrowth(p) => Some(p),
            SequenceFamily::PowerExponentialDecay { rate, .. }
            | SequenceFamily::PowerExponentialGrowth { rate, .. } => Some(rate),
            SequenceFamily::Direct | SequenceFamily::Explicit(_) => None,
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, SequenceFamily::Explicit(_))
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} parameter must be positive and finite, got {v}",
                    name
                )))
            }
        };
        match self {
            SequenceFamily::Direct => Ok(()),
            SequenceFamily::PolynomialDecay(p)
            | SequenceFamily::ExponentialDecay(p)
            | SequenceFamily::PolynomialGrowth(p)
            | SequenceFamily::ExponentialGrowth(p) => positive(self.kind(), *p),
            SequenceFamily::PowerExponentialDecay { rate, power }
            | SequenceFamily::PowerExponentialGrowth { rate, power } => {
                positive(self.kind(), *rate)?;
                positive(self.kind(), *power)
            }
            SequenceFamily::Explicit(values) => {
                if values.is_empty() {
                    return Err(Error::InvalidParameter("explicit sequence is empty".into()));
                }
                match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    Some(v) => Err(Error::InvalidParameter(format!(
                        "explicit sequence entries must be positive and finite, got {v}"
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    /// Natural logarithm of the `j`-th term. Stays finite where the value
    /// itself would overflow.
    pub fn log_value(&self, j: usize) -> Result<f64> {
        if j == 0 {
            return Err(Error::IndexOutOfRange { index: 0, len: usize::MAX });
        }
        let x = j as f64;
        Ok(match self {
            SequenceFamily::Direct => 0.0,
            SequenceFamily::PolynomialDecay(t) => -t * x.ln(),
            SequenceFamily::ExponentialDecay(t) => -t * x,
            SequenceFamily::PowerExponentialDecay { rate, power } => -rate * x.powf(*power),
            SequenceFamily::PolynomialGrowth(s) => s * x.ln(),
            SequenceFamily::ExponentialGrowth(s) => s * x,
            SequenceFamily::PowerExponentialGrowth { rate, power } => rate * x.powf(*power),
            SequenceFamily::Explicit(values) => values
                .get(j - 1)
                .ok_or(Error::IndexOutOfRange { index: j, len: values.len() })?
                .ln(),
        })
    }

    /// The `j`-th term (`j >= 1`).
    pub fn value(&self, j: usize) -> Result<f64> {
        if j == 0 {
            return Err(Error::IndexOutOfRange { index: 0, len: usize::MAX });
        }
        let x = j as f64;
        Ok(match self {
            SequenceFamily::Direct => 1.0,
            SequenceFamily::PolynomialDecay(t) => x.powf(-t),
            SequenceFamily::PolynomialGrowth(s) => x.powf(*s),
            SequenceFamily::Explicit(values) => *values
                .get(j - 1)
                .ok_or(Error::IndexOutOfRange { index: j, len: values.len() })?,
            _ => self.log_value(j)?.exp(),
        })
    }

    /// Whether consecutive ratios `v_{D-1}/v_D` stay in a fixed band bounded
    /// away from 0 and infinity for all `D`, when this is known analytically.
    /// Returns `None` for explicit sequences.
    pub fn ratio_band_bounded(&self) -> Option<bool> {
        match self {
            SequenceFamily::Direct
            | SequenceFamily::PolynomialDecay(_)
            | SequenceFamily::ExponentialDecay(_)
            | SequenceFamily::PolynomialGrowth(_)
            | SequenceFamily::ExponentialGrowth(_) => Some(true),
            SequenceFamily::PowerExponentialDecay { power, .. }
            | SequenceFamily::PowerExponentialGrowth { power, .. } => Some(*power <= 1.0),
            SequenceFamily::Explicit(_) => None,
        }
    }
}

impl fmt::Display for SequenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceFamily::Direct => write!(f, "direct"),
            SequenceFamily::PowerExponentialDecay { rate, power }
            | SequenceFamily::PowerExponentialGrowth { rate, power } => {
                write!(f, "{}(rate={rate}, power={power})", self.kind())
            }
            SequenceFamily::Explicit(v) => write!(f, "explicit(len={})", v.len()),
            _ => write!(f, "{}({})", self.kind(), self.parameter().unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug)]
struct Tables {
    a: Vec<f64>,
    b: Vec<f64>,
    /// `b_inv4_prefix[D] = sum_{j<=D} b_j^-4`, with a leading zero.
    b_inv4_prefix: Vec<f64>,
}

/// A truncated detection problem: smoothness axes, operator, noise level and
/// working dimension `N`. Sequence tables and the prefix sums of `b_j^-4` are
/// computed once and shared between clones.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    smoothness: SequenceFamily,
    operator: SequenceFamily,
    noise: f64,
    truncation: usize,
    tables: Arc<Tables>,
}

impl PartialEq for ProblemSpec {
    fn eq(&self, other: &Self) -> bool {
        self.smoothness == other.smoothness
            && self.operator == other.operator
            && self.noise == other.noise
            && self.truncation == other.truncation
    }
}

impl ProblemSpec {
    pub fn new(
        smoothness: SequenceFamily,
        operator: SequenceFamily,
        noise: f64,
        truncation: usize,
    ) -> Result<Self> {
        smoothness.validate()?;
        operator.validate()?;
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and non-negative, got {noise}"
            )));
        }
        if truncation < 2 {
            return Err(Error::InvalidParameter(format!(
                "truncation must be at least 2, got {truncation}"
            )));
        }
        let a = (1..=truncation)
            .map(|j| smoothness.value(j))
            .collect::<Result<Vec<_>>>()?;
        let b = (1..=truncation)
            .map(|j| operator.value(j))
            .collect::<Result<Vec<_>>>()?;
        if let Some(j) = a.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "smoothness sequence is not positive and finite at j = {}",
                j + 1
            )));
        }
        if let Some(w) = a.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(format!(
                "smoothness sequence must be non-decreasing (a_{} > a_{})",
                w + 1,
                w + 2
            )));
        }
        if let Some(j) = b.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "operator sequence is not positive and finite at j = {}",
                j + 1
            )));
        }
        let mut b_inv4_prefix = Vec::with_capacity(truncation + 1);
        b_inv4_prefix.push(0.0);
        let mut acc = 0.0;
        for &bj in &b {
            acc += bj.powi(-4);
            b_inv4_prefix.push(acc);
        }
        if !acc.is_finite() {
            return Err(Error::InvalidParameter(
                "operator decays too fast: sum of b_j^-4 overflows at this truncation".into(),
            ));
        }
        Ok(Self {
            smoothness,
            operator,
            noise,
            truncation,
            tables: Arc::new(Tables { a, b, b_inv4_prefix }),
        })
    }

    /// Same sequences and truncation, different noise level.
    pub fn with_noise(&self, noise: f64) -> Result<Self> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and non-negative, got {noise}"
            )));
        }
        Ok(Self { noise, ..self.clone() })
    }

    pub fn smoothness(&self) -> &SequenceFamily {
        &self.smoothness
    }

    pub fn operator(&self) -> &SequenceFamily {
        &self.operator
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// `a_1 .. a_N`.
    pub fn a(&self) -> &[f64] {
        &self.tables.a
    }

    /// `b_1 .. b_N`.
    pub fn b(&self) -> &[f64] {
        &self.tables.b
    }

    /// Prefix sums of `b_j^-4`, index `D` holds the sum over `1..=D`.
    pub fn b_inv4_prefix(&self) -> &[f64] {
        &self.tables.b_inv4_prefix
    }

    /// Largest squared norm inside the ellipsoid, `a_1^-2`.
    pub fn max_radius_sq(&self) -> f64 {
        self.tables.a[0].powi(-2)
    }

    /// Simulates `Y_1..Y_N` from a fresh generator of `stream`.
    pub fn simulate(&self, signal: &Signal, stream: &RngStream) -> Result<Vec<f64>> {
        if signal.len() != self.truncation {
            return Err(Error::LengthMismatch { expected: self.truncation, got: signal.len() });
        }
        let mut out = vec![0.0; self.truncation];
        self.simulate_prefix(signal.as_slice(), &mut stream.rng(), &mut out);
        Ok(out)
    }

    /// Fills `out` with `Y_1..Y_L`, `L = out.len()`, consuming one normal draw
    /// per coordinate in index order. Coordinates of `theta` past its length
    /// are treated as zero.
    pub fn simulate_prefix<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R, out: &mut [f64]) {
        let b = &self.tables.b;
        for (j, y) in out.iter_mut().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            let mean = theta.get(j).map_or(0.0, |t| b[j] * t);
            *y = mean + self.noise * xi;
        }
    }
}

/// Flat key-value form of [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpecRecord {
    pub smoothness_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness_param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness_values: Option<Vec<f64>>,
    pub operator_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_values: Option<Vec<f64>>,
    pub noise: f64,
    pub truncation: usize,
}

type FamilyFields = (String, Option<f64>, Option<f64>, Option<Vec<f64>>);

fn family_fields(f: &SequenceFamily) -> FamilyFields {
    let power = match f {
        SequenceFamily::PowerExponentialDecay { power, .. }
        | SequenceFamily::PowerExponentialGrowth { power, .. } => Some(*power),
        _ => None,
    };
    let values = match f {
        SequenceFamily::Explicit(v) => Some(v.clone()),
        _ => None,
    };
    (f.kind().to_string(), f.parameter(), power, values)
}

fn family_from_fields(
    kind: &str,
    param: Option<f64>,
    power: Option<f64>,
    values: Option<Vec<f64>>,
) -> Result<SequenceFamily> {
    let need = |p: Option<f64>, what: &str| {
        p.ok_or_else(|| Error::InvalidParameter(format!("{kind} family requires {what}")))
    };
    Ok(match kind {
        "direct" => SequenceFamily::Direct,
        "polynomial-decay" => SequenceFamily::PolynomialDecay(need(param, "a parameter")?),
        "exponential-decay" => SequenceFamily::ExponentialDecay(need(param, "a parameter")?),
        "polynomial-growth" => SequenceFamily::PolynomialGrowth(need(param, "a parameter")?),
        "exponential-growth" => SequenceFamily::ExponentialGrowth(need(param, "a parameter")?),
        "power-exponential-decay" => SequenceFamily::PowerExponentialDecay {
            rate: need(param, "a parameter")?,
            power: need(power, "a power")?,
        },
        "power-exponential-growth" => SequenceFamily::PowerExponentialGrowth {
            rate: need(param, "a parameter")?,
            power: need(power, "a power")?,
        },
        "explicit" => SequenceFamily::Explicit(
            values.ok_or_else(|| Error::InvalidParameter("explicit family requires values".into()))?,
        ),
        other => return Err(Error::InvalidParameter(format!("unknown family kind '{other}'"))),
    })
}

impl From<&ProblemSpec> for ProblemSpecRecord {
    fn from(spec: &ProblemSpec) -> Self {
        let (smoothness_kind, smoothness_param, smoothness_power, smoothness_values) =
            family_fields(&spec.smoothness);
        let (operator_kind, operator_param, operator_power, operator_values) =
            family_fields(&spec.operator);
        Self {
            smoothness_kind,
            smoothness_param,
            smoothness_power,
            smoothness_values,
            operator_kind,
            operator_param,
            operator_power,
            operator_values,
            noise: spec.noise,
            truncation: spec.truncation,
        }
    }
}

impl From<ProblemSpec> for ProblemSpecRecord {
    fn from(spec: ProblemSpec) -> Self {
        ProblemSpecRecord::from(&spec)
    }
}

impl TryFrom<ProblemSpecRecord> for ProblemSpec {
    type Error = Error;

    fn try_from(r: ProblemSpecRecord) -> Result<Self> {
        let smoothness = family_from_fields(
            &r.smoothness_kind,
            r.smoothness_param,
            r.smoothness_power,
            r.smoothness_values,
        )?;
        let operator =
            family_from_fields(&r.operator_kind, r.operator_param, r.operator_power, r.operator_values)?;
        ProblemSpec::new(smoothness, operator, r.noise, r.truncation)
    }
}

impl Serialize for ProblemSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemSpecRecord::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProblemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let record = ProblemSpecRecord::deserialize(deserializer)?;
        ProblemSpec::try_from(record).map_err(serde::de::Error::custom)
    }
}

/// Smallest `N >= 2` with `a_N^-2 <= TAIL_FRACTION * radius^2`, capped at
/// [`MAX_TRUNCATION`]. The ellipsoid tail beyond `N` then carries at most that
/// fraction of the working energy.
pub fn truncation_for_radius(smoothness: &SequenceFamily, radius: f64) -> Result<usize> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    // log a_N >= log(1/sqrt(TAIL_FRACTION)) - log r
    let target = -0.5 * TAIL_FRACTION.ln() - radius.ln();
    let ok = |n: usize| -> Result<bool> { Ok(smoothness.log_value(n)? >= target) };
    let cap = match smoothness {
        SequenceFamily::Explicit(v) => v.len().min(MAX_TRUNCATION),
        _ => MAX_TRUNCATION,
    };
    if cap < 2 {
        return Err(Error::InvalidParameter("explicit smoothness sequence shorter than 2".into()));
    }
    if ok(2)? {
        return Ok(2);
    }
    // a is non-decreasing, so the predicate is monotone in N
    let mut lo = 2;
    let mut hi = 4;
    while hi < cap && !ok(hi)? {
        lo = hi;
        hi *= 2;
    }
    if hi >= cap {
        if !ok(cap)? {
            return Ok(cap);
        }
        hi = cap;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Coefficients `theta_1..theta_N` of a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if let Some(v) = coefficients.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("signal entries must be finite, got {v}")));
        }
        Ok(Self(coefficients))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|t| t * t).sum()
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|t| t * factor).collect())
    }
}

/// Writes a numeric vector as a single CSV column with a header.
pub fn to_csv_column(header: &str, values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 24 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for v in values {
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

/// Parses a single CSV column, skipping a non-numeric header line if present.
pub fn parse_csv_column(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    if let Some(first) = lines.peek() {
        if first.parse::<f64>().is_err() {
            lines.next();
        }
    }
    lines
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad CSV value '{l}': {e}")))
        })
        .collect()
}

/// The alternative `{theta in ellipsoid : ||theta|| >= radius}`.
#[derive(Debug, Clone)]
pub struct SignalClass {
    pub spec: ProblemSpec,
    pub radius: f64,
}

impl SignalClass {
    pub fn new(spec: ProblemSpec, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be non-negative, got {radius}")));
        }
        Ok(Self { spec, radius })
    }

    /// `r^2 <= a_1^-2`.
    pub fn is_nonempty(&self) -> bool {
        self.radius * self.radius <= self.spec.max_radius_sq()
    }

    /// Exact membership: `sum a_j^2 theta_j^2 <= 1` and `||theta||^2 >= r^2`.
    pub fn contains(&self, signal: &Signal) -> Result<bool> {
        if signal.len() != self.spec.truncation() {
            return Err(Error::LengthMismatch { expected: self.spec.truncation(), got: signal.len() });
        }
        Ok(ellipsoid_energy(self.spec.a(), signal.as_slice()) <= 1.0
            && signal.norm_sq() >= self.radius * self.radius)
    }
}

/// `sum a_j^2 theta_j^2`.
pub fn ellipsoid_energy(a: &[f64], theta: &[f64]) -> f64 {
    a.iter().zip(theta).map(|(a, t)| a * a * t * t).sum()
}

/// A reproducible source of Gaussian draws identified by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

pub type StreamRng = ChaCha8Rng;

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> StreamRng {
        self.block_rng(0)
    }

    /// Generator positioned at block `block` of the stream. Blocks are
    /// disjoint windows of `2^40` words, so work split into blocks gives the
    /// same draws whatever the execution order.
    pub fn block_rng(&self, block: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(block as u128 * BLOCK_WORD_STRIDE);
        rng
    }

    /// A different stream id under the same seed.
    pub fn with_stream(&self, stream: u64) -> Self {
        Self { seed: self.seed, stream }
    }

    /// Draws one raw 64-bit word, mostly useful to check stream identity.
    pub fn first_word(&self) -> u64 {
        self.rng().next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(a: Vec<f64>) -> ProblemSpec {
        ProblemSpec::new(SequenceFamily::Explicit(a), SequenceFamily::Direct, 1.0, 2).unwrap()
    }

    #[test]
    fn sequence_values() {
        assert_eq!(SequenceFamily::Direct.value(7).unwrap(), 1.0);
        assert_eq!(SequenceFamily::PolynomialDecay(1.0).value(4).unwrap(), 0.25);
        assert_eq!(SequenceFamily::PolynomialGrowth(2.0).value(3).unwrap(), 9.0);
        let e = SequenceFamily::Explicit(vec![1.0, 2.0]);
        assert_eq!(e.value(2).unwrap(), 2.0);
        assert_eq!(e.value(3), Err(Error::IndexOutOfRange { index: 3, len: 2 }));
        assert!(SequenceFamily::Direct.value(0).is_err());
    }

    #[test]
    fn family_monotonicity() {
        for j in 1..200 {
            let g = SequenceFamily::PolynomialGrowth(1.5);
            let d = SequenceFamily::ExponentialDecay(0.3);
            assert!(g.value(j + 1).unwrap() >= g.value(j).unwrap());
            assert!(d.value(j + 1).unwrap() <= d.value(j).unwrap());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ProblemSpec::new(SequenceFamily::Direct, SequenceFamily::Direct, 1.0, 1).is_err());
        assert!(ProblemSpec::new(SequenceFamily::Direct, SequenceFamily::Direct, -1.0, 4).is_err());
        assert!(ProblemSpec::new(
            SequenceFamily::Explicit(vec![2.0, 1.0]),
            SequenceFamily::Direct,
            1.0,
            2
        )
        .is_err());
        assert!(ProblemSpec::new(
            SequenceFamily::PolynomialGrowth(1.0),
            SequenceFamily::ExponentialDecay(1.0),
            1.0,
            400
        )
        .is_err());
    }

    #[test]
    fn noiseless_simulation_is_exact() {
        let spec = ProblemSpec::new(
            SequenceFamily::PolynomialGrowth(1.0),
            SequenceFamily::PolynomialDecay(1.0),
            0.0,
            5,
        )
        .unwrap();
        let theta = Signal::new(vec![1.0, -2.0, 3.0, 0.5, 0.0]).unwrap();
        let y = spec.simulate(&theta, &RngStream::new(1, 0)).unwrap();
        for (j, yj) in y.iter().enumerate() {
            assert_eq!(*yj, spec.b()[j] * theta.as_slice()[j]);
        }
        assert!(spec.simulate(&Signal::zeros(3), &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn class_membership_examples() {
        let spec = spec2(vec![1.0, 2.0]);
        let class = SignalClass::new(spec.clone(), 0.0).unwrap();
        assert!(class.contains(&Signal::zeros(2)).unwrap());

        let theta = Signal::new(vec![1.0 / 3f64.sqrt(), 1.0 / 6f64.sqrt()]).unwrap();
        let class = SignalClass::new(spec.clone(), 0.7).unwrap();
        // sum a^2 theta^2 = 1/3 + 4/6 may round to 1 + ulp; check both sums
        let energy = ellipsoid_energy(spec.a(), theta.as_slice());
        assert!((energy - 1.0).abs() < 1e-15);
        assert!(theta.norm_sq() >= 0.49);
        assert_eq!(class.contains(&theta).unwrap(), energy <= 1.0);

        let outside = Signal::new(vec![1.1, 0.0]).unwrap();
        for r in [0.0, 0.3, 1.0] {
            assert!(!SignalClass::new(spec.clone(), r).unwrap().contains(&outside).unwrap());
        }
    }

    #[test]
    fn nonemptiness_boundary() {
        let spec = ProblemSpec::new(
            SequenceFamily::Explicit(vec![2.0, 3.0, 5.0]),
            SequenceFamily::Direct,
            1.0,
            3,
        )
        .unwrap();
        let extremal = Signal::new(vec![0.5, 0.0, 0.0]).unwrap();
        for r in [0.1, 0.49, 0.5, 0.500001, 0.7] {
            let class = SignalClass::new(spec.clone(), r).unwrap();
            assert_eq!(class.contains(&extremal).unwrap(), r <= 0.5);
            assert_eq!(class.is_nonempty(), r <= 0.5);
        }
    }

    #[test]
    fn record_round_trip() {
        let spec = ProblemSpec::new(
            SequenceFamily::PolynomialGrowth(1.0),
            SequenceFamily::PowerExponentialDecay { rate: 0.1, power: 1.5 },
            0.01,
            50,
        )
        .unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"smoothness_kind\":\"polynomial-growth\""));
        let back: ProblemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.b(), spec.b());
    }

    #[test]
    fn csv_column_round_trip() {
        let v = vec![0.1, -2.5e-7, 3.0];
        let text = to_csv_column("theta", &v);
        assert_eq!(parse_csv_column(&text).unwrap(), v);
    }

    #[test]
    fn truncation_policy() {
        let s1 = SequenceFamily::PolynomialGrowth(1.0);
        let n = truncation_for_radius(&s1, 0.1).unwrap();
        // a_N = N >= sqrt(1000)/0.1 = 316.2...
        assert_eq!(n, 317);
        assert_eq!(truncation_for_radius(&SequenceFamily::Direct, 0.5).unwrap(), MAX_TRUNCATION);
        assert_eq!(truncation_for_radius(&s1, 1e3).unwrap(), 2);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(42, 3);
        assert_eq!(s.first_word(), RngStream::new(42, 3).first_word());
        assert_ne!(s.first_word(), s.with_stream(4).first_word());
        assert_ne!(s.block_rng(0).next_u64(), s.block_rng(1).next_u64());
    }
}
