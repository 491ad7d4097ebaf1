#![allow(dead_code)]

use gsm_minimax::model::{ProblemSpec, SequenceFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizer of `sum b^4 x^2` over `x >= 0`, `sum x >= r^2`, `sum a^2 x <= 1`
/// found by enumerating every candidate support and keeping the KKT point with
/// the smallest objective. Returns `(x, objective)`.
pub fn kkt_oracle(a: &[f64], b: &[f64], r: f64) -> Option<(Vec<f64>, f64)> {
    let n = a.len();
    let r2 = r * r;
    let w: Vec<f64> = b.iter().map(|v| 0.5 / v.powi(4)).collect();
    let q: Vec<f64> = a.iter().map(|v| v * v).collect();
    let objective = |x: &[f64]| -> f64 { x.iter().zip(b).map(|(x, b)| b.powi(4) * x * x).sum() };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |x: Vec<f64>| {
        let energy: f64 = x.iter().sum();
        let ellipsoid: f64 = x.iter().zip(&q).map(|(x, q)| x * q).sum();
        if energy < r2 * (1.0 - 1e-9) || ellipsoid > 1.0 + 1e-9 {
            return;
        }
        let f = objective(&x);
        if best.as_ref().is_none_or(|(_, g)| f < *g) {
            best = Some((x, f));
        }
    };

    // energy constraint alone
    let lambda = r2 / w.iter().sum::<f64>();
    let x: Vec<f64> = w.iter().map(|w| lambda * w).collect();
    if x.iter().zip(&q).map(|(x, q)| x * q).sum::<f64>() <= 1.0 + 1e-12 {
        consider(x);
    }

    // both constraints active on the support {1..k}
    for k in 1..=n {
        let (s0, s1, s2) = (0..k).fold((0.0, 0.0, 0.0), |(s0, s1, s2), j| {
            (s0 + w[j], s1 + w[j] * q[j], s2 + w[j] * q[j] * q[j])
        });
        let det = s1 * s1 - s0 * s2;
        if det.abs() <= 1e-12 * s1 * s1 {
            continue;
        }
        let lambda = (s1 - r2 * s2) / det;
        let mu = (s0 - r2 * s1) / det;
        if !(lambda > 0.0 && mu >= -1e-12 * lambda.abs()) {
            continue;
        }
        let slack = |j: usize| lambda - mu * q[j];
        let scale = lambda.abs();
        if (0..k).any(|j| slack(j) < -1e-9 * scale) || (k..n).any(|j| slack(j) > 1e-9 * scale) {
            continue;
        }
        consider((0..n).map(|j| if j < k { w[j] * slack(j).max(0.0) } else { 0.0 }).collect());
    }
    best
}

/// `u = sqrt(sum b^4 x^2 / 2) / eps^2` for the oracle's squared amplitudes.
pub fn oracle_u(b: &[f64], x: &[f64], eps: f64) -> f64 {
    (0.5 * x.iter().zip(b).map(|(x, b)| b.powi(4) * x * x).sum::<f64>()).sqrt() / (eps * eps)
}

/// Random small instance mixing parametric and explicit families, with a
/// radius drawn inside the feasible range.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (ProblemSpec, f64) {
    let n = rng.random_range(2..=20);
    let smoothness = match rng.random_range(0..3) {
        0 => SequenceFamily::PolynomialGrowth(rng.random_range(0.5..2.5)),
        1 => SequenceFamily::ExponentialGrowth(rng.random_range(0.05..0.8)),
        _ => {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
            v.sort_by(f64::total_cmp);
            SequenceFamily::Explicit(v)
        }
    };
    let operator = match rng.random_range(0..4) {
        0 => SequenceFamily::Direct,
        1 => SequenceFamily::PolynomialDecay(rng.random_range(0.0..2.0)),
        2 => SequenceFamily::ExponentialDecay(rng.random_range(0.05..0.5)),
        _ => SequenceFamily::Explicit((0..n).map(|_| rng.random_range(0.2..2.0)).collect()),
    };
    let eps = 10f64.powf(rng.random_range(-3.0..-1.0));
    let spec = ProblemSpec::new(smoothness, operator, eps, n).expect("valid instance");
    let r_max = spec.max_radius_sq().sqrt();
    let r = r_max * rng.random_range(0.02..0.98);
    (spec, r)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
