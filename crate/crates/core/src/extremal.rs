//! The quartic extremal problem
//! `inf { sum b_j^4 theta_j^4 / (2 eps^4) : sum a_j^2 theta_j^2 <= 1, ||theta|| >= r }`.
//!
//! With `w_j = b_j^-4` and `q_j = a_j^2` the minimizer has the form
//! `theta_j^2 = z0^2 w_j (1 - A q_j)_+` where the multiplier `A` solves
//! `r^2 = g(A) = A J1(A) / J2(A)`, with
//! `J1 = sum w (1 - A q)_+` and `J2 = A sum w q (1 - A q)_+`.
//! `g` runs monotonically from `sum w / sum w q` at `A = 0` up to `a_1^-2`.
//! Below `g(0)` the ellipsoid is slack and only the energy constraint binds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ellipsoid_energy, ProblemSpec, Signal};

/// Relative residual allowed on either constraint.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-10;

const BISECTION_TOLERANCE: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSolution {
    pub radius: f64,
    pub noise: f64,
    /// Multiplier `A`; zero when only the energy constraint binds.
    pub lagrange_a: f64,
    pub z0_sq: f64,
    /// Largest `m` with `A a_m^2 <= 1`.
    pub efficient_dim: usize,
    pub theta_bar: Signal,
    pub u_eps: f64,
    pub omega0: f64,
    pub j0: f64,
    pub j1: f64,
    pub j2: f64,
    /// Whether the ellipsoid constraint is active at the optimum.
    pub ellipsoid_active: bool,
    /// `|‖theta‖^2 - r^2| / r^2`.
    pub energy_residual: f64,
    /// `|sum a^2 theta^2 - 1|` when the ellipsoid is active, else 0.
    pub ellipsoid_residual: f64,
    /// The support reaches the truncation `N`.
    pub uses_full_truncation: bool,
    /// `omega_j`, trailing zeros included, length `N`.
    pub filters: Vec<f64>,
}

impl ExtremalSolution {
    /// Cutoff scale `A^(-1/(2s))` for polynomial smoothness `a_j = j^s`.
    pub fn cutoff_scale(&self, s: f64) -> f64 {
        self.lagrange_a.powf(-0.5 / s)
    }
}

struct Sums {
    j0: f64,
    j1: f64,
    /// `sum w q (1 - A q)_+`, so `J2 = A * k2`.
    k2: f64,
}

fn weights(spec: &ProblemSpec) -> (Vec<f64>, Vec<f64>) {
    let w = spec.b().iter().map(|b| b.powi(-4)).collect();
    let q = spec.a().iter().map(|a| a * a).collect();
    (w, q)
}

fn sums(w: &[f64], q: &[f64], a_mult: f64) -> Sums {
    let mut s = Sums { j0: 0.0, j1: 0.0, k2: 0.0 };
    for (wj, qj) in w.iter().zip(q) {
        let f = 1.0 - a_mult * qj;
        if f > 0.0 {
            s.j0 += wj * f * f;
            s.j1 += wj * f;
            s.k2 += wj * qj * f;
        }
    }
    s
}

/// Largest `m` with `A q_m <= 1` (q non-decreasing).
fn efficient_dim(q: &[f64], a_mult: f64) -> usize {
    q.partition_point(|qj| a_mult * qj <= 1.0)
}

/// Exact two-constraint solve on the active set `1..=m`: returns `(z0^2, A)`.
fn polish(w: &[f64], q: &[f64], m: usize, r_sq: f64) -> Option<(f64, f64)> {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (wj, qj) in w[..m].iter().zip(&q[..m]) {
        s0 += wj;
        s1 += wj * qj;
        s2 += wj * qj * qj;
    }
    // p S0 - P S1 = r^2, p S1 - P S2 = 1 with p = z0^2, P = z0^2 A
    let det = s1 * s1 - s0 * s2;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let p = (s1 - r_sq * s2) / det;
    let big_p = (s0 - r_sq * s1) / det;
    let a_mult = big_p / p;
    let consistent = p > 0.0
        && a_mult > 0.0
        && a_mult.is_finite()
        && a_mult * q[m - 1] < 1.0
        && q.get(m).is_none_or(|qn| a_mult * qn >= 1.0);
    consistent.then_some((p, a_mult))
}

fn assemble(spec: &ProblemSpec, w: &[f64], q: &[f64], r: f64, z0_sq: f64, a_mult: f64, active: bool) -> Result<ExtremalSolution> {
    let r_sq = r * r;
    let s = sums(w, q, a_mult);
    let theta: Vec<f64> = w
        .iter()
        .zip(q)
        .map(|(wj, qj)| {
            let f = 1.0 - a_mult * qj;
            if f > 0.0 { (z0_sq * wj * f).sqrt() } else { 0.0 }
        })
        .collect();
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let energy_residual = (norm_sq - r_sq).abs() / r_sq;
    let ellipsoid = ellipsoid_energy(spec.a(), &theta);
    let ellipsoid_residual = if active { (ellipsoid - 1.0).abs() } else { 0.0 };
    if !(energy_residual <= CONSTRAINT_TOLERANCE && ellipsoid_residual <= CONSTRAINT_TOLERANCE) {
        return Err(Error::Numerical(format!(
            "extremal constraints not met: energy residual {energy_residual:e}, ellipsoid residual {ellipsoid_residual:e}"
        )));
    }
    if !active && ellipsoid > 1.0 {
        return Err(Error::Numerical("energy-only solution leaves the ellipsoid".into()));
    }
    let e2 = spec.noise() * spec.noise();
    let u_eps = z0_sq * (0.5 * s.j0).sqrt() / e2;
    let norm = (2.0 * s.j0).sqrt();
    let filters: Vec<f64> = spec
        .b()
        .iter()
        .zip(q)
        .map(|(b, qj)| {
            let f = 1.0 - a_mult * qj;
            if f > 0.0 { f / (b * b * norm) } else { 0.0 }
        })
        .collect();
    let omega0 = filters.iter().copied().fold(0.0, f64::max);
    let m = if active { efficient_dim(q, a_mult) } else { q.len() };
    Ok(ExtremalSolution {
        radius: r,
        noise: spec.noise(),
        lagrange_a: a_mult,
        z0_sq,
        efficient_dim: m,
        theta_bar: Signal::new(theta)?,
        u_eps,
        omega0,
        j0: s.j0,
        j1: s.j1,
        j2: a_mult * s.k2,
        ellipsoid_active: active,
        energy_residual,
        ellipsoid_residual,
        uses_full_truncation: m == q.len(),
        filters,
    })
}

/// Solves the extremal problem at the working truncation, accepting
/// solutions whose support reaches `N`.
pub fn solve_extremal_truncated(spec: &ProblemSpec, r: f64) -> Result<ExtremalSolution> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let r_sq = r * r;
    let max_sq = spec.max_radius_sq();
    if r_sq >= max_sq {
        return Err(Error::EmptyAlternative { radius_sq: r_sq, max_sq });
    }
    let (w, q) = weights(spec);
    let s_w: f64 = w.iter().sum();
    let s_wq: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
    if r_sq * s_wq <= s_w {
        // r^2 <= g(0): water-filling over the b^-4 weights
        return assemble(spec, &w, &q, r, r_sq / s_w, 0.0, false);
    }

    let g = |a_mult: f64| {
        let s = sums(&w, &q, a_mult);
        s.j1 / s.k2
    };
    let (mut lo, mut hi) = (0.0, 1.0 / q[0]);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOLERANCE * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if !gm.is_finite() || gm > r_sq {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a_bis = 0.5 * (lo + hi);
    let m = efficient_dim(&q, a_bis).max(1);

    let candidates = [m, m.saturating_sub(1), m + 1];
    for &k in candidates.iter().filter(|k| (1..=q.len()).contains(*k)) {
        if let Some((z0_sq, a_mult)) = polish(&w, &q, k, r_sq) {
            if let Ok(sol) = assemble(spec, &w, &q, r, z0_sq, a_mult, true) {
                return Ok(sol);
            }
        }
    }
    let s = sums(&w, &q, a_bis);
    assemble(spec, &w, &q, r, r_sq / s.j1, a_bis, true)
}

/// Solves the extremal problem and rejects solutions whose support is cut by
/// the truncation: for parametric smoothness the next axis `a_{N+1}` must be
/// inactive.
pub fn solve_extremal(spec: &ProblemSpec, r: f64) -> Result<ExtremalSolution> {
    let sol = solve_extremal_truncated(spec, r)?;
    if sol.uses_full_truncation {
        let n = spec.truncation();
        let cut = match spec.smoothness().value(n + 1) {
            Ok(next) => !sol.ellipsoid_active || sol.lagrange_a * next * next < 1.0,
            Err(_) => false,
        };
        if cut && !spec.smoothness().is_explicit() {
            return Err(Error::TruncationTooSmall(n));
        }
    }
    Ok(sol)
}

/// `u_eps(r)`; zero at `r = 0`.
pub fn u_of_r(spec: &ProblemSpec, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(solve_extremal(spec, r)?.u_eps)
}

/// Ingster filters `omega_j = b_j^2 theta_j^2 / sqrt(2 sum b^4 theta^4)`.
pub fn ingster_filters(sol: &ExtremalSolution) -> Result<Vec<f64>> {
    if sol.theta_bar.as_slice().iter().all(|t| *t == 0.0) {
        return Err(Error::InvalidParameter("filters undefined for a zero extremal signal".into()));
    }
    Ok(sol.filters.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SequenceFamily, SignalClass};
    use proptest::prelude::*;

    fn explicit(a: Vec<f64>, b: Vec<f64>, eps: f64) -> ProblemSpec {
        let n = a.len();
        ProblemSpec::new(SequenceFamily::Explicit(a), SequenceFamily::Explicit(b), eps, n).unwrap()
    }

    fn mild(s: f64, t: f64, eps: f64, n: usize) -> ProblemSpec {
        ProblemSpec::new(SequenceFamily::PolynomialGrowth(s), SequenceFamily::PolynomialDecay(t), eps, n).unwrap()
    }

    #[test]
    fn two_coordinate_toy() {
        let spec = explicit(vec![1.0, 2.0], vec![1.0, 1.0], 1.0);
        let sol = solve_extremal(&spec, 0.5f64.sqrt()).unwrap();
        let th = sol.theta_bar.as_slice();
        assert!((th[0] * th[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((th[1] * th[1] - 1.0 / 6.0).abs() < 1e-14);
        assert!((sol.lagrange_a - 1.0 / 7.0).abs() < 1e-14);
        assert!((sol.u_eps - (5.0f64 / 72.0).sqrt()).abs() < 1e-14);
        assert_eq!(sol.efficient_dim, 2);
    }

    #[test]
    fn rejects_empty_alternative() {
        let spec = explicit(vec![1.0, 2.0], vec![1.0, 1.0], 1.0);
        assert!(matches!(solve_extremal(&spec, 1.0), Err(Error::EmptyAlternative { .. })));
        assert!(solve_extremal(&spec, 0.0).is_err());
        assert_eq!(u_of_r(&spec, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn flat_block_filters() {
        // constant axes over the first block, then a jump that the solution never reaches
        let spec = explicit(vec![1.0, 1.0, 1.0, 1.0], vec![1.0; 4], 1.0);
        let sol = solve_extremal(&spec, 0.5).unwrap();
        assert!(!sol.ellipsoid_active);
        let w = ingster_filters(&sol).unwrap();
        for wj in &w {
            assert!((wj - 1.0 / 8f64.sqrt()).abs() < 1e-15);
        }
        assert!((sol.omega0 - 1.0 / 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn truncation_too_small_is_detected() {
        let spec = mild(1.0, 1.0, 1e-3, 5);
        assert!(matches!(solve_extremal(&spec, 0.05), Err(Error::TruncationTooSmall(5))));
        assert!(solve_extremal_truncated(&spec, 0.05).is_ok());
    }

    #[test]
    fn eps_scaling_is_exact() {
        let spec = mild(1.0, 1.0, 1e-2, 2000);
        let u1 = u_of_r(&spec, 0.05).unwrap();
        let u2 = u_of_r(&spec.with_noise(0.5e-2).unwrap(), 0.05).unwrap();
        assert_eq!(u2, 4.0 * u1);
    }

    #[test]
    fn bounded_u_along_critical_rule() {
        let rate = 2.0 / 4.5;
        let us: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&e: &f64| {
                let r = e.powf(rate);
                let n = crate::model::truncation_for_radius(&SequenceFamily::PolynomialGrowth(1.0), r).unwrap();
                u_of_r(&mild(1.0, 1.0, e, n), r).unwrap()
            })
            .collect();
        let ratio = us[0] / us[1];
        assert!((0.5..=2.0).contains(&ratio), "u values {us:?}");
    }

    #[test]
    fn omega0_decreases_with_eps() {
        let rate = 2.0 / 4.5;
        let mut prev = f64::INFINITY;
        for e in [1e-1, 1e-2, 1e-3, 1e-4f64] {
            let r = e.powf(rate) * 0.9;
            let n = crate::model::truncation_for_radius(&SequenceFamily::PolynomialGrowth(1.0), r).unwrap();
            let sol = solve_extremal(&mild(1.0, 1.0, e, n), r).unwrap();
            assert!(sol.omega0 < prev);
            prev = sol.omega0;
        }
    }

    /// Pointwise objective of a candidate in squared coordinates.
    fn quartic(spec: &ProblemSpec, x: &[f64]) -> f64 {
        spec.b().iter().zip(x).map(|(b, x)| b.powi(4) * x * x).sum()
    }

    fn check_invariants(spec: &ProblemSpec, sol: &ExtremalSolution) {
        let r_sq = sol.radius * sol.radius;
        let th = sol.theta_bar.as_slice();
        for (j, t) in th.iter().enumerate() {
            let f = (1.0 - sol.lagrange_a * spec.a()[j].powi(2)).max(0.0);
            let expect = sol.z0_sq * spec.b()[j].powi(-4) * f;
            assert!((t * t - expect).abs() <= 1e-12 * expect.max(r_sq));
        }
        assert!(sol.energy_residual <= CONSTRAINT_TOLERANCE);
        assert!(sol.ellipsoid_residual <= CONSTRAINT_TOLERANCE);
        let u_sq = sol.z0_sq * sol.z0_sq * sol.j0 / (2.0 * spec.noise().powi(4));
        assert!((sol.u_eps * sol.u_eps - u_sq).abs() <= 1e-12 * u_sq);
        let direct = (quartic(spec, &th.iter().map(|t| t * t).collect::<Vec<_>>()) / 2.0).sqrt()
            / spec.noise().powi(2);
        assert!((direct - sol.u_eps).abs() <= 1e-10 * sol.u_eps);
        if sol.ellipsoid_active {
            let m = sol.efficient_dim;
            assert!(sol.lagrange_a * spec.a()[m - 1].powi(2) <= 1.0);
            if m < spec.truncation() {
                assert!(sol.lagrange_a * spec.a()[m].powi(2) > 1.0);
            }
        }
        let w2: f64 = sol.filters.iter().map(|w| w * w).sum();
        assert!((w2 - 0.5).abs() < 1e-10);
        assert!(sol.filters.iter().all(|w| *w >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solution_invariants(s in 0.5f64..2.5, t in 0.0f64..2.0, frac in 0.02f64..0.9, eps in 1e-3f64..1.0) {
            let spec = mild(s, t.max(1e-9), eps, 400);
            let r = frac.sqrt();
            match solve_extremal(&spec, r) {
                Ok(sol) => check_invariants(&spec, &sol),
                Err(Error::TruncationTooSmall(_)) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn u_increases_with_radius(s in 0.5f64..2.0, t in 0.0f64..1.5, frac in 0.05f64..0.2) {
            let spec = mild(s, t.max(1e-9), 0.1, 400);
            let r = frac.sqrt();
            let u1 = solve_extremal_truncated(&spec, r).unwrap().u_eps;
            let u2 = solve_extremal_truncated(&spec, 2.0 * r).unwrap().u_eps;
            prop_assert!(u2 > u1);
        }

        #[test]
        fn feasible_samples_never_beat_optimum(seed in any::<u64>(), frac in 0.1f64..0.8) {
            use rand::{Rng, SeedableRng};
            let spec = explicit(vec![1.0, 1.5, 2.0, 3.0], vec![1.0, 0.8, 0.5, 0.3], 1.0);
            let r = frac.sqrt();
            let sol = solve_extremal(&spec, r).unwrap();
            prop_assert!(ellipsoid_energy(spec.a(), sol.theta_bar.as_slice()) <= 1.0 + 1e-12);
            prop_assert!(sol.theta_bar.norm_sq() >= r * r * (1.0 - 1e-12));
            let best = 2.0 * sol.u_eps * sol.u_eps;
            let class = SignalClass::new(spec.clone(), r).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..500 {
                let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let signal = Signal::new(theta).unwrap();
                if class.contains(&signal).unwrap() {
                    let x: Vec<f64> = signal.as_slice().iter().map(|t| t * t).collect();
                    prop_assert!(quartic(&spec, &x) >= best * (1.0 - 1e-12));
                }
            }
        }
    }
}
