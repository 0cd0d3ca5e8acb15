//! Level dynamics.
//!
//! Between events every level follows the Riccati flow `u' = a u^2 - b u`,
//! which has a closed form and may blow up in finite time. A particle with
//! level `u < r` gives birth at rate `2a(r - u)` to a child whose level is
//! uniform on `[u, r)`, and dies when its level reaches the ceiling `r`.
//!
//! The variants change the drift: several offspring per birth event
//! ([`multi_offspring_drift`]), exponentially distributed levels
//! ([`exp_mode_drift`]) and a random environment averaged into a common-noise
//! SDE ([`env_level_step`]).

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// A level that may have escaped to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Finite(f64),
    Infinite,
}

impl Level {
    pub fn finite(self) -> Option<f64> {
        match self {
            Level::Finite(u) => Some(u),
            Level::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Level::Infinite)
    }

    /// Strict comparison against a finite threshold; infinity is above
    /// everything.
    pub fn below(self, threshold: f64) -> bool {
        match self {
            Level::Finite(u) => u < threshold,
            Level::Infinite => false,
        }
    }
}

/// Coefficients of the quadratic level drift and the ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams {
    /// Quadratic coefficient, `>= 0`.
    pub a: f64,
    /// Linear coefficient (the Malthusian growth rate of the projection).
    pub b: f64,
    /// Level ceiling, `> 0`.
    pub r: f64,
}

impl LevelParams {
    pub fn new(a: f64, b: f64, r: f64) -> Result<Self> {
        let p = Self { a, b, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.a >= 0.0 && self.a.is_finite()) {
            errs.push(format!("a must be finite and >= 0 (got {})", self.a));
        }
        if !self.b.is_finite() {
            errs.push(format!("b must be finite (got {})", self.b));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            errs.push(format!("r must be finite and > 0 (got {})", self.r));
        }
        if errs.is_empty() && self.r * self.a - self.b < 0.0 {
            errs.push(format!(
                "r*a - b must be >= 0 so the projected death rate is nonnegative (r={}, a={}, b={})",
                self.r, self.a, self.b
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Per-individual birth rate of the projected birth-death process.
    pub fn projected_birth_rate(&self) -> f64 {
        self.r * self.a
    }

    /// Per-individual death rate of the projected birth-death process.
    pub fn projected_death_rate(&self) -> f64 {
        self.r * self.a - self.b
    }
}

/// `(1 - e^{-b t}) / b`, continuous through `b = 0`.
fn growth_factor(b: f64, t: f64) -> f64 {
    if b == 0.0 {
        t
    } else {
        -(-b * t).exp_m1() / b
    }
}

/// Exact solution of `u' = a u^2 - b u` after `dt`, or [`Level::Infinite`]
/// if the solution blows up at or before `dt`.
pub fn level_flow(u0: f64, dt: f64, p: &LevelParams) -> Result<Level> {
    if !(u0 >= 0.0) || !(dt >= 0.0) {
        return Err(Error::domain(format!(
            "level_flow needs u0 >= 0 and dt >= 0 (got u0={u0}, dt={dt})"
        )));
    }
    Ok(flow_unchecked(u0, dt, p.a, p.b))
}

pub(crate) fn flow_unchecked(u0: f64, dt: f64, a: f64, b: f64) -> Level {
    if u0 == 0.0 || dt == 0.0 {
        return Level::Finite(u0);
    }
    if a == 0.0 {
        let u = u0 * (-b * dt).exp();
        return if u.is_finite() {
            Level::Finite(u)
        } else {
            Level::Infinite
        };
    }
    let denom = 1.0 - a * u0 * growth_factor(b, dt);
    if !(denom > 0.0) {
        return Level::Infinite;
    }
    let u = u0 * (-b * dt).exp() / denom;
    if u.is_finite() {
        Level::Finite(u)
    } else {
        Level::Infinite
    }
}

/// Smallest `t >= 0` at which the flow from `u0` reaches `target`; `None`
/// if it never does. Targets at or below `u0` return `Some(0.0)`.
pub fn level_hit_time(u0: f64, target: f64, p: &LevelParams) -> Result<Option<f64>> {
    if !(u0 >= 0.0) || !(target > 0.0) {
        return Err(Error::domain(format!(
            "level_hit_time needs u0 >= 0 and target > 0 (got u0={u0}, target={target})"
        )));
    }
    if !(p.a >= 0.0) || !p.b.is_finite() {
        return Err(Error::domain("invalid level parameters"));
    }
    Ok(hit_time_unchecked(u0, target, p.a, p.b))
}

pub(crate) fn hit_time_unchecked(u0: f64, target: f64, a: f64, b: f64) -> Option<f64> {
    if target <= u0 {
        return Some(0.0);
    }
    if u0 == 0.0 {
        return None;
    }
    if a == 0.0 {
        return if b < 0.0 {
            Some((target / u0).ln() / -b)
        } else {
            None
        };
    }
    if b > 0.0 && u0 * a <= b {
        // At or below the repelling fixed point b/a: the flow never rises.
        return None;
    }
    if b == 0.0 {
        return Some((1.0 / u0 - 1.0 / target) / a);
    }
    // e^{-bt} - 1 = b (target - u0) / (u0 (b - a target))
    let y = b * (target - u0) / (u0 * (b - a * target));
    if !(y > -1.0) {
        return None;
    }
    Some(-y.ln_1p() / b)
}

/// The level at time `t` whose flow blows up exactly at `horizon`; below it a
/// particle has descendants alive at `horizon` in the infinite-ceiling model.
pub fn ancestor_barrier(horizon: f64, t: f64, p: &LevelParams) -> Result<Level> {
    if !(t >= 0.0) || !(t < horizon) {
        return Err(Error::domain(format!(
            "ancestor_barrier needs 0 <= t < T (got t={t}, T={horizon})"
        )));
    }
    if p.a == 0.0 {
        return Ok(Level::Infinite);
    }
    let u = 1.0 / (p.a * growth_factor(p.b, horizon - t));
    Ok(if u.is_finite() {
        Level::Finite(u)
    } else {
        Level::Infinite
    })
}

/// The level whose flow reaches `target` exactly after `dt`: the finite-ceiling
/// counterpart of [`ancestor_barrier`] (it converges to it as `target -> inf`).
pub fn level_preimage(target: f64, dt: f64, p: &LevelParams) -> Result<f64> {
    if !(target > 0.0) || !(dt >= 0.0) {
        return Err(Error::domain(format!(
            "level_preimage needs target > 0 and dt >= 0 (got target={target}, dt={dt})"
        )));
    }
    Ok(target / ((-p.b * dt).exp() + target * p.a * growth_factor(p.b, dt)))
}

pub(crate) fn uniform_between<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let v = lo + (hi - lo) * rng.random::<f64>();
    if v < hi {
        v
    } else {
        hi.next_down().max(lo)
    }
}

pub(crate) fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// First birth of a particle whose level follows [`level_flow`] from `u0`.
///
/// Proposals arrive at the constant rate `2 a r` and a proposal at level `u`
/// is accepted with probability `(r - u) / r`. Returns the delay and the
/// child level (uniform on `[U(delay), r)`), or `None` when the parent
/// reaches the ceiling first.
pub fn next_birth<R: Rng + ?Sized>(
    u0: f64,
    p: &LevelParams,
    rng: &mut R,
) -> Result<Option<(f64, f64)>> {
    if !(u0 >= 0.0) || !(u0 < p.r) {
        return Err(Error::domain(format!(
            "next_birth needs 0 <= u0 < r (got u0={u0}, r={})",
            p.r
        )));
    }
    let horizon = hit_time_unchecked(u0, p.r, p.a, p.b).unwrap_or(f64::INFINITY);
    Ok(next_birth_before(u0, p, horizon, rng))
}

pub(crate) fn next_birth_before<R: Rng + ?Sized>(
    u0: f64,
    p: &LevelParams,
    horizon: f64,
    rng: &mut R,
) -> Option<(f64, f64)> {
    if p.a == 0.0 {
        return None;
    }
    let bound = 2.0 * p.a * p.r;
    let mut t = 0.0;
    loop {
        t += exp_sample(bound, rng);
        if t >= horizon {
            return None;
        }
        let u = match flow_unchecked(u0, t, p.a, p.b) {
            Level::Finite(u) if u < p.r => u,
            _ => return None,
        };
        if rng.random::<f64>() * p.r < p.r - u {
            return Some((t, uniform_between(u, p.r, rng)));
        }
    }
}

/// Birth rates for several simultaneous offspring: entry `k - 1` holds `a_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringRates {
    rates: Vec<f64>,
}

impl OffspringRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        let mut errs = Vec::new();
        if rates.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            errs.push("offspring rates must be finite and >= 0".to_string());
        }
        if !rates.iter().any(|&x| x > 0.0) {
            errs.push("at least one offspring rate must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(Self { rates })
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Checks that the projected death rate `r sum_k k a_k - b` is nonnegative.
    pub fn validate_with(&self, b: f64, r: f64) -> Result<()> {
        let death = r * self.mean_offspring_rate() - b;
        if death < 0.0 {
            return Err(Error::config(format!(
                "r * sum_k k a_k - b must be >= 0 (got {death})"
            )));
        }
        Ok(())
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn max_k(&self) -> usize {
        self.rates.len()
    }

    /// `a_k`, zero beyond the configured range.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.rates.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    /// `sum_k k a_k`.
    pub fn mean_offspring_rate(&self) -> f64 {
        self.rates
            .iter()
            .enumerate()
            .map(|(i, &a)| (i + 1) as f64 * a)
            .sum()
    }

    /// The single-birth rate when no multiple births are configured.
    pub fn as_single(&self) -> Option<f64> {
        if self.rates.iter().skip(1).all(|&x| x == 0.0) {
            Some(self.get(1))
        } else {
            None
        }
    }

    /// Rate of a `k`-offspring event at level `u`:
    /// `(k + 1) a_k (r - u)^k r^{-(k-1)}`.
    pub fn event_rate(&self, k: usize, u: f64, r: f64) -> f64 {
        let a = self.get(k);
        if a == 0.0 {
            return 0.0;
        }
        (k + 1) as f64 * a * (r - u).powi(k as i32) / r.powi(k as i32 - 1)
    }

    /// Dominating constant for [`OffspringRates::event_rate`] summed over k.
    pub fn rate_bound(&self, r: f64) -> f64 {
        self.rates
            .iter()
            .enumerate()
            .map(|(i, &a)| (i + 2) as f64 * a * r)
            .sum()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c
}

/// Level drift with multiple births:
/// `sum_k r^2 a_k [(1 - u/r)^{k+1} - 1 + (k+1) u/r] - b u`.
///
/// The bracket is expanded binomially to avoid cancellation near `u = 0`;
/// the `k = 1` term is exactly `a_1 u^2`.
pub fn multi_offspring_drift(u: f64, o: &OffspringRates, b: f64, r: f64) -> Result<f64> {
    if !(u >= 0.0) || u > r {
        return Err(Error::domain(format!(
            "multi_offspring_drift needs 0 <= u <= r (got u={u}, r={r})"
        )));
    }
    Ok(multi_drift_unchecked(u, o, b, r))
}

pub(crate) fn multi_drift_unchecked(u: f64, o: &OffspringRates, b: f64, r: f64) -> f64 {
    let mut drift = o.get(1) * u * u;
    let s = u / r;
    for (i, &a) in o.rates().iter().enumerate().skip(1) {
        if a == 0.0 {
            continue;
        }
        let k = (i + 1) as u32;
        let mut bracket = 0.0;
        let mut pow = s * s;
        for l in 2..=k + 1 {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            bracket += sign * binomial(k + 1, l) * pow;
            pow *= s;
        }
        drift += r * r * a * bracket;
    }
    drift - b * u
}

/// Level drift `G_r` for exponentially distributed levels:
/// `e^{-z/r} G_r(z) = 2ar(r(1 - e^{-z/r}) - (r/2)(1 - e^{-2z/r})) - b r (1 - e^{-z/r})`.
pub fn exp_mode_drift(z: f64, p: &LevelParams) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::domain(format!("exp_mode_drift needs z >= 0 (got {z})")));
    }
    let r = p.r;
    let one_minus = -(-z / r).exp_m1();
    let one_minus_2 = -(-2.0 * z / r).exp_m1();
    let scaled = 2.0 * p.a * r * (r * one_minus - 0.5 * r * one_minus_2) - p.b * r * one_minus;
    Ok((z / r).exp() * scaled)
}

/// Maps an exponential level `z` (mean `r`) to the uniform chart
/// `u = r (1 - e^{-z/r})`, in which the exponential-mode drift becomes the
/// Riccati drift `a u^2 - b u`.
pub fn exp_to_uniform(z: f64, r: f64) -> f64 {
    -r * (-z / r).exp_m1()
}

/// Inverse of [`exp_to_uniform`]; `u >= r` maps to infinity.
pub fn uniform_to_exp(u: f64, r: f64) -> Level {
    if u >= r {
        Level::Infinite
    } else {
        Level::Finite(-r * (-u / r).ln_1p())
    }
}

/// One explicit Euler-Maruyama step of
/// `dU = (abar U^2 + cbar U) dt + sqrt(2 cbar) U dW`, clamped at 0.
///
/// `dw` is the Brownian increment shared by every level in the step.
pub fn env_level_step(u: f64, dt: f64, abar: f64, cbar: f64, dw: f64) -> Result<f64> {
    if !(cbar >= 0.0) {
        return Err(Error::domain(format!("cbar must be >= 0 (got {cbar})")));
    }
    if !(u >= 0.0) || !(dt > 0.0) {
        return Err(Error::domain(format!(
            "env_level_step needs u >= 0 and dt > 0 (got u={u}, dt={dt})"
        )));
    }
    Ok(env_step_unchecked(u, dt, abar, cbar, (2.0 * cbar).sqrt(), dw))
}

#[inline]
pub(crate) fn env_step_unchecked(u: f64, dt: f64, abar: f64, cbar: f64, sigma: f64, dw: f64) -> f64 {
    let next = u + (abar * u * u + cbar * u) * dt + sigma * u * dw;
    if next > 0.0 {
        next
    } else {
        0.0
    }
}

/// Fixed-step RK4 for autonomous scalar drifts that have no closed form.
#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    pub step: f64,
}

impl Default for Rk4 {
    fn default() -> Self {
        Self { step: 1e-3 }
    }
}

impl Rk4 {
    fn single<F: Fn(f64) -> f64>(drift: &F, u: f64, h: f64) -> f64 {
        let k1 = drift(u);
        let k2 = drift(u + 0.5 * h * k1);
        let k3 = drift(u + 0.5 * h * k2);
        let k4 = drift(u + h * k3);
        u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// Integrates from `u0` for `dt`.
    pub fn flow<F: Fn(f64) -> f64>(&self, drift: F, u0: f64, dt: f64) -> f64 {
        let mut u = u0;
        let mut left = dt;
        while left > 0.0 {
            let h = left.min(self.step);
            u = Self::single(&drift, u, h);
            left -= h;
        }
        u
    }

    /// First time within `horizon` at which the path from `u0` reaches
    /// `target`, located by bisection on the last step to 1e-12.
    pub fn hit_time<F: Fn(f64) -> f64>(
        &self,
        drift: F,
        u0: f64,
        target: f64,
        horizon: f64,
    ) -> Option<f64> {
        if u0 >= target {
            return Some(0.0);
        }
        let mut t = 0.0;
        let mut u = u0;
        while t < horizon {
            let h = (horizon - t).min(self.step);
            let next = Self::single(&drift, u, h);
            if next >= target {
                let (mut lo, mut hi) = (0.0, h);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if Self::single(&drift, u, mid) >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(t + hi);
            }
            if !next.is_finite() {
                return Some(t + h);
            }
            u = next;
            t += h;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::ks_test;

    fn p(a: f64, b: f64, r: f64) -> LevelParams {
        LevelParams { a, b, r }
    }

    /// Fine RK4 on `u' = a u^2 - b u`, returning `None` once the path exceeds
    /// 1e5 (blow-up).
    fn rk4_oracle(u0: f64, dt: f64, a: f64, b: f64) -> Option<f64> {
        let n = 2_000_000usize;
        let h = dt / n as f64;
        let f = |u: f64| a * u * u - b * u;
        let mut u = u0;
        for _ in 0..n {
            let k1 = f(u);
            let k2 = f(u + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2);
            let k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !(u < 1e5) {
                return None;
            }
        }
        Some(u)
    }

    #[test]
    fn flow_examples() {
        assert_eq!(level_flow(0.0, 5.0, &p(1.0, 2.0, 10.0)).unwrap(), Level::Finite(0.0));
        let half = level_flow(1.0, 2f64.ln(), &p(0.0, 1.0, 10.0)).unwrap().finite().unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        let two = level_flow(1.0, 0.5, &p(1.0, 0.0, 10.0)).unwrap().finite().unwrap();
        assert!((two - 2.0).abs() < 1e-14);
        assert!(level_flow(1.0, 1.0, &p(1.0, 0.0, 10.0)).unwrap().is_infinite());
    }

    #[test]
    fn flow_matches_rk4_oracle() {
        // Frozen from rk4_oracle: (u0=1, dt=0.5, a=1, b=0) -> 2.0.
        let oracle = rk4_oracle(1.0, 0.5, 1.0, 0.0).unwrap();
        assert!((oracle - 2.0).abs() < 1e-9);
        assert!(rk4_oracle(1.0, 1.0, 1.0, 0.0).is_none());
        for &(u0, dt, a, b) in &[(0.3, 0.7, 1.0, 0.5), (0.8, 0.4, 2.0, -1.0), (2.0, 1.0, 1.0, 3.0)] {
            let exact = level_flow(u0, dt, &p(a, b, 10.0)).unwrap().finite().unwrap();
            let approx = rk4_oracle(u0, dt, a, b).unwrap();
            assert!((exact - approx).abs() < 1e-9 * approx.max(1.0), "{exact} vs {approx}");
        }
    }

    #[test]
    fn flow_rejects_negative_inputs() {
        assert!(matches!(level_flow(-1.0, 1.0, &p(1.0, 0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(level_flow(1.0, -1.0, &p(1.0, 0.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn hit_time_examples() {
        let q = p(1.0, 0.5, 1.0);
        assert_eq!(level_hit_time(1.0, 1.0, &q).unwrap(), Some(0.0));
        assert_eq!(level_hit_time(0.9, 0.5, &q).unwrap(), Some(0.0));
        let t = level_hit_time(1.0, 2.0, &p(1.0, 0.0, 5.0)).unwrap().unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        assert_eq!(level_hit_time(0.4, 1.0, &p(1.0, 1.0, 1.0)).unwrap(), None);
        assert_eq!(level_hit_time(0.0, 1.0, &p(1.0, -1.0, 1.0)).unwrap(), None);
        assert_eq!(level_hit_time(0.5, 1.0, &p(0.0, 1.0, 1.0)).unwrap(), None);
        let t = level_hit_time(0.5, 1.0, &p(0.0, -1.0, 1.0)).unwrap().unwrap();
        assert!((t - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hit_time_bisection_oracle() {
        // Bisection on the RK4 oracle for (u0=1, target=2, a=1, b=0).
        let (mut lo, mut hi) = (0.0, 0.99);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if rk4_oracle(1.0, mid, 1.0, 0.0).map_or(true, |u| u >= 2.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((hi - 0.5).abs() < 1e-8);
    }

    #[test]
    fn hit_time_consistent_with_flow() {
        for &(u0, target, a, b) in &[
            (0.6, 1.0, 1.0, 0.5),
            (0.9, 1.0, 1.0, 0.5),
            (0.1, 3.0, 2.0, -1.5),
            (0.01, 1.0, 1.0, 1e-9),
            (0.3, 7.0, 0.5, 0.0),
        ] {
            let q = p(a, b, target);
            let t = level_hit_time(u0, target, &q).unwrap().unwrap();
            let u = level_flow(u0, t, &q).unwrap().finite().unwrap();
            assert!(((u - target) / target).abs() < 1e-12, "{u0} {target} {a} {b}: {u}");
        }
    }

    #[test]
    fn barrier_examples() {
        let q = p(1.0, 0.0, 1.0);
        assert_eq!(ancestor_barrier(1.0, 0.0, &q).unwrap(), Level::Finite(1.0));
        let near = ancestor_barrier(1.0, 1.0 - 1e-9, &q).unwrap().finite().unwrap();
        assert!(near > 1e8);
        let u = ancestor_barrier(2.0, 1.0, &p(1.0, 1.0, 1.0)).unwrap().finite().unwrap();
        assert!((u - 1.0 / (1.0 - (-1f64).exp())).abs() < 1e-14);
        assert!((u - 1.5820).abs() < 1e-4);
        assert!(ancestor_barrier(1.0, 1.0, &q).is_err());
        assert_eq!(ancestor_barrier(1.0, 0.0, &p(0.0, 1.0, 1.0)).unwrap(), Level::Infinite);
    }

    #[test]
    fn barrier_bisection_oracle() {
        // u0 whose RK4 blow-up time is T - t, found by bisection.
        let blow_up = |u0: f64, a: f64, b: f64, tau: f64| rk4_oracle(u0, tau, a, b).is_none();
        for &(horizon, t, a, b, expected) in &[(1.0, 0.0, 1.0, 0.0, 1.0), (2.0, 1.0, 1.0, 1.0, 1.5820)] {
            let tau: f64 = horizon - t;
            let (mut lo, mut hi) = (0.1, 10.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                // Blow-up strictly before tau means mid is above the barrier.
                if blow_up(mid, a, b, tau * 0.999_999) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((hi - expected).abs() < 1e-3, "{hi}");
        }
    }

    #[test]
    fn preimage_inverts_hit_time() {
        let q = p(1.0, 0.5, 1.0);
        let u = level_preimage(1.0, 0.7, &q).unwrap();
        let t = level_hit_time(u, 1.0, &q).unwrap().unwrap();
        assert!((t - 0.7).abs() < 1e-12);
        let far = level_preimage(1e12, 0.5, &p(1.0, 0.0, 1.0)).unwrap();
        assert!((far - 2.0).abs() < 1e-9);
    }

    #[test]
    fn no_births_without_quadratic_term() {
        let mut rng = stream(1, 0, 1);
        for _ in 0..100 {
            assert!(next_birth(0.3, &p(0.0, 1.0, 1.0), &mut rng).unwrap().is_none());
        }
        assert!(next_birth(1.0, &p(1.0, 0.0, 1.0), &mut rng).is_err());
    }

    #[test]
    fn expected_births_match_quadrature() {
        // Births on [0, 0.5] with a=1, b=0, r=1. From u0 = 0 the path is
        // frozen, so start at 0.2 where the intensity 2a(r - U(s)) varies.
        // Oracle: Simpson quadrature of the intensity along the flow.
        let q = p(1.0, 0.0, 1.0);
        let u0 = 0.2;
        let horizon = 0.5;
        let n = 10_000;
        let h = horizon / n as f64;
        let rate = |s: f64| 2.0 * q.a * (q.r - level_flow(u0, s, &q).unwrap().finite().unwrap());
        let mut integral = rate(0.0) + rate(horizon);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * rate(i as f64 * h);
        }
        integral *= h / 3.0;

        let mut rng = stream(2, 0, 1);
        let reps = 100_000;
        let mut counts = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut t = 0.0;
            let mut u = u0;
            let mut births = 0u32;
            loop {
                match next_birth(u, &q, &mut rng).unwrap() {
                    Some((d, _)) if t + d <= horizon => {
                        t += d;
                        u = level_flow(u, d, &q).unwrap().finite().unwrap();
                        births += 1;
                    }
                    _ => break,
                }
            }
            counts.push(f64::from(births));
        }
        let (mean, se) = crate::stats::mean_with_se(&counts).unwrap();
        assert!((mean - integral).abs() < 3.0 * se, "{mean} vs {integral} (se {se})");
    }

    #[test]
    fn child_level_uniform_above_parent() {
        // b = 0.3 a pins the parent at the fixed point z = 0.3.
        let mut rng = stream(3, 0, 1);
        let q = p(1.0, 0.3, 1.0);
        let mut rel = Vec::with_capacity(10_000);
        while rel.len() < 10_000 {
            let (d, child) = next_birth(0.3, &q, &mut rng).unwrap().unwrap();
            let z = level_flow(0.3, d, &q).unwrap().finite().unwrap();
            assert!(child >= z && child < 1.0);
            rel.push((child - z) / (1.0 - z));
        }
        let report = ks_test("child", &rel, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn thinning_exact_for_frozen_level() {
        // b = a u makes u a fixed point: delay ~ Exp(2a(r - u)).
        let (a, u, r) = (1.5, 0.4, 1.0);
        let q = p(a, a * u, r);
        let rate = 2.0 * a * (r - u);
        let mut rng = stream(4, 0, 1);
        let delays: Vec<f64> = (0..10_000)
            .map(|_| next_birth(u, &q, &mut rng).unwrap().unwrap().0)
            .collect();
        let report = ks_test("frozen", &delays, |x| 1.0 - (-rate * x).exp()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn multi_offspring_examples() {
        let single = OffspringRates::new(vec![1.0]).unwrap();
        assert_eq!(multi_offspring_drift(0.0, &single, 0.3, 1.0).unwrap(), 0.0);
        assert_eq!(multi_offspring_drift(0.5, &single, 0.0, 1.0).unwrap(), 0.25);
        let double = OffspringRates::new(vec![0.0, 1.0]).unwrap();
        // Brute force: r^2 [(1 - 0.5)^3 - 1 + 3 * 0.5]
        let brute = (1.0f64 - 0.5).powi(3) - 1.0 + 3.0 * 0.5;
        let d = multi_offspring_drift(0.5, &double, 0.0, 1.0).unwrap();
        assert!((d - brute).abs() < 1e-15);
        assert!((d - 0.625).abs() < 1e-15);
        assert!(multi_offspring_drift(1.5, &double, 0.0, 1.0).is_err());
        assert!(OffspringRates::new(vec![0.0, 0.0]).is_err());
        assert_eq!(single.as_single(), Some(1.0));
        assert_eq!(double.as_single(), None);
    }

    #[test]
    fn multi_offspring_drift_matches_direct_sum() {
        let o = OffspringRates::new(vec![0.3, 0.2, 0.1, 0.05]).unwrap();
        for &(u, b, r) in &[(0.1, 0.2, 1.0), (1.7, -0.5, 2.0), (2.9, 0.0, 3.0)] {
            let direct: f64 = (1..=4)
                .map(|k| {
                    let s = u / r;
                    r * r * o.get(k) * ((1.0 - s).powi(k as i32 + 1) - 1.0 + (k as f64 + 1.0) * s)
                })
                .sum::<f64>()
                - b * u;
            let d = multi_offspring_drift(u, &o, b, r).unwrap();
            assert!((d - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn exp_drift_examples() {
        assert_eq!(exp_mode_drift(0.0, &p(1.0, 0.5, 2.0)).unwrap(), 0.0);
        let big = exp_mode_drift(1.0, &p(1.0, 0.0, 1000.0)).unwrap();
        assert!((big - 1.0).abs() < 1e-3);
        let v = exp_mode_drift(1.0, &p(0.0, 1.0, 2.0)).unwrap();
        let direct = -(0.5f64).exp() * 2.0 * (1.0 - (-0.5f64).exp());
        assert!((v - direct).abs() < 1e-14);
        assert!((v + 1.2974).abs() < 1e-4);
    }

    #[test]
    fn exp_drift_converges_to_riccati() {
        let z = 0.7;
        for &(a, b) in &[(1.0, 0.0), (0.5, 0.3), (2.0, -1.0)] {
            let limit = a * z * z - b * z;
            let near = exp_mode_drift(z, &p(a, b, 1e5)).unwrap();
            assert!((near - limit).abs() < 1e-4, "{near} vs {limit}");
        }
    }

    #[test]
    fn exp_chart_carries_the_exponential_drift() {
        // d/dt of the chart-mapped Riccati flow equals G_r (central differences).
        let q = p(1.0, 0.5, 2.0);
        for &z in &[0.1, 0.8, 2.5, 5.0] {
            let u = exp_to_uniform(z, q.r);
            let h = 1e-6;
            let fwd = uniform_to_exp(level_flow(u, h, &q).unwrap().finite().unwrap(), q.r)
                .finite()
                .unwrap();
            let back = {
                // Backward flow: preimage of u after h.
                let u_back = level_preimage(u, h, &q).unwrap();
                uniform_to_exp(u_back, q.r).finite().unwrap()
            };
            let fd = (fwd - back) / (2.0 * h);
            let g = exp_mode_drift(z, &q).unwrap();
            assert!((fd - g).abs() < 1e-5 * g.abs().max(1.0), "z={z}: {fd} vs {g}");
        }
    }

    #[test]
    fn env_step_degenerate_cases() {
        let u = env_level_step(0.5, 0.01, 1.0, 0.0, 3.7).unwrap();
        assert_eq!(u, 0.5 + 0.25 * 0.01);
        assert_eq!(env_level_step(0.0, 0.01, 1.0, 0.3, -2.0).unwrap(), 0.0);
        assert_eq!(env_level_step(0.1, 0.01, 0.0, 1.0, -10.0).unwrap(), 0.0);
        assert!(env_level_step(0.1, 0.01, 1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn env_step_strong_convergence() {
        // Self-convergence on [0, 1] with abar=1, cbar=0.25: each coarse path
        // is compared with a dt/64 reference driven by the same Brownian
        // increments. Halving dt must shrink the mean error by 2 within a
        // factor 1.5.
        use rand_distr::StandardNormal;
        let (abar, cbar) = (1.0f64, 0.25f64);
        let sigma = (2.0 * cbar).sqrt();
        let u0 = 0.1;
        let coarse_steps = [32usize, 64];
        let paths = 2000;
        let mut rng = stream(5, 0, 1);
        let mut err = [0.0f64; 2];
        for _ in 0..paths {
            let fine = 64 * 64;
            let dt_f = 1.0 / fine as f64;
            let dws: Vec<f64> = (0..fine)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * dt_f.sqrt()
                })
                .collect();
            for (slot, &n) in coarse_steps.iter().enumerate() {
                let refine = 64;
                let dt_ref = 1.0 / (n * refine) as f64;
                let stride = fine / (n * refine);
                let mut reference = u0;
                for chunk in dws.chunks(stride) {
                    reference = env_step_unchecked(reference, dt_ref, abar, cbar, sigma, chunk.iter().sum());
                }
                let per = fine / n;
                let dt = 1.0 / n as f64;
                let mut u = u0;
                for chunk in dws.chunks(per) {
                    u = env_step_unchecked(u, dt, abar, cbar, sigma, chunk.iter().sum());
                }
                err[slot] += (u - reference).abs() / paths as f64;
            }
        }
        let ratio = err[0] / err[1];
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn rk4_hits_riccati_ceiling() {
        let q = p(1.0, 0.5, 1.0);
        let exact = level_hit_time(0.7, 1.0, &q).unwrap().unwrap();
        let rk = Rk4::default()
            .hit_time(|u| q.a * u * u - q.b * u, 0.7, 1.0, 100.0)
            .unwrap();
        assert!((rk - exact).abs() < 1e-10);
        let fine = Rk4 { step: 5e-4 }
            .hit_time(|u| q.a * u * u - q.b * u, 0.7, 1.0, 100.0)
            .unwrap();
        assert!((rk - fine).abs() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn semigroup(u in 0.0f64..1.0, s in 0.0f64..1.0, t in 0.0f64..1.0,
                         a in 0.0f64..1.0, b in -1.0f64..2.0) {
                let q = LevelParams { a, b, r: 10.0 };
                let whole = flow_unchecked(u, s + t, a, b);
                prop_assume!(!whole.is_infinite());
                let whole = whole.finite().unwrap();
                prop_assume!(whole < 1e6);
                let mid = level_flow(u, s, &q).unwrap().finite().unwrap();
                let two = level_flow(mid, t, &q).unwrap().finite().unwrap();
                prop_assert!((two - whole).abs() <= 1e-10 * whole.max(1e-300),
                    "{} vs {}", two, whole);
            }

            #[test]
            fn monotone_in_initial_level(u in 0.0f64..3.0, du in 0.0f64..1.0, t in 0.0f64..2.0,
                                         a in 0.0f64..2.0, b in -2.0f64..2.0) {
                let lo = flow_unchecked(u, t, a, b);
                let hi = flow_unchecked(u + du, t, a, b);
                if let (Level::Finite(x), Level::Finite(y)) = (lo, hi) {
                    prop_assert!(x <= y * (1.0 + 1e-14));
                }
                if lo.is_infinite() {
                    prop_assert!(hi.is_infinite());
                }
            }

            #[test]
            fn barrier_separates_blow_up(horizon in 0.2f64..3.0, frac in 0.0f64..0.9,
                                         a in 0.1f64..2.0, b in -2.0f64..2.0) {
                let t = horizon * frac;
                let q = LevelParams { a, b, r: 1.0 };
                let u = ancestor_barrier(horizon, t, &q).unwrap().finite().unwrap();
                let eps = 1e-6 * u;
                prop_assert!(flow_unchecked(u + eps, horizon - t, a, b).is_infinite());
                prop_assert!(!flow_unchecked(u - eps, (horizon - t) * (1.0 - 1e-9), a, b).is_infinite());
            }

            #[test]
            fn single_offspring_drift_is_riccati(u in 0.0f64..1.0, a in 0.0f64..3.0, b in -2.0f64..2.0) {
                let o = OffspringRates::new(vec![a.max(1e-9)]).unwrap();
                let a = o.get(1);
                let d = multi_offspring_drift(u, &o, b, 1.0).unwrap();
                prop_assert_eq!(d.to_bits(), (a * u * u - b * u).to_bits());
            }
        }
    }
}
