//! Conditionally Poisson point configurations on `marks x [0, K]` and the
//! windowed estimator of their random intensity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::levels::uniform_between;
use crate::oracle::poisson_sample;

/// Points `(mark, level)` complete below `window`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub points: Vec<(f64, f64)>,
    pub window: f64,
}

/// Draws a mass `m` from `mass`, then `Poisson(m K)` points with levels
/// uniform on `[0, K)` and marks from `mark`.
pub fn sample_cox<R: Rng + ?Sized>(
    mut mass: impl FnMut(&mut R) -> f64,
    mut mark: impl FnMut(&mut R) -> f64,
    window: f64,
    rng: &mut R,
) -> Result<PointConfig> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::domain(format!("window must be finite and > 0 (got {window})")));
    }
    let m = mass(rng);
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::domain(format!("Cox mass must be finite and >= 0 (got {m})")));
    }
    let n = poisson_sample(m * window, rng);
    let points = (0..n)
        .map(|_| {
            let level = uniform_between(0.0, window, rng);
            (mark(rng), level)
        })
        .collect();
    Ok(PointConfig { points, window })
}

/// `(1/K) sum f(mark)` over the configuration.
pub fn estimate_cox(cfg: &PointConfig, f: impl Fn(f64) -> f64) -> f64 {
    cfg.points.iter().map(|&(m, _)| f(m)).sum::<f64>() / cfg.window
}

/// Bound on `P(int f^2 dXi > C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailBound {
    /// A probability known by other means.
    Given(f64),
    /// From `E[1 - exp(-(1/C) int_{[0,K']} f^2 dxi)]`, divided by
    /// `1 - exp(-K' e^{-1/C})`.
    Laplace { k_prime: f64, expectation: f64 },
}

/// Whether the points are Poisson given the intensity or i.i.d. uniform
/// below a finite ceiling `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Poisson,
    Uniform { r: f64 },
}

/// Chebyshev bound on `P(|estimate - truth| >= delta)` for a window `K`,
/// capped at one: `C / (K delta^2)` (times `(r - K)/r` for uniform levels)
/// plus the tail term.
pub fn estimator_bound(delta: f64, c: f64, window: f64, tail: TailBound, sampling: Sampling) -> Result<f64> {
    if !(delta > 0.0) || !(c > 0.0) || !(window > 0.0) {
        return Err(Error::domain("estimator bound needs delta, C and K all > 0"));
    }
    let mut first = c / (window * delta * delta);
    if let Sampling::Uniform { r } = sampling {
        if !(window <= r) {
            return Err(Error::domain(format!("uniform sampling needs K <= r (K={window}, r={r})")));
        }
        first *= (r - window) / r;
    }
    let tail = match tail {
        TailBound::Given(p) if (0.0..=1.0).contains(&p) => p,
        TailBound::Laplace { k_prime, expectation } if k_prime > 0.0 && (0.0..=1.0).contains(&expectation) => {
            expectation / -(-k_prime * (-1.0 / c).exp()).exp_m1()
        }
        _ => return Err(Error::domain("tail bound must be a probability with K' > 0")),
    };
    Ok((first + tail).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{chi_square_two_sample, mean_with_se, TestReport};
    use rand_distr::{Distribution, Exp1};

    #[test]
    fn bound_arithmetic() {
        let b = |k| estimator_bound(0.1, 4.0, k, TailBound::Given(0.0), Sampling::Poisson).unwrap();
        assert_eq!(b(400.0), 1.0);
        assert!((b(4000.0) - 0.1).abs() < 1e-15);
        let full = estimator_bound(0.1, 4.0, 50.0, TailBound::Given(0.02), Sampling::Uniform { r: 50.0 }).unwrap();
        assert_eq!(full, 0.02);
        let far = estimator_bound(0.1, 4.0, 1e15, TailBound::Given(0.3), Sampling::Poisson).unwrap();
        assert!((far - 0.3).abs() < 1e-9);
        assert!(estimator_bound(0.1, 4.0, 60.0, TailBound::Given(0.0), Sampling::Uniform { r: 50.0 }).is_err());
    }

    #[test]
    fn laplace_tail_uses_the_stated_denominator() {
        let v = estimator_bound(1.0, 1.0, 1e18, TailBound::Laplace { k_prime: 2.0, expectation: 0.1 }, Sampling::Poisson)
            .unwrap();
        let expect = 0.1 / (1.0 - (-2.0 * (-1.0f64).exp()).exp());
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_mass_gives_no_points() {
        let cfg = sample_cox(|_| 0.0, |_| 0.0, 5.0, &mut stream(1, 0, 0)).unwrap();
        assert!(cfg.points.is_empty());
        assert_eq!(estimate_cox(&cfg, |_| 1.0), 0.0);
    }

    #[test]
    fn exponential_mass_gives_geometric_counts() {
        let reps = 10_000u64;
        let mut counts = Vec::new();
        for i in 0..reps {
            let mut rng = stream(2, i, 0);
            let cfg = sample_cox(|r| Exp1.sample(r), |_| 0.0, 1.0, &mut rng).unwrap();
            counts.push(cfg.points.len() as u64);
        }
        // Expected histogram from P(k) = 2^{-(k+1)}, with the tail pooled
        // into the last bin.
        let observed = crate::stats::histogram(&counts);
        let mut expected: Vec<u64> = (0..observed.len())
            .map(|k| (reps as f64 * 0.5f64.powi(k as i32 + 1)).round() as u64)
            .collect();
        let deficit = reps - expected.iter().sum::<u64>();
        *expected.last_mut().unwrap() += deficit;
        let rep = chi_square_two_sample("geometric", &observed, &expected).unwrap();
        assert!(rep.pass, "{rep}");
    }

    #[test]
    fn estimator_is_unbiased_and_variance_scales_inversely_with_window() {
        let reps = 10_000u64;
        let run = |window: f64, salt: u64| -> Vec<f64> {
            (0..reps)
                .map(|i| {
                    let mut rng = stream(3 + salt, i, 0);
                    let cfg = sample_cox(|_| 2.0, |r| r.random::<f64>(), window, &mut rng).unwrap();
                    estimate_cox(&cfg, |m| m * m)
                })
                .collect()
        };
        let a = run(5.0, 0);
        let b = run(10.0, 1);
        let (m, se) = mean_with_se(&a).unwrap();
        // E[m U^2] = 2/3
        assert!(TestReport::z_test("cox_mean", m, se, 2.0 / 3.0, reps as usize).pass);
        let va = crate::stats::variance_with_se(&a).unwrap().0;
        let vb = crate::stats::variance_with_se(&b).unwrap().0;
        assert!((va / vb - 2.0).abs() < 0.2, "{va} {vb}");
    }
}
