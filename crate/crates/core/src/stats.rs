//! Goodness-of-fit tests and simple estimators for the verification suite.

use std::fmt;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default significance threshold for distributional tests.
pub const P_THRESHOLD: f64 = 0.001;

/// Two-sided normal tail probability of a 3-sigma deviation. A z-test passes
/// iff the estimate lies within 3 standard errors of its target.
pub fn three_sigma_threshold() -> f64 {
    two_sided_normal_p(3.0)
}

/// How a [`TestReport`] reaches its verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    /// `pass` iff `p_value > threshold`.
    PValue { p_value: f64 },
    /// `pass` iff `statistic <= threshold` (relative tolerances, exact
    /// mismatch counts).
    Tolerance,
}

/// Outcome of a named statistical comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub verdict: Verdict,
    pub threshold: f64,
    pub pass: bool,
    pub n: Vec<usize>,
}

impl TestReport {
    pub fn from_p_value(name: impl Into<String>, statistic: f64, p_value: f64, threshold: f64, n: Vec<usize>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic,
            verdict: Verdict::PValue { p_value },
            threshold,
            pass: p_value > threshold,
            n,
        }
    }

    pub fn from_tolerance(name: impl Into<String>, statistic: f64, tolerance: f64, n: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            statistic,
            verdict: Verdict::Tolerance,
            threshold: tolerance,
            pass: statistic <= tolerance,
            n,
        }
    }

    /// z-test of an estimate against a target: passes within 3 standard errors.
    pub fn z_test(name: impl Into<String>, estimate: f64, se: f64, target: f64, n: usize) -> Self {
        let z = if se > 0.0 {
            (estimate - target) / se
        } else if estimate == target {
            0.0
        } else {
            f64::INFINITY
        };
        Self::from_p_value(name, z, two_sided_normal_p(z.abs()), three_sigma_threshold(), vec![n])
    }

    /// Relative-error check `|estimate - target| / |target| <= tolerance`.
    pub fn relative(name: impl Into<String>, estimate: f64, target: f64, tolerance: f64, n: usize) -> Self {
        let rel = ((estimate - target) / target).abs();
        Self::from_tolerance(name, if rel.is_nan() { f64::INFINITY } else { rel }, tolerance, vec![n])
    }

    pub fn p_value(&self) -> Option<f64> {
        match self.verdict {
            Verdict::PValue { p_value } => Some(p_value),
            Verdict::Tolerance => None,
        }
    }

    pub const CSV_HEADER: &'static str = "name,statistic,p_value,threshold,pass,n";

    /// One CSV row. Tolerance checks leave `p_value` empty; sample sizes are
    /// joined with `;`.
    pub fn csv_row(&self) -> String {
        let p = self.p_value().map(fmt_f64).unwrap_or_default();
        let n: Vec<String> = self.n.iter().map(|x| x.to_string()).collect();
        format!(
            "{},{},{},{},{},{}",
            self.name,
            fmt_f64(self.statistic),
            p,
            fmt_f64(self.threshold),
            self.pass,
            n.join(";")
        )
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        match self.verdict {
            Verdict::PValue { p_value } => write!(
                f,
                "{status} {}: statistic={:.6} p={:.3e} (threshold {:.1e}) n={:?}",
                self.name, self.statistic, p_value, self.threshold, self.n
            ),
            Verdict::Tolerance => write!(
                f,
                "{status} {}: statistic={:.6} (tolerance {}) n={:?}",
                self.name, self.statistic, self.threshold, self.n
            ),
        }
    }
}

/// Shortest round-trip representation; 17 significant digits are enough to
/// reproduce any f64 bit-exactly and `{}` never prints more than needed.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - n.cdf(z.abs()))
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-theta form converges fast for small arguments.
        let mut cdf = 0.0;
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            cdf += term;
            if k >= 25 && term < 1e-12 {
                break;
            }
        }
        let cdf = cdf * (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if k >= 25 && term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_test(name: &str, sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if sample.is_empty() {
        return Err(Error::domain("ks_test needs a nonempty sample"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let d = d.clamp(0.0, 1.0);
    let p = kolmogorov_sf(n.sqrt() * d);
    Ok(TestReport::from_p_value(name, d, p, P_THRESHOLD, vec![sorted.len()]))
}

/// Histogram of nonnegative integer observations on bins `0..=max`.
pub fn histogram(values: &[u64]) -> Vec<u64> {
    let max = values.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; max + 1];
    for &v in values {
        h[v as usize] += 1;
    }
    h
}

/// Two-sample chi-square test on histograms over shared bins.
///
/// Adjacent bins are merged left to right until each merged bin has an
/// expected count of at least 5 in both samples; a short remainder is folded
/// into the last merged bin.
pub fn chi_square_two_sample(name: &str, counts_a: &[u64], counts_b: &[u64]) -> Result<TestReport> {
    let len = counts_a.len().max(counts_b.len());
    let get = |h: &[u64], i: usize| h.get(i).copied().unwrap_or(0) as f64;
    let total_a: f64 = counts_a.iter().map(|&x| x as f64).sum();
    let total_b: f64 = counts_b.iter().map(|&x| x as f64).sum();
    if total_a == 0.0 || total_b == 0.0 {
        return Err(Error::domain("chi_square_two_sample needs nonempty histograms"));
    }
    let total = total_a + total_b;
    let min_expected = |pooled: f64| pooled * total_a.min(total_b) / total;

    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0.0, 0.0);
    for i in 0..len {
        acc_a += get(counts_a, i);
        acc_b += get(counts_b, i);
        if min_expected(acc_a + acc_b) >= 5.0 {
            merged.push((acc_a, acc_b));
            acc_a = 0.0;
            acc_b = 0.0;
        }
    }
    if acc_a + acc_b > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc_a;
                last.1 += acc_b;
            }
            None => merged.push((acc_a, acc_b)),
        }
    }

    let n = vec![total_a as usize, total_b as usize];
    if merged.len() < 2 {
        return Ok(TestReport::from_p_value(name, 0.0, 1.0, P_THRESHOLD, n));
    }
    let ka = (total_b / total_a).sqrt();
    let kb = (total_a / total_b).sqrt();
    let stat: f64 = merged
        .iter()
        .map(|&(a, b)| {
            let d = ka * a - kb * b;
            d * d / (a + b)
        })
        .sum();
    let df = (merged.len() - 1) as f64;
    let chi = ChiSquared::new(df).map_err(|e| Error::domain(e.to_string()))?;
    let p = chi.sf(stat);
    Ok(TestReport::from_p_value(name, stat, p, P_THRESHOLD, n))
}

/// Sample mean and its standard error.
pub fn mean_with_se(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::domain("mean_with_se needs a nonempty sample"));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Unbiased sample variance and its large-sample standard error
/// `sqrt((m4 - s^4) / n)`.
pub fn variance_with_se(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.len() < 2 {
        return Err(Error::domain("variance_with_se needs at least two observations"));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let m2 = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = sample.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    Ok((var, ((m4 - m2 * m2).max(0.0) / n).sqrt()))
}

/// Normal-approximation interval for a binomial proportion, clipped to
/// `[0, 1]`.
pub fn binomial_ci(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::domain("binomial_ci needs trials > 0"));
    }
    if successes > trials {
        return Err(Error::domain("successes exceed trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let half = z * (p * (1.0 - p) / n).sqrt();
    Ok(((p - half).max(0.0), (p + half).min(1.0)))
}

/// Binomial standard error of a frequency around a hypothesized probability.
pub fn binomial_z_test(name: impl Into<String>, successes: u64, trials: u64, p0: f64) -> TestReport {
    let n = trials as f64;
    let freq = successes as f64 / n;
    let se = (p0 * (1.0 - p0) / n).sqrt();
    TestReport::z_test(name, freq, se, p0, trials as usize)
}
