//! Ground truth independent of the level engine: direct simulation of the
//! projected counting processes and closed-form laws.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::levels::{exp_sample, LevelParams, OffspringRates};
use crate::stats::{mean_with_se, variance_with_se, TestReport};
use crate::variants::MultitypeSpec;

/// Default event budget of one direct simulation.
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;

/// Per-individual rates of a linear birth-death chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BDRates {
    pub birth: f64,
    pub death: f64,
}

impl BDRates {
    pub fn new(birth: f64, death: f64) -> Result<Self> {
        if !(birth >= 0.0 && death >= 0.0 && birth.is_finite() && death.is_finite()) {
            return Err(Error::domain(format!("rates must be finite and >= 0 (got {birth}, {death})")));
        }
        Ok(Self { birth, death })
    }

    /// The counting process of the level model: birth `r a`, death `r a - b`.
    pub fn projected(p: &LevelParams) -> Self {
        Self { birth: p.projected_birth_rate(), death: p.projected_death_rate() }
    }
}

/// Poisson variate; zero for nonpositive means.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let x: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    x as u64
}

/// Endpoint at `t` of the linear birth-death chain started from `n0`.
pub fn gillespie_bd<R: Rng + ?Sized>(rates: BDRates, n0: u64, t: f64, rng: &mut R) -> Result<u64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0 (got {t})")));
    }
    let mut n = n0;
    let mut now = 0.0;
    let mut events = 0u64;
    while n > 0 {
        let nf = n as f64;
        let (up, down) = (rates.birth * nf, rates.death * nf);
        let total = up + down;
        if !(total > 0.0) {
            break;
        }
        now += exp_sample(total, rng);
        if now > t {
            break;
        }
        events += 1;
        if events > DEFAULT_EVENT_CAP {
            return Err(Error::Overflow { limit: DEFAULT_EVENT_CAP });
        }
        if rng.random::<f64>() * total < up {
            n += 1;
        } else {
            n -= 1;
        }
    }
    Ok(n)
}

pub type RateFn = Box<dyn Fn(&[u64]) -> f64 + Send + Sync>;

/// What a transition does to the count vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Shift(Vec<i64>),
    /// Every individual survives independently with this probability.
    Thin { survival: f64 },
}

pub struct Transition {
    pub rate: RateFn,
    pub effect: Effect,
}

impl Transition {
    pub fn new(rate: impl Fn(&[u64]) -> f64 + Send + Sync + 'static, effect: Effect) -> Self {
        Self { rate: Box::new(rate), effect }
    }
}

/// Direct simulation of a chain on count vectors given by `transitions`.
/// Exceeding `event_cap` events is an error, never a silent truncation.
pub fn gillespie_custom<R: Rng + ?Sized>(
    transitions: &[Transition],
    n0: &[u64],
    t: f64,
    event_cap: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0 (got {t})")));
    }
    let mut n = n0.to_vec();
    let mut now = 0.0;
    let mut events = 0u64;
    let mut rates = vec![0.0; transitions.len()];
    loop {
        let mut total = 0.0;
        for (slot, tr) in rates.iter_mut().zip(transitions) {
            let x = (tr.rate)(&n);
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::domain(format!("transition rate {x} at state {n:?}")));
            }
            *slot = x;
            total += x;
        }
        if !(total > 0.0) {
            return Ok(n);
        }
        now += exp_sample(total, rng);
        if now > t {
            return Ok(n);
        }
        events += 1;
        if events > event_cap {
            return Err(Error::Overflow { limit: event_cap });
        }
        let mut x = rng.random::<f64>() * total;
        let mut pick = rates.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (i, &w) in rates.iter().enumerate() {
            if x < w {
                pick = i;
                break;
            }
            x -= w;
        }
        match &transitions[pick].effect {
            Effect::Shift(d) => {
                for (c, &s) in n.iter_mut().zip(d) {
                    let v = *c as i64 + s;
                    if v < 0 {
                        return Err(Error::State(format!("transition {pick} drove a count negative")));
                    }
                    *c = v as u64;
                }
            }
            Effect::Thin { survival } => {
                for c in n.iter_mut() {
                    *c = (0..*c).filter(|_| rng.random::<f64>() < *survival).count() as u64;
                }
            }
        }
    }
}

/// Birth then death of a one-dimensional linear chain.
pub fn bd_transitions(rates: BDRates) -> Vec<Transition> {
    vec![
        Transition::new(move |n| rates.birth * n[0] as f64, Effect::Shift(vec![1])),
        Transition::new(move |n| rates.death * n[0] as f64, Effect::Shift(vec![-1])),
    ]
}

/// Counting process conditioned on nonextinction (`n` includes the
/// immortal particle): birth `r a (n + 1)`, death `(r a - b)(n - 1)`.
/// The immortal particle sits at level 0 and so gives birth at `2 r a`.
pub fn nonextinction_transitions(p: &LevelParams) -> Vec<Transition> {
    let (up, down) = (p.projected_birth_rate(), p.projected_death_rate());
    vec![
        Transition::new(move |n| up * (n[0] + 1) as f64, Effect::Shift(vec![1])),
        Transition::new(move |n| down * (n[0].saturating_sub(1)) as f64, Effect::Shift(vec![-1])),
    ]
}

/// `k` simultaneous births at rate `r a_k n`; deaths at `(r sum_k k a_k - b) n`.
pub fn multi_offspring_transitions(o: &OffspringRates, b: f64, r: f64) -> Vec<Transition> {
    let mut out: Vec<Transition> = (1..=o.max_k())
        .filter(|&k| o.get(k) > 0.0)
        .map(|k| {
            let rate = r * o.get(k);
            Transition::new(move |n| rate * n[0] as f64, Effect::Shift(vec![k as i64]))
        })
        .collect();
    let death = r * o.mean_offspring_rate() - b;
    out.push(Transition::new(move |n| death * n[0] as f64, Effect::Shift(vec![-1])));
    out
}

/// Type `z` produces type `j` at `r a(z, j) n_z`; type `z` dies at
/// `(r a(z) - b(z)) n_z`.
pub fn multitype_transitions(spec: &MultitypeSpec, r: f64) -> Vec<Transition> {
    let m = spec.types();
    let mut out = Vec::new();
    for z in 0..m {
        for j in 0..m {
            let rate = r * spec.birth[z][j];
            if rate > 0.0 {
                let mut d = vec![0; m];
                d[j] = 1;
                out.push(Transition::new(move |n| rate * n[z] as f64, Effect::Shift(d)));
            }
        }
        let death = r * spec.total_rate(z) - spec.death_b[z];
        let mut d = vec![0; m];
        d[z] = -1;
        out.push(Transition::new(move |n| death * n[z] as f64, Effect::Shift(d)));
    }
    out
}

/// Linear chain plus independent thinning events at rate `gamma`.
pub fn catastrophe_transitions(rates: BDRates, gamma: f64, survival: f64) -> Vec<Transition> {
    let mut out = bd_transitions(rates);
    out.push(Transition::new(move |_| gamma, Effect::Thin { survival }));
    out
}

/// `P(N(t) > 0)` from `n0` i.i.d. uniform levels: `1 - (1 - 1/D)^n0` with
/// `D = e^{-bt} + r a (1 - e^{-bt}) / b` (`1 + r a t` when `b = 0`).
pub fn survival_prob(n0: u64, t: f64, p: &LevelParams) -> Result<f64> {
    if n0 == 0 || !(t >= 0.0) {
        return Err(Error::domain(format!("survival needs n0 >= 1 and t >= 0 (got n0={n0}, t={t})")));
    }
    p.validate()?;
    let g = if p.b == 0.0 { t } else { -(-p.b * t).exp_m1() / p.b };
    let d = (-p.b * t).exp() + p.r * p.a * g;
    if !(d >= 1.0 - 1e-12) {
        return Err(Error::State(format!("survival denominator {d} below 1")));
    }
    let d = d.max(1.0);
    Ok(-(n0 as f64 * (-1.0 / d).ln_1p()).exp_m1())
}

/// Survival to `t` of a linear chain from one individual, in the textbook
/// form `1 - mu (e^{(lambda-mu)t} - 1) / (lambda e^{(lambda-mu)t} - mu)`.
pub fn classical_bd_survival(rates: BDRates, t: f64) -> f64 {
    let (l, m) = (rates.birth, rates.death);
    if l == m {
        return 1.0 / (1.0 + l * t);
    }
    let e = ((l - m) * t).exp();
    1.0 - m * (e - 1.0) / (l * e - m)
}

/// Survival probability and exponential rate of the limit of
/// `e^{-bt} N(t)` from one particle: both `b / (r a)`.
pub fn harris_params(p: &LevelParams) -> Result<(f64, f64)> {
    p.validate()?;
    if !(p.b > 0.0) || !(p.b < p.r * p.a) {
        return Err(Error::domain(format!(
            "the Harris limit needs 0 < b < r a (got a={}, b={}, r={})",
            p.a, p.b, p.r
        )));
    }
    let q = p.b / (p.r * p.a);
    Ok((q, q))
}

/// Mean and variance at `t` of the diffusion with generator
/// `a y f'' + b y f'` started at `y0`.
pub fn feller_moments(y0: f64, t: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(y0 >= 0.0) || !(t >= 0.0) || !(a >= 0.0) || !b.is_finite() {
        return Err(Error::domain("feller moments need y0 >= 0, t >= 0, a >= 0"));
    }
    let mean = y0 * (b * t).exp();
    let var = if b == 0.0 {
        2.0 * a * y0 * t
    } else {
        2.0 * a * y0 / b * (b * t).exp() * (b * t).exp_m1()
    };
    Ok((mean, var))
}

/// Mean measure `density x Lebesgue` on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    pub length: f64,
    pub density: f64,
}

impl Intensity {
    /// `int h dnu` by composite Simpson on 2000 panels.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        let n = 2000;
        let step = self.length / n as f64;
        let mut s = h(0.0) + h(self.length);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * h(i as f64 * step);
        }
        s * step / 3.0 * self.density
    }
}

/// Monte Carlo check of the Poisson Laplace functional
/// `E[e^{int f dxi}] = e^{int (e^f - 1) dnu}` and of
/// `Var(int g dxi) = int g^2 dnu`. Returns one report for each identity.
pub fn poisson_identities_check<R: Rng + ?Sized>(
    nu: Intensity,
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    reps: usize,
    rng: &mut R,
) -> Result<Vec<TestReport>> {
    if !(nu.length > 0.0 && nu.density >= 0.0) || reps < 2 {
        return Err(Error::domain("identity check needs a finite intensity and reps >= 2"));
    }
    let mut lap = Vec::with_capacity(reps);
    let mut lin = Vec::with_capacity(reps);
    for _ in 0..reps {
        let n = poisson_sample(nu.length * nu.density, rng);
        let (mut sf, mut sg) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.random::<f64>() * nu.length;
            sf += f(z);
            sg += g(z);
        }
        lap.push(sf.exp());
        lin.push(sg);
    }
    let target = nu.integrate(|z| f(z).exp_m1()).exp();
    let (m, se) = mean_with_se(&lap)?;
    let (v, vse) = variance_with_se(&lin)?;
    Ok(vec![
        TestReport::z_test("poisson_laplace_functional", m, se, target, reps),
        TestReport::z_test("poisson_variance", v, vse, nu.integrate(|z| g(z) * g(z)), reps),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::binomial_z_test;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(a: f64, b: f64, r: f64) -> LevelParams {
        LevelParams::new(a, b, r).unwrap()
    }

    #[test]
    fn survival_reference_value() {
        let s = survival_prob(1, 1.0, &params(1.0, -1.0, 1.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((s - 1.0 / (2.0 * e - 1.0)).abs() < 1e-15);
        assert!((s - 0.225399).abs() < 1e-6);
    }

    #[test]
    fn survival_edges_and_monotonicity() {
        let p = params(1.0, 0.3, 2.0);
        assert_eq!(survival_prob(3, 0.0, &p).unwrap(), 1.0);
        let mut prev = 1.0;
        for i in 1..50 {
            let s = survival_prob(2, i as f64 * 0.2, &p).unwrap();
            assert!(s < prev);
            prev = s;
        }
        assert!(survival_prob(3, 1.0, &p).unwrap() > survival_prob(2, 1.0, &p).unwrap());
        // critical limit
        let c = survival_prob(1, 2.0, &params(1.0, 0.0, 1.0)).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-15);
        assert!(survival_prob(0, 1.0, &p).is_err());
    }

    #[test]
    fn survival_matches_classical_form_on_random_draws() {
        let mut rng = stream(11, 0, 0);
        for _ in 0..200 {
            let a = 0.1 + 2.0 * rng.random::<f64>();
            let r = 0.5 + 3.0 * rng.random::<f64>();
            let mut b = -2.0 + (r * a + 2.0) * rng.random::<f64>();
            if b.abs() < 0.05 {
                b = 0.05;
            }
            let t = 0.1 + 3.0 * rng.random::<f64>();
            let p = params(a, b, r);
            let s = survival_prob(1, t, &p).unwrap();
            let c = classical_bd_survival(BDRates::projected(&p), t);
            assert!(((s - c) / c).abs() < 1e-12, "a={a} b={b} r={r} t={t}: {s} vs {c}");
        }
    }

    #[test]
    fn survival_matches_direct_simulation() {
        let p = params(1.0, -1.0, 1.0);
        let reps = 100_000;
        let alive = (0..reps)
            .filter(|&i| gillespie_bd(BDRates::projected(&p), 1, 1.0, &mut stream(12, i, 0)).unwrap() > 0)
            .count() as u64;
        let target = survival_prob(1, 1.0, &p).unwrap();
        assert!(binomial_z_test("bd_survival", alive, reps, target).pass);
    }

    #[test]
    fn bd_mean_growth() {
        let rates = BDRates::new(1.0, 0.5).unwrap();
        let reps = 100_000;
        let xs: Vec<f64> = (0..reps)
            .map(|i| gillespie_bd(rates, 5, 1.0, &mut stream(13, i, 0)).unwrap() as f64)
            .collect();
        let (m, se) = mean_with_se(&xs).unwrap();
        assert!(TestReport::z_test("bd_mean", m, se, 5.0 * 0.5f64.exp(), reps as usize).pass);
        assert_eq!(gillespie_bd(rates, 0, 1.0, &mut stream(13, 0, 0)).unwrap(), 0);
    }

    #[test]
    fn custom_reproduces_bd_bitwise() {
        let rates = BDRates::new(1.3, 0.7).unwrap();
        let table = bd_transitions(rates);
        for i in 0..500 {
            let x = gillespie_bd(rates, 4, 2.0, &mut stream(14, i, 0)).unwrap();
            let y = gillespie_custom(&table, &[4], 2.0, DEFAULT_EVENT_CAP, &mut stream(14, i, 0)).unwrap();
            assert_eq!(vec![x], y);
        }
    }

    #[test]
    fn conditioned_chain_never_dies_from_one() {
        let table = nonextinction_transitions(&params(1.0, -0.5, 1.0));
        for i in 0..1000 {
            let n = gillespie_custom(&table, &[1], 3.0, DEFAULT_EVENT_CAP, &mut stream(15, i, 0)).unwrap();
            assert!(n[0] >= 1);
        }
    }

    #[test]
    fn symmetric_two_type_total_is_lumpable() {
        let spec = MultitypeSpec { birth: vec![vec![0.5, 0.5], vec![0.5, 0.5]], death_b: vec![0.25, 0.25] };
        let table = multitype_transitions(&spec, 1.0);
        let rates = BDRates::new(1.0, 0.75).unwrap();
        let reps = 10_000;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..reps {
            let n = gillespie_custom(&table, &[2, 1], 1.0, DEFAULT_EVENT_CAP, &mut stream(16, i, 0)).unwrap();
            a.push(n[0] + n[1]);
            b.push(gillespie_bd(rates, 3, 1.0, &mut stream(16, i, 1)).unwrap());
        }
        let rep = crate::stats::chi_square_two_sample(
            "lumped",
            &crate::stats::histogram(&a),
            &crate::stats::histogram(&b),
        )
        .unwrap();
        assert!(rep.pass, "{rep}");
    }

    #[test]
    fn overflow_is_reported() {
        let table = bd_transitions(BDRates::new(5.0, 0.0).unwrap());
        let err = gillespie_custom(&table, &[10], 10.0, 1000, &mut stream(17, 0, 0)).unwrap_err();
        assert_eq!(err, Error::Overflow { limit: 1000 });
    }

    #[test]
    fn thinning_events_kill_independently() {
        // One individual under thinning events of rate 1 with survival 1/2
        // survives to t = 1 with probability e^{-1/2}.
        let table = vec![Transition::new(|_| 1.0, Effect::Thin { survival: 0.5 })];
        let reps = 100_000u64;
        let alive = (0..reps)
            .filter(|&i| gillespie_custom(&table, &[1], 1.0, 100, &mut stream(18, i, 0)).unwrap()[0] == 1)
            .count() as u64;
        assert!(binomial_z_test("thin", alive, reps, (-0.5f64).exp()).pass);
    }

    #[test]
    fn harris_and_feller_values() {
        assert_eq!(harris_params(&params(1.0, 0.5, 1.0)).unwrap(), (0.5, 0.5));
        assert!(harris_params(&params(1.0, 0.0, 1.0)).is_err());
        assert!(harris_params(&params(1.0, 1.0, 1.0)).is_err());
        assert!(harris_params(&params(1.0, 0.999, 1.0)).unwrap().0 > 0.99);
        assert_eq!(feller_moments(1.0, 1.0, 1.0, 0.0).unwrap(), (1.0, 2.0));
        assert_eq!(feller_moments(1.0, 1.0, 0.0, 0.3).unwrap().1, 0.0);
        assert_eq!(feller_moments(2.0, 0.0, 1.0, 0.3).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn feller_variance_solves_its_ode() {
        // v' = 2 b v + 2 a m, checked by a central difference
        let (a, b, y0) = (0.7, -0.4, 1.5);
        let h = 1e-5;
        for &t in &[0.3, 1.0, 2.5] {
            let (m, v) = feller_moments(y0, t, a, b).unwrap();
            let dv = (feller_moments(y0, t + h, a, b).unwrap().1 - feller_moments(y0, t - h, a, b).unwrap().1) / (2.0 * h);
            assert!((dv - (2.0 * b * v + 2.0 * a * m)).abs() < 1e-8);
        }
    }

    #[test]
    fn poisson_identities_hold() {
        let nu = Intensity { length: 1.0, density: 1.0 };
        let reps = 100_000;
        let out = poisson_identities_check(nu, |_| 0.5, |z| f64::from(u8::from(z < 0.3)), reps, &mut stream(19, 0, 0)).unwrap();
        assert!(out.iter().all(|r| r.pass), "{out:?}");
        assert!((nu.integrate(|_| 0.5f64.exp_m1()).exp() - 1.913_093).abs() < 1e-6);
        let zero = poisson_identities_check(nu, |_| 0.0, |_| 0.0, 100, &mut stream(19, 1, 0)).unwrap();
        assert_eq!(zero[0].statistic, 0.0);
    }

    proptest! {
        #[test]
        fn survival_is_a_probability(a in 0.01f64..3.0, r in 0.1f64..5.0, frac in -1.0f64..1.0, t in 0.0f64..10.0, n in 1u64..20) {
            let b = frac * r * a;
            let s = survival_prob(n, t, &params(a, b, r)).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
