//! Extra mechanisms on top of the base engine: conditioning, immigration,
//! several types, multiple offspring, catastrophes and random environments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{EngineConfig, LocationLaw, Model, PopulationState, Rates};
use crate::error::{Error, Result};
use crate::levels::{env_step_unchecked, exp_sample, uniform_between, OffspringRates};
use crate::rng::{ReplicateStreams, StreamRng, INIT_STREAM, NOISE_STREAM};

// ---------------------------------------------------------------- conditioning

/// Adds an immortal particle pinned at level 0.
///
/// The projected count `n` (immortal included) then has birth rate
/// `r a (n + 1)` and death rate `(r a - b)(n - 1)`.
pub fn condition_nonextinction(cfg: &EngineConfig) -> Result<EngineConfig> {
    let mut out = cfg.clone();
    out.variants.immortal = true;
    out.validate()?;
    Ok(out)
}

/// The model seen by levels shifted down by `b/a` given eventual extinction:
/// `a' = a`, `b' = -b`, `r' = r - b/a`.
pub fn condition_extinction(cfg: &EngineConfig) -> Result<EngineConfig> {
    let p = cfg
        .model
        .level_params()
        .ok_or_else(|| Error::Unsupported("conditioning on extinction needs constant a and b".into()))?;
    if !(p.a > 0.0) || !(p.b > 0.0) || !(p.b < p.r * p.a) {
        return Err(Error::domain(format!(
            "conditioning on extinction needs a > 0 and 0 < b < r a (got a={}, b={}, r={})",
            p.a, p.b, p.r
        )));
    }
    let mut out = cfg.clone();
    out.model.r = p.r - p.b / p.a;
    out.model.rates = Rates::Constant { a: p.a, b: -p.b };
    out.validate()?;
    Ok(out)
}

// ------------------------------------------------------------------ immigration

#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationSpec {
    /// Total mass `nu(E)` of the immigration measure.
    pub total_rate_density: f64,
    /// Normalized law of immigrant locations.
    pub location: LocationLaw,
}

impl ImmigrationSpec {
    pub(crate) fn validate(&self, errs: &mut Vec<String>) {
        if !(self.total_rate_density >= 0.0 && self.total_rate_density.is_finite()) {
            errs.push(format!(
                "immigration rate density must be finite and >= 0 (got {})",
                self.total_rate_density
            ));
        }
        self.location.validate(errs);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub level: f64,
    pub location: crate::engine::Location,
}

/// Immigrant arrivals on `(from, to]`: a Poisson process of rate
/// `r nu(E)`, levels uniform on `[0, r)`.
pub fn immigration_events<R: Rng + ?Sized>(
    spec: &ImmigrationSpec,
    r: f64,
    from: f64,
    to: f64,
    rng: &mut R,
) -> Vec<Arrival> {
    let rate = r * spec.total_rate_density;
    let mut out = Vec::new();
    if !(rate > 0.0) {
        return out;
    }
    let mut t = from;
    loop {
        t += exp_sample(rate, rng);
        if t > to {
            return out;
        }
        let level = uniform_between(0.0, r, rng);
        let location = spec.location.sample(rng);
        out.push(Arrival { time: t, level, location });
    }
}

// -------------------------------------------------------------------- multitype

#[derive(Debug, Clone, PartialEq)]
pub struct MultitypeSpec {
    /// `birth[z][j]`: rate at which a type-`z` particle produces type `j`.
    pub birth: Vec<Vec<f64>>,
    pub death_b: Vec<f64>,
}

impl MultitypeSpec {
    pub fn types(&self) -> usize {
        self.birth.len()
    }

    /// `a(z) = sum_j a(z, j)`.
    pub fn total_rate(&self, z: usize) -> f64 {
        self.birth[z].iter().sum()
    }

    /// Engine rates indexed by type.
    pub fn rates(&self) -> Rates {
        Rates::PerType {
            a: (0..self.types()).map(|z| self.total_rate(z)).collect(),
            b: self.death_b.clone(),
        }
    }

    /// A model whose rates come from this spec, starting from `weights`.
    pub fn model(&self, r: f64, weights: Vec<f64>) -> Model {
        Model {
            rates: self.rates(),
            initial_location: LocationLaw::Types(weights),
            ..Model::scalar(0.0, 0.0, r)
        }
    }

    /// The full engine configuration: per-type rates, the type-switching
    /// birth rule, and initial types drawn from `weights`.
    pub fn config(&self, r: f64, weights: Vec<f64>) -> Result<EngineConfig> {
        let mut cfg = EngineConfig::new(self.model(r, weights));
        cfg.variants.multitype = Some(self.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    fn irreducible(&self) -> bool {
        let m = self.types();
        (0..m).all(|start| {
            let mut seen = vec![false; m];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(z) = stack.pop() {
                for j in 0..m {
                    if !seen[j] && self.birth[z][j] > 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.iter().all(|&s| s)
        })
    }

    pub(crate) fn validate(&self, r: f64, errs: &mut Vec<String>) {
        let m = self.types();
        if m == 0 || self.birth.iter().any(|row| row.len() != m) || self.death_b.len() != m {
            errs.push("multitype birth matrix must be square and match the length of b".into());
            return;
        }
        if self.birth.iter().flatten().any(|&x| !(x >= 0.0 && x.is_finite())) {
            errs.push("multitype birth rates must be finite and >= 0".into());
            return;
        }
        if !self.irreducible() {
            errs.push("the type chain induced by the birth matrix must be irreducible".into());
        }
        for z in 0..m {
            let a = self.total_rate(z);
            if r * a - self.death_b[z] < 0.0 {
                errs.push(format!("type {z}: r*a - b must be >= 0 (r={r}, a={a}, b={})", self.death_b[z]));
            }
        }
    }
}

/// Result of a multitype birth: the parent keeps its type, and the two
/// levels `u` and `v` are assigned to parent and child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultitypeBirth {
    pub parent_level: f64,
    pub child_type: usize,
    pub child_level: f64,
    pub swapped: bool,
}

/// Draws the child type with probability `a(z, j) / a(z)` and a new level
/// uniform on `[u, r)`; with probability one half the child takes the old
/// level and the parent the new one.
pub fn multitype_birth<R: Rng + ?Sized>(
    parent_type: usize,
    u: f64,
    r: f64,
    spec: &MultitypeSpec,
    rng: &mut R,
) -> MultitypeBirth {
    let row = &spec.birth[parent_type];
    let total: f64 = row.iter().sum();
    let mut x = rng.random::<f64>() * total;
    let mut child_type = row.iter().rposition(|&w| w > 0.0).unwrap_or(parent_type);
    for (j, &w) in row.iter().enumerate() {
        if x < w {
            child_type = j;
            break;
        }
        x -= w;
    }
    let v = uniform_between(u, r, rng);
    let swapped = rng.random::<bool>();
    if swapped {
        MultitypeBirth { parent_level: v, child_type, child_level: u, swapped }
    } else {
        MultitypeBirth { parent_level: u, child_type, child_level: v, swapped }
    }
}

// ------------------------------------------------------------ multiple births

/// One superposed proposal for a particle at level `u`: picks `k` with
/// probability proportional to `(k+1) a_k` and accepts with probability
/// `((r - u) / r)^k`. On acceptance returns `k` child levels, i.i.d. uniform
/// on `[u, r)`.
pub fn multi_offspring_birth<R: Rng + ?Sized>(
    u: f64,
    r: f64,
    o: &OffspringRates,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if !(u < r) {
        return None;
    }
    let weights = |k: usize| (k as f64 + 1.0) * o.get(k);
    let total: f64 = (1..=o.max_k()).map(weights).sum();
    let mut x = rng.random::<f64>() * total;
    let mut k = o.max_k();
    for j in 1..=o.max_k() {
        let w = weights(j);
        if x < w {
            k = j;
            break;
        }
        x -= w;
    }
    let accept = ((r - u) / r).powi(k as i32);
    if rng.random::<f64>() >= accept {
        return None;
    }
    Some((0..k).map(|_| uniform_between(u, r, rng)).collect())
}

// ---------------------------------------------------------------- catastrophes

/// Level multiplier of one catastrophe mark.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoMap {
    Constant(f64),
    /// Indexed by particle type.
    PerType(Vec<f64>),
}

impl RhoMap {
    pub fn at(&self, loc: &crate::engine::Location) -> f64 {
        match self {
            RhoMap::Constant(x) => *x,
            RhoMap::PerType(v) => v[loc.type_index().unwrap_or(0)],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            RhoMap::Constant(x) => std::slice::from_ref(x),
            RhoMap::PerType(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatastropheSpec {
    pub event_rate: f64,
    /// Finite mark law as `(probability, multiplier)` pairs.
    pub marks: Vec<(f64, RhoMap)>,
}

impl CatastropheSpec {
    pub fn constant(event_rate: f64, rho: f64) -> Self {
        Self {
            event_rate,
            marks: vec![(1.0, RhoMap::Constant(rho))],
        }
    }

    pub(crate) fn validate(&self, errs: &mut Vec<String>) {
        if !(self.event_rate >= 0.0 && self.event_rate.is_finite()) {
            errs.push(format!("catastrophe rate must be finite and >= 0 (got {})", self.event_rate));
        }
        if self.marks.is_empty() {
            errs.push("catastrophe mark law is empty".into());
        }
        let total: f64 = self.marks.iter().map(|m| m.0).sum();
        if self.marks.iter().any(|m| !(m.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            errs.push("catastrophe mark probabilities must be >= 0 and sum to 1".into());
        }
        if self
            .marks
            .iter()
            .flat_map(|m| m.1.values())
            .any(|&rho| !(rho >= 1.0 && rho.is_finite()))
        {
            errs.push("catastrophe multipliers rho must be finite and >= 1".into());
        }
    }

    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> &RhoMap {
        let mut x = rng.random::<f64>();
        for (p, rho) in &self.marks {
            if x < *p {
                return rho;
            }
            x -= p;
        }
        &self.marks[self.marks.len() - 1].1
    }
}

/// Applies one catastrophe at the current time of `state`, with the mark
/// drawn from the replicate's global stream. Returns the number of particles
/// killed.
pub fn catastrophe_event(state: &mut PopulationState, cfg: &EngineConfig, spec: &CatastropheSpec) -> Result<usize> {
    spec_errors(|e| spec.validate(e))?;
    let rho = spec.sample_mark(state.global_rng()).clone();
    Ok(state.apply_catastrophe(cfg, &rho))
}

fn spec_errors(f: impl FnOnce(&mut Vec<String>)) -> Result<()> {
    let mut errs = Vec::new();
    f(&mut errs);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

// ----------------------------------------------------------------- environment

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    /// Generator of the environment chain.
    pub q: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Time speedup of the chain; the drift uses `sqrt(speedup) b(l)`.
    pub speedup: f64,
}

/// Quantities derived from an [`EnvironmentSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentDerived {
    pub pi: Vec<f64>,
    /// Solution of `Q h0 = b` normalized by `sum pi h0 = 0`.
    pub h0: Vec<f64>,
    pub abar: f64,
    pub cbar: f64,
}

impl EnvironmentSpec {
    /// Symmetric two-state chain flipping at rate `q`, with `b = (beta, -beta)`.
    pub fn two_state(q: f64, a: f64, beta: f64, speedup: f64) -> Self {
        Self {
            q: vec![vec![-q, q], vec![q, -q]],
            a: vec![a, a],
            b: vec![beta, -beta],
            speedup,
        }
    }

    pub fn states(&self) -> usize {
        self.q.len()
    }

    fn shape_errors(&self, errs: &mut Vec<String>) -> bool {
        let m = self.states();
        if m == 0 || self.q.iter().any(|row| row.len() != m) || self.a.len() != m || self.b.len() != m {
            errs.push("environment generator must be square and match a and b".into());
            return false;
        }
        for (l, row) in self.q.iter().enumerate() {
            let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != l).map(|(_, &x)| x).sum();
            if row.iter().enumerate().any(|(j, &x)| j != l && !(x >= 0.0)) || (row[l] + off).abs() > 1e-9 * off.max(1.0) {
                errs.push(format!("environment generator row {l} must have nonnegative off-diagonal entries summing to -q[l][l]"));
                return false;
            }
        }
        true
    }

    /// Stationary law, `h0`, and the averaged coefficients.
    pub fn derived(&self) -> Result<EnvironmentDerived> {
        let mut errs = Vec::new();
        if !self.shape_errors(&mut errs) {
            return Err(Error::Config(errs));
        }
        let m = self.states();
        // pi Q = 0 with sum pi = 1: transpose and replace the last equation.
        let mut mat: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| self.q[j][i]).collect()).collect();
        let mut rhs = vec![0.0; m];
        mat[m - 1] = vec![1.0; m];
        rhs[m - 1] = 1.0;
        let pi = solve_linear(mat, rhs).ok_or_else(|| Error::config("environment chain must be irreducible"))?;
        let drift: f64 = pi.iter().zip(&self.b).map(|(p, b)| p * b).sum();
        if drift.abs() > 1e-12 {
            return Err(Error::config(format!(
                "environment needs sum_l pi(l) b(l) = 0 (got {drift})"
            )));
        }
        // Q h = b is singular along constants; pin sum pi h = 0 in place of
        // one (redundant) equation.
        let mut mat = self.q.clone();
        let mut rhs = self.b.clone();
        mat[m - 1] = pi.clone();
        rhs[m - 1] = 0.0;
        let h0 = solve_linear(mat, rhs).ok_or_else(|| Error::config("environment generator is degenerate"))?;
        let abar = pi.iter().zip(&self.a).map(|(p, a)| p * a).sum();
        let cbar = -pi.iter().zip(&h0).zip(&self.b).map(|((p, h), b)| p * h * b).sum::<f64>();
        Ok(EnvironmentDerived { pi, h0, abar, cbar })
    }

    pub(crate) fn validate(&self, r: f64, errs: &mut Vec<String>) {
        if !self.shape_errors(errs) {
            return;
        }
        if !(self.speedup > 0.0 && self.speedup.is_finite()) {
            errs.push("environment speedup must be finite and > 0".into());
        }
        match self.derived() {
            Ok(d) if d.cbar < -1e-12 => errs.push(format!("environment gives negative cbar ({})", d.cbar)),
            Ok(_) => {}
            Err(Error::Config(mut e)) => errs.append(&mut e),
            Err(e) => errs.push(e.to_string()),
        }
        let s = self.speedup.max(0.0).sqrt();
        for l in 0..self.states() {
            if !(self.a[l] >= 0.0) || r * self.a[l] - s * self.b[l] < 0.0 {
                errs.push(format!("environment state {l}: need a >= 0 and r*a - sqrt(speedup)*b >= 0"));
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    Some(x)
}

/// The finite-speed environment model: base rates are replaced by the chain's.
pub fn environment_prelimit_config(spec: &EnvironmentSpec, base: &Model) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::new(Model {
        rates: Rates::Constant { a: spec.a[0], b: spec.b[0] },
        ..base.clone()
    });
    cfg.variants.environment = Some(spec.clone());
    cfg.validate()?;
    Ok(cfg)
}

/// Settings of the limit-mode run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRun {
    /// Initial mass density `y0` per unit level.
    pub y0: f64,
    pub window: f64,
    pub lambda_max: f64,
    pub step: f64,
}

/// One observation of a limit-mode run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitObservation {
    pub time: f64,
    pub count_below_window: usize,
    /// `count_below_window / window`.
    pub mass: f64,
}

/// Limit-mode environment: every level follows the shared-noise step
/// `u += (abar u^2 + cbar u) dt - sqrt(2 cbar) u dW` with one Gaussian
/// increment per step for all particles, births at rate
/// `2 abar (Lambda_max - u)` with child uniform on `[u, Lambda_max)`.
/// Particles at or above `Lambda_max` die.
pub fn environment_limit_run(
    derived: &EnvironmentDerived,
    run: &LimitRun,
    times: &[f64],
    streams: &ReplicateStreams,
) -> Result<Vec<LimitObservation>> {
    if !(run.y0 >= 0.0) || !(run.window > 0.0) || !(run.lambda_max >= run.window) || !(run.step > 0.0) {
        return Err(Error::domain("limit run needs y0 >= 0, 0 < K <= Lambda_max and step > 0"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::domain("observation times must be nonnegative and sorted"));
    }
    let lam = run.lambda_max;
    let mut init: StreamRng = streams.stream(INIT_STREAM);
    let mut noise: StreamRng = streams.stream(NOISE_STREAM);
    let n0 = crate::oracle::poisson_sample(run.y0 * lam, &mut init);
    let mut levels: Vec<f64> = (0..n0).map(|_| uniform_between(0.0, lam, &mut init)).collect();
    let sigma = (2.0 * derived.cbar.max(0.0)).sqrt();
    let abar = derived.abar;
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    let observe = |levels: &[f64], t: f64| {
        let c = levels.iter().filter(|&&u| u < run.window).count();
        LimitObservation { time: t, count_below_window: c, mass: c as f64 / run.window }
    };
    for &target in times {
        while now < target - 1e-12 {
            let dt = run.step.min(target - now);
            let z: f64 = StandardNormal.sample(&mut noise);
            let dw = z * dt.sqrt();
            let mut born = Vec::new();
            for u in levels.iter_mut() {
                let start = *u;
                // Births over the step, evaluated at the step's start level.
                let rate = 2.0 * abar * (lam - start);
                if rate > 0.0 {
                    let mut s = exp_sample(rate, &mut noise);
                    while s < dt {
                        born.push(uniform_between(start, lam, &mut noise));
                        s += exp_sample(rate, &mut noise);
                    }
                }
                *u = env_step_unchecked(start, dt, abar, derived.cbar, sigma, dw);
            }
            levels.retain(|&u| u < lam);
            levels.extend(born);
            now += dt;
        }
        out.push(observe(&levels, target));
    }
    Ok(out)
}
