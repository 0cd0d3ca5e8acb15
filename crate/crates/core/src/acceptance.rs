//! The acceptance suite: fourteen end-to-end checks of the simulator
//! against direct simulation, closed forms and exact identities.

use std::time::Instant;

use rand::Rng;

use crate::cox::{estimate_cox, sample_cox};
use crate::engine::{
    ancestors_at, init_poisson_levels, init_uniform, observe_count, parent_pointer_ancestors, EngineConfig,
    EventKind, LevelMode, LocationLaw, Model,
};
use crate::error::{Error, Result};
use crate::levels::{LevelParams, OffspringRates};
use crate::oracle::{
    catastrophe_transitions, gillespie_bd, gillespie_custom, multi_offspring_transitions,
    nonextinction_transitions, poisson_identities_check, poisson_sample, survival_prob,
    BDRates, Intensity, Transition, DEFAULT_EVENT_CAP,
};
use crate::rng::{derive_seed, stream, ReplicateStreams, INIT_STREAM, ORACLE_STREAM};
use crate::runner::try_run_replicates;
use crate::stats::{
    binomial_z_test, chi_square_two_sample, histogram, ks_test, mean_with_se, variance_with_se, TestReport,
};
use crate::variants::{
    condition_extinction, condition_nonextinction, environment_limit_run, CatastropheSpec, EnvironmentSpec,
    ImmigrationSpec, LimitRun, MultitypeSpec,
};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Titles of the criteria, indexed from 1.
pub const CRITERIA: [&str; 14] = [
    "projection equivalence",
    "survival probability",
    "mean growth",
    "Harris limit",
    "conditional level uniformity",
    "Feller limit",
    "restriction consistency",
    "conditioned variants",
    "multiple offspring",
    "catastrophes",
    "exponential levels",
    "Cox machinery",
    "random environment",
    "genealogy",
];

/// Settings shared by all criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteContext {
    pub seed: u64,
    /// Worker threads; 0 picks the default.
    pub workers: usize,
}

impl Default for SuiteContext {
    fn default() -> Self {
        Self { seed: DEFAULT_SEED, workers: 0 }
    }
}

impl SuiteContext {
    fn seed(&self, id: u8, label: &str) -> u64 {
        derive_seed(self.seed, &format!("criterion-{id}/{label}"))
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub reports: Vec<TestReport>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn pass(&self) -> bool {
        !self.reports.is_empty() && self.reports.iter().all(|r| r.pass)
    }

    /// One summary line.
    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{verdict} criterion {:>2} ({}): {} checks, {:.1}s",
            self.id,
            self.title,
            self.reports.len(),
            self.seconds
        );
        if !failed.is_empty() {
            line.push_str(&format!("; failed: {}", failed.join(", ")));
        }
        line
    }
}

/// Parses `all` or a comma-separated list of ids and ranges such as `1,3-5`.
pub fn parse_selector(spec: &str) -> Result<Vec<u8>> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("all") || spec.is_empty() {
        return Ok((1..=14).collect());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let bad = || Error::config(format!("bad criterion selector `{part}` (use ids 1-14, ranges, or `all`)"));
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<u8>().map_err(|_| bad())?, b.trim().parse::<u8>().map_err(|_| bad())?),
            None => {
                let v = part.parse::<u8>().map_err(|_| bad())?;
                (v, v)
            }
        };
        if lo == 0 || hi > 14 || lo > hi {
            return Err(bad());
        }
        out.extend(lo..=hi);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Runs one criterion.
pub fn run_criterion(id: u8, ctx: &SuiteContext) -> Result<CriterionResult> {
    let start = Instant::now();
    let reports = match id {
        1 => projection_equivalence(ctx)?,
        2 => survival_probability(ctx)?,
        3 => mean_growth(ctx)?,
        4 => harris_limit(ctx)?,
        5 => level_uniformity(ctx)?,
        6 => feller_limit(ctx)?,
        7 => restriction_consistency(ctx)?,
        8 => conditioned_variants(ctx)?,
        9 => multiple_offspring(ctx)?,
        10 => catastrophes(ctx)?,
        11 => exponential_levels(ctx)?,
        12 => cox_machinery(ctx)?,
        13 => random_environment(ctx)?,
        14 => genealogy(ctx)?,
        _ => return Err(Error::config(format!("no criterion {id}"))),
    };
    Ok(CriterionResult { id, title: CRITERIA[id as usize - 1], reports, seconds: start.elapsed().as_secs_f64() })
}

/// Runs the selected criteria in order.
pub fn run_suite(ids: &[u8], ctx: &SuiteContext) -> Result<Vec<CriterionResult>> {
    ids.iter().map(|&id| run_criterion(id, ctx)).collect()
}

// ------------------------------------------------------------------ helpers

fn chi(name: impl Into<String>, a: &[u64], b: &[u64]) -> Result<TestReport> {
    chi_square_two_sample(&name.into(), &histogram(a), &histogram(b))
}

/// `N(t)` of `reps` engine replicates, each started from `n0` particles.
fn engine_counts(cfg: &EngineConfig, n0: usize, t: f64, seed: u64, reps: u64, workers: usize) -> Result<Vec<u64>> {
    try_run_replicates(reps, workers, |i| {
        let mut s = init_uniform(n0, cfg, ReplicateStreams::new(seed, i))?;
        s.advance(t, cfg)?;
        Ok(s.len() as u64)
    })
}

fn bd_counts(rates: BDRates, n0: u64, t: f64, seed: u64, reps: u64, workers: usize) -> Result<Vec<u64>> {
    try_run_replicates(reps, workers, |i| gillespie_bd(rates, n0, t, &mut stream(seed, i, ORACLE_STREAM)))
}

fn custom_counts(
    table: &[Transition],
    n0: &[u64],
    t: f64,
    seed: u64,
    reps: u64,
    workers: usize,
) -> Result<Vec<Vec<u64>>> {
    try_run_replicates(reps, workers, |i| {
        gillespie_custom(table, n0, t, DEFAULT_EVENT_CAP, &mut stream(seed, i, ORACLE_STREAM))
    })
}

fn params(a: f64, b: f64, r: f64) -> Result<LevelParams> {
    LevelParams::new(a, b, r)
}

fn mean_report(name: impl Into<String>, xs: &[f64], target: f64) -> Result<TestReport> {
    let (m, se) = mean_with_se(xs)?;
    Ok(TestReport::z_test(name, m, se, target, xs.len()))
}

fn as_f64(xs: &[u64]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

// ----------------------------------------------------------------- criteria

const C1_TIMES: [f64; 3] = [0.5, 1.0, 2.0];

fn projection_equivalence(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let p = params(1.0, 0.5, 1.0)?;
    let cfg = EngineConfig::new(Model::from_params(&p));
    C1_TIMES
        .iter()
        .map(|&t| {
            let e = engine_counts(&cfg, 5, t, ctx.seed(1, &format!("engine-{t}")), 10_000, ctx.workers)?;
            let o = bd_counts(BDRates::projected(&p), 5, t, ctx.seed(1, &format!("oracle-{t}")), 10_000, ctx.workers)?;
            chi(format!("projection_t={t}"), &e, &o)
        })
        .collect()
}

fn survival_probability(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let p = params(1.0, -1.0, 1.0)?;
    let cfg = EngineConfig::new(Model::from_params(&p));
    let reps = 100_000;
    let counts = engine_counts(&cfg, 1, 1.0, ctx.seed(2, "engine"), reps, ctx.workers)?;
    let alive = counts.iter().filter(|&&n| n > 0).count() as u64;
    Ok(vec![binomial_z_test("survival_frequency", alive, reps, survival_prob(1, 1.0, &p)?)])
}

/// `(a, b, r, n0, t)` spanning sub-, critical and supercritical regimes.
const C3_GRID: [(f64, f64, f64, usize, f64); 6] = [
    (1.0, -1.0, 1.0, 10, 1.0),
    (1.0, -0.5, 2.0, 5, 1.0),
    (1.0, 0.0, 1.0, 5, 1.0),
    (0.5, 0.0, 2.0, 10, 2.0),
    (1.0, 0.5, 1.0, 5, 1.0),
    (1.0, 1.0, 2.0, 3, 1.0),
];

fn mean_growth(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    C3_GRID
        .iter()
        .enumerate()
        .map(|(k, &(a, b, r, n0, t))| {
            let cfg = EngineConfig::new(Model::from_params(&params(a, b, r)?));
            let counts = engine_counts(&cfg, n0, t, ctx.seed(3, &format!("point-{k}")), 10_000, ctx.workers)?;
            mean_report(format!("mean_growth_a={a}_b={b}_r={r}_n0={n0}_t={t}"), &as_f64(&counts), n0 as f64 * (b * t).exp())
        })
        .collect()
}

fn harris_limit(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let p = params(1.0, 0.5, 1.0)?;
    let (p_survive, rate) = crate::oracle::harris_params(&p)?;
    let cfg = EngineConfig::new(Model::from_params(&p));
    let reps = 100_000;
    let t = 15.0;
    let counts = engine_counts(&cfg, 1, t, ctx.seed(4, "engine"), reps, ctx.workers)?;
    let alive: Vec<f64> = counts.iter().filter(|&&n| n > 0).map(|&n| n as f64 * (-p.b * t).exp()).collect();
    Ok(vec![
        binomial_z_test("harris_survival", alive.len() as u64, reps, p_survive),
        ks_test("harris_exponential", &alive, |w| -(-rate * w.max(0.0)).exp_m1())?,
    ])
}

fn pooled_levels(cfg: &EngineConfig, n0: usize, t: f64, seed: u64, reps: u64, workers: usize) -> Result<Vec<f64>> {
    let per: Vec<Vec<f64>> = try_run_replicates(reps, workers, |i| {
        let mut s = init_uniform(n0, cfg, ReplicateStreams::new(seed, i))?;
        s.advance(t, cfg)?;
        Ok(s.levels())
    })?;
    Ok(per.into_iter().flatten().collect())
}

fn level_uniformity(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let r = 1.0;
    let base = EngineConfig::new(Model::scalar(1.0, 0.0, r));

    let mut immigration = EngineConfig::new(Model::scalar(1.0, 0.0, r));
    immigration.variants.immigration =
        Some(ImmigrationSpec { total_rate_density: 1.0, location: LocationLaw::Unit });

    let spec = MultitypeSpec { birth: vec![vec![0.5, 0.5], vec![1.0, 0.2]], death_b: vec![0.2, -0.3] };
    let multitype = spec.config(r, vec![1.0, 1.0])?;

    let mut offspring = EngineConfig::new(Model::scalar(0.0, 0.0, r));
    offspring.variants.offspring = Some(OffspringRates::new(vec![0.3, 0.3])?);

    let mut catastrophe = EngineConfig::new(Model::scalar(1.0, 0.5, r));
    catastrophe.variants.catastrophe = Some(CatastropheSpec::constant(1.0, 2.0));

    let cases = [
        ("uniformity_base", base),
        ("uniformity_immigration", immigration),
        ("uniformity_multitype", multitype),
        ("uniformity_multioffspring", offspring),
        ("uniformity_catastrophe", catastrophe),
    ];
    cases
        .iter()
        .map(|(name, cfg)| {
            let levels = pooled_levels(cfg, 5, 1.0, ctx.seed(5, name), 10_000, ctx.workers)?;
            ks_test(name, &levels, |u| (u / r).clamp(0.0, 1.0))
        })
        .collect()
}

fn feller_limit(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let (m_target, v_target) = crate::oracle::feller_moments(1.0, 1.0, 1.0, 0.0)?;
    let mut out = Vec::new();
    for &r in &[10.0, 100.0, 1000.0] {
        let cfg = EngineConfig::new(Model::scalar(1.0, 0.0, r));
        let reps = 10_000;
        let counts = engine_counts(&cfg, r as usize, 1.0, ctx.seed(6, &format!("r={r}")), reps, ctx.workers)?;
        let y: Vec<f64> = counts.iter().map(|&n| n as f64 / r).collect();
        let (m, m_se) = mean_with_se(&y)?;
        let (v, v_se) = variance_with_se(&y)?;
        if r < 1000.0 {
            // At b = 0 these two moments are exact for every finite r.
            out.push(TestReport::z_test(format!("feller_mean_r={r}"), m, m_se, m_target, y.len()));
            out.push(TestReport::z_test(format!("feller_variance_r={r}"), v, v_se, v_target, y.len()));
        } else {
            out.push(TestReport::relative(format!("feller_mean_r={r}"), m, m_target, 0.05, y.len()));
            out.push(TestReport::relative(format!("feller_variance_r={r}"), v, v_target, 0.05, y.len()));
        }
    }
    Ok(out)
}

fn restriction_consistency(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let (a, b, y) = (1.0, 0.5, 5.0);
    let ceiling = EngineConfig::new(Model::ceiling(a, b, 1.0, Some(4.0)));
    let finite = EngineConfig::new(Model::scalar(a, b, 1.0));
    let reps = 10_000;
    let seed_c = ctx.seed(7, "ceiling");
    let seed_f = ctx.seed(7, "finite");
    let below: Vec<u64> = try_run_replicates(reps, ctx.workers, |i| {
        let mut s = init_poisson_levels(y, &ceiling, ReplicateStreams::new(seed_c, i))?;
        s.advance(1.0, &ceiling)?;
        Ok(observe_count(&s, 1.0)? as u64)
    })?;
    let direct: Vec<u64> = try_run_replicates(reps, ctx.workers, |i| {
        let streams = ReplicateStreams::new(seed_f, i);
        let n0 = poisson_sample(y, &mut streams.stream(INIT_STREAM));
        let mut s = init_uniform(n0 as usize, &finite, streams)?;
        s.advance(1.0, &finite)?;
        Ok(s.len() as u64)
    })?;
    Ok(vec![chi("restriction_below_window", &below, &direct)?])
}

fn conditioned_variants(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let reps = 10_000;
    let p = params(1.0, -0.5, 1.0)?;
    let nonext = condition_nonextinction(&EngineConfig::new(Model::from_params(&p)))?;
    let e = engine_counts(&nonext, 3, 1.0, ctx.seed(8, "nonext-engine"), reps, ctx.workers)?;
    let o: Vec<u64> = custom_counts(&nonextinction_transitions(&p), &[3], 1.0, ctx.seed(8, "nonext-oracle"), reps, ctx.workers)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    let mut out = vec![chi("nonextinction_vs_oracle", &e, &o)?];
    out.push(TestReport::from_tolerance(
        "nonextinction_never_extinct",
        e.iter().filter(|&&n| n == 0).count() as f64,
        0.0,
        vec![e.len()],
    ));

    let q = params(1.0, 0.5, 2.0)?;
    let ext = condition_extinction(&EngineConfig::new(Model::from_params(&q)))?;
    let sub = BDRates::new(q.r * q.a - q.b, q.r * q.a)?;
    let e = engine_counts(&ext, 5, 1.0, ctx.seed(8, "ext-engine"), reps, ctx.workers)?;
    let o = bd_counts(sub, 5, 1.0, ctx.seed(8, "ext-oracle"), reps, ctx.workers)?;
    out.push(chi("extinction_vs_subcritical_oracle", &e, &o)?);
    let late = engine_counts(&ext, 5, 20.0, ctx.seed(8, "ext-late"), reps, ctx.workers)?;
    let extinct = late.iter().filter(|&&n| n == 0).count() as f64 / reps as f64;
    out.push(TestReport::from_tolerance("extinction_by_t=20_shortfall", (0.999 - extinct).max(0.0), 0.0, vec![reps as usize]));
    Ok(out)
}

fn multiple_offspring(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let reps = 10_000;
    let o = OffspringRates::new(vec![0.0, 0.5])?;
    let mut cfg = EngineConfig::new(Model::scalar(0.0, 0.0, 1.0));
    cfg.variants.offspring = Some(o.clone());
    let e = engine_counts(&cfg, 5, 1.0, ctx.seed(9, "engine"), reps, ctx.workers)?;
    let table = multi_offspring_transitions(&o, 0.0, 1.0);
    let d: Vec<u64> = custom_counts(&table, &[5], 1.0, ctx.seed(9, "oracle"), reps, ctx.workers)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    let mut out = vec![chi("pair_births_vs_oracle", &e, &d)?];

    // Single births through the offspring interface replay criterion 1.
    let p = params(1.0, 0.5, 1.0)?;
    let base = EngineConfig::new(Model::from_params(&p));
    let mut single = base.clone();
    single.variants.offspring = Some(OffspringRates::new(vec![1.0])?);
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for &t in &C1_TIMES {
        let seed = ctx.seed(1, &format!("engine-{t}"));
        let x = engine_counts(&base, 5, t, seed, reps, ctx.workers)?;
        let y = engine_counts(&single, 5, t, seed, reps, ctx.workers)?;
        mismatches += x.iter().zip(&y).filter(|(a, b)| a != b).count();
        total += x.len();
    }
    out.push(TestReport::from_tolerance("single_births_replay_projection", mismatches as f64, 0.0, vec![total]));
    Ok(out)
}

fn catastrophes(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let p = params(1.0, 0.5, 1.0)?;
    let (gamma, rho) = (1.0, 2.0);
    let mut cfg = EngineConfig::new(Model::from_params(&p));
    cfg.variants.catastrophe = Some(CatastropheSpec::constant(gamma, rho));
    let reps = 10_000u64;

    // Per-particle survival, in batches until 10^5 particle-events are seen.
    let (mut exposed, mut survived) = (0u64, 0u64);
    let mut batch = 0u64;
    while exposed < 100_000 {
        let seed = ctx.seed(10, &format!("survival-{batch}"));
        let got: Vec<(u64, u64)> = try_run_replicates(reps, ctx.workers, |i| {
            let mut s = init_uniform(5, &cfg, ReplicateStreams::new(seed, i))?;
            s.advance(1.0, &cfg)?;
            Ok((s.counters().catastrophe_exposed, s.counters().catastrophe_survivors))
        })?;
        exposed += got.iter().map(|g| g.0).sum::<u64>();
        survived += got.iter().map(|g| g.1).sum::<u64>();
        batch += 1;
    }
    let mut out = vec![binomial_z_test("catastrophe_survival", survived, exposed, 1.0 / rho)];

    let e = engine_counts(&cfg, 5, 1.0, ctx.seed(10, "engine"), reps, ctx.workers)?;
    let table = catastrophe_transitions(BDRates::projected(&p), gamma, 1.0 / rho);
    let o: Vec<u64> = custom_counts(&table, &[5], 1.0, ctx.seed(10, "oracle"), reps, ctx.workers)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    out.push(chi("catastrophe_vs_thinning_oracle", &e, &o)?);
    Ok(out)
}

fn exponential_levels(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let uniform = EngineConfig::new(Model::scalar(1.0, 0.5, 1.0));
    let exponential = EngineConfig::new(Model { level_mode: LevelMode::Exponential, ..Model::scalar(1.0, 0.5, 1.0) });
    let e = engine_counts(&exponential, 5, 1.0, ctx.seed(11, "exponential"), 10_000, ctx.workers)?;
    let u = engine_counts(&uniform, 5, 1.0, ctx.seed(11, "uniform"), 10_000, ctx.workers)?;
    Ok(vec![chi("exponential_vs_uniform_levels", &e, &u)?])
}

fn cox_machinery(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let mut out = poisson_identities_check(
        Intensity { length: 1.0, density: 1.0 },
        |_| 0.5,
        |z| if z < 0.3 { 1.0 } else { 0.0 },
        100_000,
        &mut stream(ctx.seed(12, "identities"), 0, ORACLE_STREAM),
    )?;
    let reps = 10_000u64;
    let estimates = |mass: fn(&mut crate::rng::StreamRng) -> f64, window: f64, label: &str| -> Result<Vec<f64>> {
        let seed = ctx.seed(12, label);
        try_run_replicates(reps, ctx.workers, |i| {
            let mut rng = stream(seed, i, ORACLE_STREAM);
            let cfg = sample_cox(mass, |r| r.random::<f64>(), window, &mut rng)?;
            Ok(estimate_cox(&cfg, |m| m * m))
        })
    };
    // Random mass Exp(1) and marks uniform: E[Xi(f)] = 1/3 for f(m) = m^2.
    let random = estimates(|r| -(1.0 - r.random::<f64>()).ln(), 5.0, "random-mass")?;
    out.push(mean_report("cox_unbiased_random_mass", &random, 1.0 / 3.0)?);
    let k5 = estimates(|_| 2.0, 5.0, "k=5")?;
    let k10 = estimates(|_| 2.0, 10.0, "k=10")?;
    out.push(mean_report("cox_unbiased_fixed_mass", &k10, 2.0 / 3.0)?);
    let ratio = variance_with_se(&k5)?.0 / variance_with_se(&k10)?.0;
    out.push(TestReport::from_tolerance(
        "cox_variance_halves_when_window_doubles",
        (ratio / 2.0 - 1.0).abs(),
        0.10,
        vec![k5.len(), k10.len()],
    ));
    Ok(out)
}

fn random_environment(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let (y0, window, t) = (1.0, 10.0, 1.0);
    let run = LimitRun { y0, window, lambda_max: 4.0 * window, step: 1e-3 };
    let reps = 4_000u64;

    let spec = EnvironmentSpec::two_state(1.0, 1.0, 0.5, 1.0);
    let derived = spec.derived()?;
    let seed = ctx.seed(13, "limit");
    let mass: Vec<f64> = try_run_replicates(reps, ctx.workers, |i| {
        Ok(environment_limit_run(&derived, &run, &[t], &ReplicateStreams::new(seed, i))?[0].mass)
    })?;
    let target = y0 * (derived.cbar * t).exp();
    let (m, _) = mean_with_se(&mass)?;
    let mut out = vec![TestReport::relative("environment_limit_mean_mass", m, target, 0.10, mass.len())];

    // b = 0: the limit is the deterministic-level ceiling model with a = abar.
    let flat = EnvironmentSpec::two_state(1.0, 1.0, 0.0, 1.0).derived()?;
    let seed = ctx.seed(13, "flat-limit");
    let limit: Vec<u64> = try_run_replicates(reps, ctx.workers, |i| {
        Ok(environment_limit_run(&flat, &run, &[t], &ReplicateStreams::new(seed, i))?[0].count_below_window as u64)
    })?;
    let cfg = EngineConfig::new(Model::ceiling(flat.abar, 0.0, window, Some(run.lambda_max)));
    let seed = ctx.seed(13, "flat-engine");
    let engine: Vec<u64> = try_run_replicates(reps, ctx.workers, |i| {
        let mut s = init_poisson_levels(y0, &cfg, ReplicateStreams::new(seed, i))?;
        s.advance(t, &cfg)?;
        Ok(observe_count(&s, window)? as u64)
    })?;
    out.push(chi("environment_flat_vs_ceiling_model", &limit, &engine)?);
    Ok(out)
}

fn genealogy(ctx: &SuiteContext) -> Result<Vec<TestReport>> {
    let cfg = EngineConfig::new(Model::scalar(1.0, 0.0, 10.0).with_genealogy());
    let horizon = 2.0;
    let seed = ctx.seed(14, "histories");
    let per: Vec<(usize, usize, usize)> = try_run_replicates(1_000, ctx.workers, |i| {
        let mut s = init_uniform(5, &cfg, ReplicateStreams::new(seed, i))?;
        s.advance(horizon, &cfg)?;
        let mut times: Vec<f64> = s
            .log()
            .unwrap_or(&[])
            .iter()
            .filter(|r| r.kind == EventKind::Birth && r.time < horizon)
            .map(|r| r.time)
            .collect();
        times.dedup();
        let (mut set_mismatch, mut bad_steps) = (0, 0);
        let mut prev: Option<usize> = None;
        for &t in &times {
            let barrier = ancestors_at(&s, t, horizon, &cfg)?;
            let pointers = parent_pointer_ancestors(&s, t, horizon)?;
            if barrier != pointers {
                set_mismatch += 1;
            }
            if let Some(p) = prev {
                if barrier.len() != p && barrier.len() != p + 1 {
                    bad_steps += 1;
                }
            }
            prev = Some(barrier.len());
        }
        Ok((set_mismatch, bad_steps, times.len()))
    })?;
    let checked: usize = per.iter().map(|p| p.2).sum();
    Ok(vec![
        TestReport::from_tolerance("ancestor_sets_barrier_vs_parent_links", per.iter().map(|p| p.0).sum::<usize>() as f64, 0.0, vec![checked]),
        TestReport::from_tolerance("ancestor_count_unit_jumps", per.iter().map(|p| p.1).sum::<usize>() as f64, 0.0, vec![checked]),
    ])
}
