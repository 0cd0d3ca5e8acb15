//! Run configuration: one JSON object per run.
//!
//! Parsing never stops at the first problem. Unknown keys, wrong types and
//! constraint violations are all collected and reported together.

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use levelsim::engine::{EngineConfig, LocationLaw, Model};
use levelsim::levels::{LevelParams, OffspringRates};
use levelsim::variants::{
    condition_extinction, condition_nonextinction, environment_prelimit_config, CatastropheSpec,
    EnvironmentSpec, ImmigrationSpec, LimitRun, MultitypeSpec,
};
use levelsim::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Base,
    PureDeath,
    ConditionedNonext,
    ConditionedExt,
    Harris,
    Feller,
    Genealogy,
    Immigration,
    Multitype,
    Multioffspring,
    Catastrophe,
    Environment,
    ExpLevels,
    Cox,
}

impl Scenario {
    pub const ALL: [Scenario; 14] = [
        Scenario::Base,
        Scenario::PureDeath,
        Scenario::ConditionedNonext,
        Scenario::ConditionedExt,
        Scenario::Harris,
        Scenario::Feller,
        Scenario::Genealogy,
        Scenario::Immigration,
        Scenario::Multitype,
        Scenario::Multioffspring,
        Scenario::Catastrophe,
        Scenario::Environment,
        Scenario::ExpLevels,
        Scenario::Cox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Base => "base",
            Scenario::PureDeath => "pure_death",
            Scenario::ConditionedNonext => "conditioned_nonext",
            Scenario::ConditionedExt => "conditioned_ext",
            Scenario::Harris => "harris",
            Scenario::Feller => "feller",
            Scenario::Genealogy => "genealogy",
            Scenario::Immigration => "immigration",
            Scenario::Multitype => "multitype",
            Scenario::Multioffspring => "multioffspring",
            Scenario::Catastrophe => "catastrophe",
            Scenario::Environment => "environment",
            Scenario::ExpLevels => "exp_levels",
            Scenario::Cox => "cox",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a scenario simulates.
#[derive(Debug, Clone)]
pub enum Plan {
    /// `n0` initial particles with uniform levels.
    Engine { cfg: EngineConfig, n0: usize },
    /// Shared-noise limit of the random-environment model.
    EnvironmentLimit { spec: EnvironmentSpec, run: LimitRun },
    Cox { mass: CoxMass, window: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoxMass {
    Fixed(f64),
    /// `Exp(mean)`.
    Exponential(f64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub plan: Plan,
    pub times: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
    pub event_log: bool,
    /// Genealogy horizon `T`.
    pub horizon: Option<f64>,
}

impl RunConfig {
    pub fn engine(&self) -> Option<&EngineConfig> {
        match &self.plan {
            Plan::Engine { cfg, .. } => Some(cfg),
            _ => None,
        }
    }
}

pub const DEFAULT_REPLICATES: u64 = 1000;
pub const DEFAULT_SEED: u64 = 1;

/// Reads and validates a configuration file.
pub fn parse_config_file(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config(&text)
}

/// Parses and validates a configuration from JSON text.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config is not valid JSON: {e}")]))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(vec!["config must be a single JSON object".into()]));
    };
    let mut f = Fields { map, errs: Vec::new() };
    let scenario = match f.string("scenario") {
        Some(s) => match Scenario::parse(&s) {
            Some(sc) => sc,
            None => {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                f.errs.push(format!("unknown scenario `{s}` (expected one of {})", names.join(", ")));
                Scenario::Base
            }
        },
        None => {
            f.errs.push("missing key `scenario`".into());
            Scenario::Base
        }
    };

    let times = f.f64_list("times").unwrap_or_else(|| vec![1.0]);
    if times.is_empty() {
        f.errs.push("`times` must not be empty".into());
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        f.errs.push("`times` must be finite and >= 0".into());
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        f.errs.push("`times` must be strictly increasing".into());
    }
    let replicates = f.u64("replicates").unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        f.errs.push("`replicates` must be >= 1".into());
    }
    let seed = f.u64("seed").unwrap_or(DEFAULT_SEED);
    let workers = f.u64("workers").unwrap_or(0) as usize;
    let output = f.string("output").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let event_log = f.bool("event_log").unwrap_or(false);

    let mut horizon = None;
    let plan = match scenario {
        Scenario::Environment => environment_plan(&mut f),
        Scenario::Cox => cox_plan(&mut f),
        _ => engine_plan(scenario, &mut f, &times, &mut horizon),
    };

    if event_log && !matches!(plan, Some(Plan::Engine { .. })) {
        f.errs.push(format!("`event_log` is not available for scenario {scenario} in this mode"));
    }
    for key in f.map.keys() {
        f.errs.push(format!("unknown key `{key}` for scenario {scenario}"));
    }
    match plan {
        Some(plan) if f.errs.is_empty() => {
            Ok(RunConfig { scenario, plan, times, replicates, seed, workers, output, event_log, horizon })
        }
        _ => Err(Error::Config(f.errs)),
    }
}

fn engine_plan(scenario: Scenario, f: &mut Fields, times: &[f64], horizon: &mut Option<f64>) -> Option<Plan> {
    let a = match scenario {
        Scenario::PureDeath | Scenario::Multitype | Scenario::Multioffspring => 0.0,
        _ => f.f64("a").unwrap_or(1.0),
    };
    let b = match scenario {
        Scenario::Multitype => 0.0,
        Scenario::PureDeath => f.f64("b").unwrap_or(-1.0),
        _ => f.f64("b").unwrap_or(0.0),
    };
    let r = f.f64("r").unwrap_or(1.0);
    let n0 = if scenario == Scenario::Feller {
        let y0 = f.f64("y0").unwrap_or(1.0);
        if !(y0 > 0.0 && y0.is_finite()) {
            f.errs.push(format!("`y0` must be finite and > 0 (got {y0})"));
        }
        (y0 * r).round().max(0.0) as usize
    } else {
        f.u64("n0").unwrap_or(5) as usize
    };

    let mut multitype = None;
    let model = match scenario {
        Scenario::Multitype => {
            let birth = f.matrix("birth_matrix");
            let death_b = f.f64_list("death_rates");
            let (Some(birth), Some(death_b)) = (birth, death_b) else {
                f.errs.push("scenario multitype needs `birth_matrix` and `death_rates`".into());
                return None;
            };
            let spec = MultitypeSpec { birth, death_b };
            let weights = f.f64_list("initial_weights").unwrap_or_else(|| vec![1.0; spec.types()]);
            let model = spec.model(r, weights);
            multitype = Some(spec);
            model
        }
        _ => Model::scalar(a, b, r),
    };
    if !matches!(scenario, Scenario::Multitype | Scenario::Multioffspring) {
        if let Err(e) = LevelParams::new(a, b, r) {
            f.push_error(e);
            return None;
        }
    }
    let mut cfg = EngineConfig::new(model);
    cfg.variants.multitype = multitype;
    match scenario {
        Scenario::Immigration => {
            let rate = f.f64("immigration_rate").unwrap_or(1.0);
            cfg.variants.immigration = Some(ImmigrationSpec { total_rate_density: rate, location: LocationLaw::Unit });
        }
        Scenario::Multioffspring => {
            let rates = f.f64_list("offspring_rates").unwrap_or_else(|| vec![0.0, 0.5]);
            match OffspringRates::new(rates) {
                Ok(o) => cfg.variants.offspring = Some(o),
                Err(e) => f.push_error(e),
            }
        }
        Scenario::Catastrophe => {
            let rate = f.f64("catastrophe_rate").unwrap_or(1.0);
            let rho = f.f64("rho").unwrap_or(2.0);
            cfg.variants.catastrophe = Some(CatastropheSpec::constant(rate, rho));
        }
        Scenario::ExpLevels => cfg.model.level_mode = levelsim::engine::LevelMode::Exponential,
        Scenario::Genealogy => {
            cfg.model.record_genealogy = true;
            let Some(h) = f.f64("horizon") else {
                f.errs.push("scenario genealogy needs `horizon`, the time the ancestry is traced back from".into());
                return None;
            };
            if times.iter().any(|&t| t >= h) {
                f.errs.push(format!("genealogy record `times` must all be < `horizon` ({h})"));
            }
            *horizon = Some(h);
        }
        Scenario::Harris => {
            if !(b > 0.0 && b < r * a) {
                f.errs.push(format!("scenario harris needs 0 < b < r*a (got a={a}, b={b}, r={r})"));
            }
        }
        Scenario::PureDeath => {
            if b > 0.0 {
                f.errs.push(format!("scenario pure_death has a = 0, so b must be <= 0 (got {b})"));
            }
        }
        _ => {}
    }
    let cfg = match scenario {
        Scenario::ConditionedNonext => condition_nonextinction(&cfg),
        Scenario::ConditionedExt => condition_extinction(&cfg),
        _ => cfg.validate().map(|_| cfg),
    };
    match cfg {
        Ok(cfg) => Some(Plan::Engine { cfg, n0 }),
        Err(e) => {
            f.push_error(e);
            None
        }
    }
}

fn environment_plan(f: &mut Fields) -> Option<Plan> {
    let q = f.matrix("generator");
    let a = f.f64_list("env_a");
    let b = f.f64_list("env_b");
    let speedup = f.f64("speedup").unwrap_or(1.0);
    let limit = f.bool("limit").unwrap_or(false);
    let (Some(q), Some(a), Some(b)) = (q, a, b) else {
        f.errs.push("scenario environment needs `generator`, `env_a` and `env_b`".into());
        return None;
    };
    let spec = EnvironmentSpec { q, a, b, speedup };
    if limit {
        let window = f.f64("window").unwrap_or(10.0);
        let run = LimitRun {
            y0: f.f64("y0").unwrap_or(1.0),
            window,
            lambda_max: f.f64("lambda_max").unwrap_or(4.0 * window),
            step: f.f64("step").unwrap_or(1e-3),
        };
        if !(run.y0 >= 0.0) || !(run.window > 0.0) || !(run.lambda_max >= run.window) || !(run.step > 0.0) {
            f.errs.push("limit mode needs y0 >= 0, 0 < window <= lambda_max and step > 0".into());
        }
        if let Err(e) = spec.derived() {
            f.push_error(e);
        }
        Some(Plan::EnvironmentLimit { spec, run })
    } else {
        let r = f.f64("r").unwrap_or(1.0);
        let n0 = f.u64("n0").unwrap_or(5) as usize;
        match environment_prelimit_config(&spec, &Model::scalar(0.0, 0.0, r)) {
            Ok(cfg) => Some(Plan::Engine { cfg, n0 }),
            Err(e) => {
                f.push_error(e);
                None
            }
        }
    }
}

fn cox_plan(f: &mut Fields) -> Option<Plan> {
    let window = f.f64("window").unwrap_or(10.0);
    if !(window > 0.0 && window.is_finite()) {
        f.errs.push(format!("`window` must be finite and > 0 (got {window})"));
    }
    let mass = match f.map.remove("mass") {
        None => CoxMass::Fixed(1.0),
        Some(Value::Number(n)) => CoxMass::Fixed(n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::String(s)) if s == "exponential" => CoxMass::Exponential(f.f64("mass_mean").unwrap_or(1.0)),
        Some(other) => {
            f.errs.push(format!("`mass` must be a number or \"exponential\" (got {other})"));
            CoxMass::Fixed(1.0)
        }
    };
    match mass {
        CoxMass::Fixed(m) | CoxMass::Exponential(m) if !(m >= 0.0 && m.is_finite()) => {
            f.errs.push(format!("Cox mass must be finite and >= 0 (got {m})"));
        }
        _ => {}
    }
    Some(Plan::Cox { mass, window })
}

/// Consumes keys from a JSON object, recording type errors.
struct Fields {
    map: Map<String, Value>,
    errs: Vec<String>,
}

impl Fields {
    fn push_error(&mut self, e: Error) {
        match e {
            Error::Config(list) => self.errs.extend(list),
            other => self.errs.push(other.to_string()),
        }
    }

    fn take<T>(&mut self, key: &str, what: &str, get: impl FnOnce(&Value) -> Option<T>) -> Option<T> {
        let v = self.map.remove(key)?;
        let out = get(&v);
        if out.is_none() {
            self.errs.push(format!("`{key}` must be {what} (got {v})"));
        }
        out
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        self.take(key, "a number", Value::as_f64)
    }

    fn u64(&mut self, key: &str) -> Option<u64> {
        self.take(key, "a nonnegative integer", Value::as_u64)
    }

    fn bool(&mut self, key: &str) -> Option<bool> {
        self.take(key, "true or false", Value::as_bool)
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.take(key, "a string", |v| v.as_str().map(str::to_owned))
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.take(key, "a list of numbers", |v| v.as_array()?.iter().map(Value::as_f64).collect())
    }

    fn matrix(&mut self, key: &str) -> Option<Vec<Vec<f64>>> {
        self.take(key, "a list of lists of numbers", |v| {
            v.as_array()?
                .iter()
                .map(|row| row.as_array()?.iter().map(Value::as_f64).collect())
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(list)) => list,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_base_uses_defaults() {
        let cfg = parse_config(r#"{"scenario": "base"}"#).unwrap();
        assert_eq!(cfg.scenario, Scenario::Base);
        assert_eq!(cfg.times, vec![1.0]);
        assert_eq!(cfg.replicates, DEFAULT_REPLICATES);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert!(!cfg.event_log);
        let Plan::Engine { cfg: e, n0 } = cfg.plan else { panic!() };
        assert_eq!(n0, 5);
        assert_eq!(e.model.level_params().unwrap(), LevelParams { a: 1.0, b: 0.0, r: 1.0 });
    }

    #[test]
    fn negative_projected_death_rate_is_rejected() {
        let errs = errors(r#"{"scenario": "base", "a": 1, "b": 2, "r": 1}"#);
        assert!(errs.iter().any(|e| e.contains("r*a - b")), "{errs:?}");
    }

    #[test]
    fn every_problem_is_reported() {
        let errs = errors(r#"{"scenario": "base", "bogus": 1, "also": 2, "times": [2, 1], "seed": -4}"#);
        assert!(errs.iter().any(|e| e.contains("`bogus`")));
        assert!(errs.iter().any(|e| e.contains("`also`")));
        assert!(errs.iter().any(|e| e.contains("strictly increasing")));
        assert!(errs.iter().any(|e| e.contains("`seed`")));
    }

    #[test]
    fn keys_of_other_scenarios_are_unknown() {
        let errs = errors(r#"{"scenario": "multitype", "a": 1, "birth_matrix": [[1]], "death_rates": [0]}"#);
        assert_eq!(errs, vec!["unknown key `a` for scenario multitype".to_string()]);
    }

    #[test]
    fn scenario_constraints() {
        assert!(errors(r#"{"scenario": "harris", "a": 1, "b": 0}"#)[0].contains("0 < b < r*a"));
        assert!(!errors(r#"{"scenario": "conditioned_ext", "b": 0}"#).is_empty());
        assert!(!errors(r#"{"scenario": "genealogy", "times": [1, 2], "horizon": 2}"#).is_empty());
        assert!(!errors(r#"{"scenario": "cox", "event_log": true}"#).is_empty());
        assert!(!errors(r#"{"scenario": "nope"}"#).is_empty());
        assert!(!errors(r#"[1, 2]"#).is_empty());
    }

    #[test]
    fn every_scenario_has_a_valid_minimal_form() {
        let extra = |s: Scenario| match s {
            Scenario::Harris => r#", "b": 0.5"#,
            Scenario::ConditionedExt => r#", "b": 0.5, "r": 2"#,
            Scenario::Genealogy => r#", "horizon": 2"#,
            Scenario::Multitype => r#", "birth_matrix": [[0.5, 0.5], [1.0, 0.2]], "death_rates": [0.2, -0.3]"#,
            Scenario::Environment => r#", "generator": [[-1, 1], [1, -1]], "env_a": [1, 1], "env_b": [0.5, -0.5]"#,
            _ => "",
        };
        for s in Scenario::ALL {
            let text = format!(r#"{{"scenario": "{}"{}}}"#, s.name(), extra(s));
            parse_config(&text).unwrap_or_else(|e| panic!("{s}: {e}"));
        }
    }
}
