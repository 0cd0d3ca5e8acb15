//! Subcommand bodies. Each returns the rows or reports it produced; writing
//! is left to [`crate::output`].

use rand::Rng;


use levelsim::cox::{estimate_cox, sample_cox};
use levelsim::engine::{
    ancestor_counts, init_uniform, write_event_log, EngineConfig, EventRecord, LevelMode,
    PopulationState,
};
use levelsim::oracle::{
    bd_transitions, catastrophe_transitions, gillespie_custom, multi_offspring_transitions, multitype_transitions,
    nonextinction_transitions, BDRates, Effect, Transition, DEFAULT_EVENT_CAP,
};
use levelsim::rng::{stream, ReplicateStreams, INIT_STREAM, ORACLE_STREAM};
use levelsim::runner::try_run_replicates;
use levelsim::stats::fmt_f64;
use levelsim::variants::environment_limit_run;
use levelsim::{Error, Result};

use crate::config::{CoxMass, Plan, RunConfig, Scenario};

pub const TRAJECTORY_HEADER: &str = "replicate,time,observable,value";

/// One `replicate,time,observable,value` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub replicate: u64,
    pub time: f64,
    pub observable: String,
    pub value: f64,
}

impl Row {
    fn new(replicate: u64, time: f64, observable: impl Into<String>, value: f64) -> Self {
        Self { replicate, time, observable: observable.into(), value }
    }

    pub fn csv(&self) -> String {
        format!("{},{},{},{}", self.replicate, fmt_f64(self.time), self.observable, fmt_f64(self.value))
    }
}

/// Rows of one replicate plus its event log, if kept.
pub struct ReplicateOutput {
    pub rows: Vec<Row>,
    pub events: Option<Vec<u8>>,
}

fn log_bytes(state: &PopulationState) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    write_event_log(state.log().unwrap_or(&[] as &[EventRecord]), &mut buf).ok()?;
    Some(buf)
}

/// Observables of an engine state at time `t`.
fn observe(run: &RunConfig, cfg: &EngineConfig, i: u64, t: f64, s: &PopulationState, rows: &mut Vec<Row>) {
    let n = s.len() as f64;
    rows.push(Row::new(i, t, "count", n));
    match run.scenario {
        Scenario::Harris => {
            let b = cfg.model.level_params().map_or(0.0, |p| p.b);
            rows.push(Row::new(i, t, "scaled_count", n * (-b * t).exp()));
        }
        Scenario::Feller => rows.push(Row::new(i, t, "normalized", n / cfg.model.r)),
        Scenario::Multitype => {
            if let Some(spec) = &cfg.variants.multitype {
                for z in 0..spec.types() {
                    let c = s.particles().filter(|p| p.location.type_index() == Some(z)).count();
                    rows.push(Row::new(i, t, format!("count_type_{z}"), c as f64));
                }
            }
        }
        _ => {}
    }
}

/// Runs the scenario's simulator.
pub fn simulate(run: &RunConfig) -> Result<Vec<ReplicateOutput>> {
    match &run.plan {
        Plan::Engine { cfg, n0 } => try_run_replicates(run.replicates, run.workers, |i| {
            let mut cfg = cfg.clone();
            cfg.model.record_genealogy |= run.event_log;
            let mut s = init_uniform(*n0, &cfg, ReplicateStreams::new(run.seed, i))?;
            let mut rows = Vec::new();
            for &t in &run.times {
                s.advance(t, &cfg)?;
                observe(run, &cfg, i, t, &s, &mut rows);
            }
            let events = if run.event_log { log_bytes(&s) } else { None };
            Ok(ReplicateOutput { rows, events })
        }),
        Plan::EnvironmentLimit { spec, run: limit } => {
            let derived = spec.derived()?;
            try_run_replicates(run.replicates, run.workers, |i| {
                let obs = environment_limit_run(&derived, limit, &run.times, &ReplicateStreams::new(run.seed, i))?;
                let rows = obs
                    .iter()
                    .flat_map(|o| {
                        [
                            Row::new(i, o.time, "count_below_window", o.count_below_window as f64),
                            Row::new(i, o.time, "mass", o.mass),
                        ]
                    })
                    .collect();
                Ok(ReplicateOutput { rows, events: None })
            })
        }
        Plan::Cox { mass, window } => try_run_replicates(run.replicates, run.workers, |i| {
            let mut rng = stream(run.seed, i, INIT_STREAM);
            let draw = |r: &mut levelsim::rng::StreamRng| match *mass {
                CoxMass::Fixed(m) => m,
                CoxMass::Exponential(mean) => -mean * (1.0 - r.random::<f64>()).ln(),
            };
            let pc = sample_cox(draw, |r| r.random::<f64>(), *window, &mut rng)?;
            let rows = vec![
                Row::new(i, 0.0, "points", pc.points.len() as f64),
                Row::new(i, 0.0, "estimate", estimate_cox(&pc, |_| 1.0)),
            ];
            Ok(ReplicateOutput { rows, events: None })
        }),
    }
}

/// Runs the scenario's direct counting-process simulation.
pub fn oracle(run: &RunConfig) -> Result<Vec<ReplicateOutput>> {
    let unsupported = || Error::Unsupported(format!("no counting-process oracle for scenario {}", run.scenario));
    let Plan::Engine { cfg, n0 } = &run.plan else {
        return Err(unsupported());
    };
    let n0 = *n0 as u64;
    let r = cfg.model.r;
    let p = cfg.model.level_params();
    let projected = p.map(|p| BDRates::projected(&p));
    let table: Vec<Transition> = match run.scenario {
        Scenario::Base | Scenario::PureDeath | Scenario::Harris | Scenario::Feller | Scenario::ExpLevels
        | Scenario::Genealogy => bd_transitions(projected.ok_or_else(unsupported)?),
        Scenario::ConditionedNonext => nonextinction_transitions(&p.ok_or_else(unsupported)?),
        // The engine already holds the transformed parameters.
        Scenario::ConditionedExt => bd_transitions(projected.ok_or_else(unsupported)?),
        Scenario::Immigration => {
            let nu = cfg.variants.immigration.as_ref().map_or(0.0, |m| m.total_rate_density);
            let mut t = bd_transitions(projected.ok_or_else(unsupported)?);
            t.push(Transition::new(move |_| r * nu, Effect::Shift(vec![1])));
            t
        }
        Scenario::Multioffspring => {
            let o = cfg.variants.offspring.as_ref().ok_or_else(unsupported)?;
            let b = cfg.model.rates.constant().map_or(0.0, |c| c.1);
            multi_offspring_transitions(o, b, r)
        }
        Scenario::Catastrophe => {
            let c = cfg.variants.catastrophe.as_ref().ok_or_else(unsupported)?;
            let rho = match c.marks.as_slice() {
                [(_, levelsim::variants::RhoMap::Constant(rho))] => *rho,
                _ => return Err(unsupported()),
            };
            catastrophe_transitions(projected.ok_or_else(unsupported)?, c.event_rate, 1.0 / rho)
        }
        Scenario::Multitype => multitype_transitions(cfg.variants.multitype.as_ref().ok_or_else(unsupported)?, r),
        Scenario::Environment | Scenario::Cox => return Err(unsupported()),
    };
    let weights: Option<Vec<f64>> = match (&run.scenario, &cfg.model.initial_location) {
        (Scenario::Multitype, levelsim::engine::LocationLaw::Types(w)) => Some(w.clone()),
        _ => None,
    };
    if cfg.model.level_mode == LevelMode::Exponential && run.scenario != Scenario::ExpLevels {
        return Err(unsupported());
    }
    try_run_replicates(run.replicates, run.workers, |i| {
        let mut rng = stream(run.seed, i, ORACLE_STREAM);
        let mut state = match &weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                let mut counts = vec![0u64; w.len()];
                for _ in 0..n0 {
                    let mut x = rng.random::<f64>() * total;
                    let mut z = w.len() - 1;
                    for (j, &wj) in w.iter().enumerate() {
                        if x < wj {
                            z = j;
                            break;
                        }
                        x -= wj;
                    }
                    counts[z] += 1;
                }
                counts
            }
            None => vec![n0],
        };
        let mut rows = Vec::new();
        let mut now = 0.0;
        for &t in &run.times {
            state = gillespie_custom(&table, &state, t - now, DEFAULT_EVENT_CAP, &mut rng)?;
            now = t;
            let n: u64 = state.iter().sum();
            rows.push(Row::new(i, t, "count", n as f64));
            match run.scenario {
                Scenario::Harris => {
                    let b = p.map_or(0.0, |p| p.b);
                    rows.push(Row::new(i, t, "scaled_count", n as f64 * (-b * t).exp()));
                }
                Scenario::Feller => rows.push(Row::new(i, t, "normalized", n as f64 / r)),
                Scenario::Multitype => {
                    for (z, &c) in state.iter().enumerate() {
                        rows.push(Row::new(i, t, format!("count_type_{z}"), c as f64));
                    }
                }
                _ => {}
            }
        }
        Ok(ReplicateOutput { rows, events: None })
    })
}

/// Ancestor-set sizes at the configured times for each replicate.
pub fn genealogy(run: &RunConfig) -> Result<Vec<ReplicateOutput>> {
    let (Plan::Engine { cfg, n0 }, Some(horizon)) = (&run.plan, run.horizon) else {
        return Err(Error::Config(vec![format!(
            "the genealogy subcommand needs scenario genealogy (got {})",
            run.scenario
        )]));
    };
    try_run_replicates(run.replicates, run.workers, |i| {
        let mut s = init_uniform(*n0, cfg, ReplicateStreams::new(run.seed, i))?;
        s.advance(horizon, cfg)?;
        let counts = ancestor_counts(&s, &run.times, horizon, cfg)?;
        let rows = run.times.iter().zip(counts).map(|(&t, c)| Row::new(i, t, "ancestors", c as f64)).collect();
        let events = if run.event_log { log_bytes(&s) } else { None };
        Ok(ReplicateOutput { rows, events })
    })
}
