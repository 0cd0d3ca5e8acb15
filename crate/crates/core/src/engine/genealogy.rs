//! Ancestor queries over a recorded event log.

use std::collections::{BTreeSet, HashMap};

use super::{EngineConfig, EventKind, EventRecord, LevelMode, PopulationState};
use crate::error::{Error, Result};
use crate::levels::{flow_unchecked, level_preimage, Level, LevelParams};

struct Life {
    birth_time: f64,
    birth_level: f64,
    parent: Option<u64>,
    end: Option<f64>,
}

fn lives(log: &[EventRecord]) -> HashMap<u64, Life> {
    let mut out = HashMap::with_capacity(log.len());
    for rec in log {
        match rec.kind {
            EventKind::Birth | EventKind::Immigrate => {
                out.insert(
                    rec.id,
                    Life { birth_time: rec.time, birth_level: rec.level, parent: rec.parent_id, end: None },
                );
            }
            EventKind::Death | EventKind::Catastrophe => {
                if let Some(l) = out.get_mut(&rec.id) {
                    l.end = Some(rec.time);
                }
            }
        }
    }
    out
}

fn alive_at(l: &Life, t: f64) -> bool {
    l.birth_time <= t && l.end.is_none_or(|e| e > t)
}

fn checked<'a>(state: &'a PopulationState, t: f64, horizon: f64) -> Result<&'a [EventRecord]> {
    let log = state
        .log()
        .ok_or_else(|| Error::State("genealogy recording is off".into()))?;
    if !(t >= 0.0) || !(t < horizon) || horizon > state.now() {
        return Err(Error::domain(format!(
            "ancestor queries need 0 <= t < T <= now (t={t}, T={horizon}, now={})",
            state.now()
        )));
    }
    Ok(log)
}

fn barrier_params(cfg: &EngineConfig) -> Result<LevelParams> {
    let v = &cfg.variants;
    let p = cfg.model.level_params().filter(|p| p.a > 0.0).ok_or_else(|| {
        Error::Unsupported("the ancestor barrier needs constant coefficients with a > 0".into())
    })?;
    if v.multitype.is_some()
        || v.catastrophe.is_some()
        || v.environment.is_some()
        || v.offspring.is_some()
        || cfg.model.level_mode != LevelMode::Uniform
    {
        return Err(Error::Unsupported(
            "the ancestor barrier is defined for the base level flow only".into(),
        ));
    }
    Ok(p)
}

/// Particles alive at `t` whose level lies below the barrier, the level at
/// `t` whose flow reaches the ceiling exactly at `horizon`. These are exactly
/// the time-`t` particles with a descendant alive at `horizon`. Sorted ids.
pub fn ancestors_at(state: &PopulationState, t: f64, horizon: f64, cfg: &EngineConfig) -> Result<Vec<u64>> {
    let log = checked(state, t, horizon)?;
    let p = barrier_params(cfg)?;
    let barrier = level_preimage(p.r, horizon - t, &p)?;
    let mut out: Vec<u64> = lives(log)
        .into_iter()
        .filter(|(_, l)| alive_at(l, t))
        .filter(|(_, l)| match flow_unchecked(l.birth_level, t - l.birth_time, p.a, p.b) {
            Level::Finite(u) => u < barrier,
            Level::Infinite => false,
        })
        .map(|(id, _)| id)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// The same set found by walking parent links back from every particle
/// alive at `horizon`. Sorted ids.
pub fn parent_pointer_ancestors(state: &PopulationState, t: f64, horizon: f64) -> Result<Vec<u64>> {
    let log = checked(state, t, horizon)?;
    let lives = lives(log);
    let mut found = BTreeSet::new();
    for (&id, life) in &lives {
        if !alive_at(life, horizon) {
            continue;
        }
        let (mut cur, mut l) = (id, life);
        loop {
            if l.birth_time <= t {
                found.insert(cur);
                break;
            }
            match l.parent.and_then(|pid| lives.get(&pid).map(|pl| (pid, pl))) {
                Some((pid, pl)) => {
                    cur = pid;
                    l = pl;
                }
                None => break,
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Ancestor-set sizes at each of `times` (each `< horizon`).
pub fn ancestor_counts(
    state: &PopulationState,
    times: &[f64],
    horizon: f64,
    cfg: &EngineConfig,
) -> Result<Vec<usize>> {
    times.iter().map(|&t| ancestors_at(state, t, horizon, cfg).map(|v| v.len())).collect()
}
