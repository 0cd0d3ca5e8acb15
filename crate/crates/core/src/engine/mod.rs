//! Exact event-driven simulation of the level particle system.
//!
//! Every particle carries a level in `[0, r)` that follows a deterministic
//! flow between events; it dies when the level reaches `r` and gives birth by
//! thinning against a constant bound. Events are kept in a binary heap keyed
//! by `(time, particle id, kind)`. Cached events are invalidated by per-particle
//! epochs, and all candidates are redrawn at the start of each `advance`
//! (every proposal stream is memoryless, so this is exact).

mod genealogy;
mod log;
mod model;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

pub use genealogy::{ancestor_counts, ancestors_at, parent_pointer_ancestors};
pub use log::{write_event_log, EventKind, EventRecord};
pub use model::{
    motion_step, EngineConfig, LevelMode, Location, LocationLaw, Mode, Model, Motion, RateFn, Rates, Variants,
};

use crate::error::{Error, Result};
use crate::levels::{
    exp_sample, exp_to_uniform, flow_unchecked, hit_time_unchecked, multi_drift_unchecked, next_birth_before,
    uniform_between, Level, LevelParams, Rk4,
};
use crate::rng::{ReplicateStreams, StreamRng, GLOBAL_STREAM, INIT_STREAM};
use crate::variants::{immigration_events, multi_offspring_birth, multitype_birth, Arrival, RhoMap};

/// A living particle.
#[derive(Debug, Clone)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_time: f64,
    /// Level at the state's current time (an exponential-mode level is the
    /// unbounded coordinate `z`).
    pub level: f64,
    pub location: Location,
    pub immortal: bool,
    level_time: f64,
    birth_epoch: u32,
    death_epoch: u32,
    death_time: Option<f64>,
    pending_child: f64,
    rng: StreamRng,
}

/// Running totals kept by a population.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub births: u64,
    pub deaths: u64,
    pub immigrants: u64,
    pub catastrophes: u64,
    /// Particles present at a catastrophe, and those that survived it.
    pub catastrophe_exposed: u64,
    pub catastrophe_survivors: u64,
    /// Thinning acceptances that exceeded the declared bound `a_max`.
    pub bound_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Death,
    Birth,
    Proposal,
    Immigration,
    Catastrophe,
    EnvJump,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    id: u64,
    kind: Kind,
    slot: usize,
    epoch: u32,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
            .then(self.kind.cmp(&other.kind))
            .then(self.slot.cmp(&other.slot))
    }
}

type Queue = BinaryHeap<Reverse<Scheduled>>;

#[derive(Debug, Clone, Copy)]
enum Kinetics {
    Riccati { a: f64, b: f64 },
    Exponential { a: f64, b: f64 },
    Polynomial { b: f64 },
    Path,
}

/// The living population of one replicate.
#[derive(Debug, Clone)]
pub struct PopulationState {
    now: f64,
    r: f64,
    slots: Vec<Option<Particle>>,
    free: Vec<usize>,
    alive: usize,
    next_id: u64,
    env: Option<usize>,
    streams: ReplicateStreams,
    global: StreamRng,
    log: Option<Vec<EventRecord>>,
    counters: Counters,
}

/// `n0` particles with i.i.d. levels (uniform on `[0, r)`, or exponential
/// with mean `r` in exponential mode) and ids `1..=n0`. With the immortal
/// variant, particle 1 is the immortal one at level 0.
pub fn init_uniform(n0: usize, cfg: &EngineConfig, streams: ReplicateStreams) -> Result<PopulationState> {
    cfg.validate()?;
    if cfg.variants.immortal && n0 == 0 {
        return Err(Error::domain("the immortal particle needs n0 >= 1"));
    }
    let mut state = PopulationState::empty(cfg, streams);
    for i in 0..n0 {
        let immortal = cfg.variants.immortal && i == 0;
        state.spawn_initial(cfg, immortal);
    }
    Ok(state)
}

/// Poisson configuration of intensity `y` per unit level on `[0, Lambda_max)`.
pub fn init_poisson_levels(y: f64, cfg: &EngineConfig, streams: ReplicateStreams) -> Result<PopulationState> {
    cfg.validate()?;
    if cfg.model.mode == Mode::Finite {
        return Err(Error::config("Poisson initial levels need ceiling mode"));
    }
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::domain(format!("mass density must be finite and >= 0 (got {y})")));
    }
    let mut init = streams.stream(INIT_STREAM);
    let n = crate::oracle::poisson_sample(y * cfg.model.r, &mut init);
    let mut state = PopulationState::empty(cfg, streams);
    for _ in 0..n {
        state.spawn_initial(cfg, false);
    }
    Ok(state)
}

impl PopulationState {
    fn empty(cfg: &EngineConfig, streams: ReplicateStreams) -> Self {
        let mut global = streams.stream(GLOBAL_STREAM);
        let env = cfg.variants.environment.as_ref().map(|spec| {
            // validated, so the stationary law exists
            let pi = spec.derived().map(|d| d.pi).unwrap_or_else(|_| vec![1.0]);
            let mut x = global.random::<f64>();
            pi.iter()
                .position(|&p| {
                    let hit = x < p;
                    x -= p;
                    hit
                })
                .unwrap_or(pi.len() - 1)
        });
        Self {
            now: 0.0,
            r: cfg.model.r,
            slots: Vec::new(),
            free: Vec::new(),
            alive: 0,
            next_id: 1,
            env,
            streams,
            global,
            log: cfg.model.record_genealogy.then(Vec::new),
            counters: Counters::default(),
        }
    }

    fn spawn_initial(&mut self, cfg: &EngineConfig, immortal: bool) {
        let r = cfg.model.r;
        let mode = cfg.model.level_mode;
        let law = &cfg.model.initial_location;
        self.spawn(None, EventKind::Birth, immortal, |rng| {
            let level = if immortal {
                0.0
            } else {
                match mode {
                    LevelMode::Uniform => uniform_between(0.0, r, rng),
                    LevelMode::Exponential => r * Distribution::<f64>::sample(&Exp1, rng),
                }
            };
            (level, law.sample(rng))
        });
    }

    /// Creates a particle at the current time; `init` draws its level and
    /// location from the particle's own stream.
    fn spawn(
        &mut self,
        parent_id: Option<u64>,
        kind: EventKind,
        immortal: bool,
        init: impl FnOnce(&mut StreamRng) -> (f64, Location),
    ) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        let mut rng = self.streams.stream(id);
        let (level, location) = init(&mut rng);
        if let Some(log) = &mut self.log {
            log.push(EventRecord {
                kind,
                time: self.now,
                id,
                parent_id,
                level,
                location: location.clone(),
            });
        }
        let p = Particle {
            id,
            parent_id,
            birth_time: self.now,
            level,
            location,
            immortal,
            level_time: self.now,
            birth_epoch: 0,
            death_epoch: 0,
            death_time: None,
            pending_child: 0.0,
            rng,
        };
        self.alive += 1;
        match self.free.pop() {
            Some(slot) => {
                self.slots[slot] = Some(p);
                slot
            }
            None => {
                self.slots.push(Some(p));
                self.slots.len() - 1
            }
        }
    }

    fn remove(&mut self, slot: usize, time: f64, kind: EventKind, level: f64) {
        let p = self.slots[slot].take().expect("removing an empty slot");
        self.free.push(slot);
        self.alive -= 1;
        self.counters.deaths += 1;
        if let Some(log) = &mut self.log {
            log.push(EventRecord {
                kind,
                time,
                id: p.id,
                parent_id: p.parent_id,
                level,
                location: p.location,
            });
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// The ceiling `r` of the model this population was created for.
    pub fn ceiling(&self) -> f64 {
        self.r
    }

    pub fn len(&self) -> usize {
        self.alive
    }

    pub fn is_empty(&self) -> bool {
        self.alive == 0
    }

    pub fn particles(&self) -> impl Iterator<Item = &Particle> {
        self.slots.iter().flatten()
    }

    pub fn levels(&self) -> Vec<f64> {
        self.particles().map(|p| p.level).collect()
    }

    pub fn min_level(&self) -> Option<f64> {
        self.particles().map(|p| p.level).reduce(f64::min)
    }

    pub fn env_state(&self) -> Option<usize> {
        self.env
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// The event log, when genealogy recording is on.
    pub fn log(&self) -> Option<&[EventRecord]> {
        self.log.as_deref()
    }

    pub(crate) fn global_rng(&mut self) -> &mut StreamRng {
        &mut self.global
    }

    fn kinetics(&self, cfg: &EngineConfig, loc: &Location) -> Kinetics {
        if let Some(env) = &cfg.variants.environment {
            let l = self.env.unwrap_or(0);
            return Kinetics::Riccati {
                a: env.a[l],
                b: env.speedup.sqrt() * env.b[l],
            };
        }
        let (a, b) = cfg.model.rates.at(loc);
        if cfg.model.level_mode == LevelMode::Exponential {
            return Kinetics::Exponential { a, b };
        }
        if let Some(o) = &cfg.variants.offspring {
            return match o.as_single() {
                Some(a1) => Kinetics::Riccati { a: a1, b },
                None => Kinetics::Polynomial { b },
            };
        }
        if cfg.model.rates.depends_on_position() && matches!(cfg.model.motion, Motion::Brownian { .. }) {
            return Kinetics::Path;
        }
        Kinetics::Riccati { a, b }
    }

    /// Moves particle `slot` to time `t`. Returns the crossing time if the
    /// particle reached the ceiling on the way (path-integrated particles
    /// only; the others have scheduled deaths).
    fn sync(&mut self, slot: usize, t: f64, cfg: &EngineConfig) -> Option<f64> {
        let kin = {
            let p = self.slots[slot].as_ref().expect("syncing an empty slot");
            if t <= p.level_time {
                return None;
            }
            self.kinetics(cfg, &p.location)
        };
        let r = self.r;
        let below = r.next_down();
        let p = self.slots[slot].as_mut().unwrap();
        let dt = t - p.level_time;
        match kin {
            Kinetics::Riccati { a, b } => {
                p.level = match flow_unchecked(p.level, dt, a, b) {
                    Level::Finite(u) => u.min(below),
                    Level::Infinite => below,
                };
            }
            Kinetics::Exponential { a, b } => {
                let u = match flow_unchecked(exp_to_uniform(p.level, r), dt, a, b) {
                    Level::Finite(u) => u.min(below),
                    Level::Infinite => below,
                };
                p.level = -r * (-u / r).ln_1p();
            }
            Kinetics::Polynomial { b } => {
                let o = cfg.variants.offspring.as_ref().expect("polynomial kinetics without offspring rates");
                p.level = Rk4::default()
                    .flow(|u| multi_drift_unchecked(u, o, b, r), p.level, dt)
                    .min(below);
            }
            Kinetics::Path => {
                let step = cfg.model.path_step;
                let mut s = p.level_time;
                while s < t {
                    let h = step.min(t - s);
                    let (a, b) = cfg.model.rates.at(&p.location);
                    match flow_unchecked(p.level, h, a, b) {
                        Level::Finite(u) if u < r => p.level = u,
                        _ => {
                            let cross = hit_time_unchecked(p.level, r, a, b).unwrap_or(h).min(h);
                            return Some(s + cross);
                        }
                    }
                    model::move_in_place(&mut p.location, h, &cfg.model.motion, &mut p.rng);
                    s += h;
                }
                p.level_time = t;
                return None;
            }
        }
        model::move_in_place(&mut p.location, dt, &cfg.model.motion, &mut p.rng);
        p.level_time = t;
        None
    }

    /// Draws fresh birth and/or death candidates for particle `slot`.
    fn arm(&mut self, slot: usize, cfg: &EngineConfig, horizon: f64, q: &mut Queue, birth: bool, death: bool) {
        let kin = {
            let p = self.slots[slot].as_ref().unwrap();
            self.kinetics(cfg, &p.location)
        };
        let r = self.r;
        let p = self.slots[slot].as_mut().unwrap();
        let lt = p.level_time;
        if death {
            p.death_epoch = p.death_epoch.wrapping_add(1);
            p.death_time = match kin {
                Kinetics::Riccati { a, b } => hit_time_unchecked(p.level, r, a, b),
                Kinetics::Exponential { a, b } => hit_time_unchecked(exp_to_uniform(p.level, r), r, a, b),
                Kinetics::Polynomial { b } => {
                    let o = cfg.variants.offspring.as_ref().unwrap();
                    Rk4::default().hit_time(|u| multi_drift_unchecked(u, o, b, r), p.level, r, horizon - lt)
                }
                Kinetics::Path => None,
            }
            .map(|d| lt + d);
            if let Some(td) = p.death_time.filter(|&td| td <= horizon) {
                q.push(Reverse(Scheduled { time: td, id: p.id, kind: Kind::Death, slot, epoch: p.death_epoch }));
            }
        }
        if birth {
            p.birth_epoch = p.birth_epoch.wrapping_add(1);
            let proposal = |rate: f64, rng: &mut StreamRng| lt + exp_sample(rate, rng);
            let (time, kind) = match kin {
                Kinetics::Riccati { a, b } | Kinetics::Exponential { a, b } => {
                    let u0 = match kin {
                        Kinetics::Exponential { .. } => exp_to_uniform(p.level, r),
                        _ => p.level,
                    };
                    let limit = p.death_time.map_or(f64::INFINITY, |td| td - lt).min(horizon - lt);
                    match next_birth_before(u0, &LevelParams { a, b, r }, limit, &mut p.rng) {
                        Some((d, child)) => {
                            p.pending_child = child;
                            (lt + d, Kind::Birth)
                        }
                        None => return,
                    }
                }
                Kinetics::Polynomial { .. } => {
                    let o = cfg.variants.offspring.as_ref().unwrap();
                    (proposal(o.rate_bound(r), &mut p.rng), Kind::Proposal)
                }
                Kinetics::Path => {
                    let a_max = cfg.model.rates.a_max().unwrap_or(0.0);
                    if !(a_max > 0.0) {
                        return;
                    }
                    (proposal(2.0 * a_max * r, &mut p.rng), Kind::Proposal)
                }
            };
            if time <= horizon {
                q.push(Reverse(Scheduled { time, id: p.id, kind, slot, epoch: p.birth_epoch }));
            }
        }
    }

    fn arm_all(&mut self, cfg: &EngineConfig, horizon: f64, q: &mut Queue) {
        for slot in 0..self.slots.len() {
            if self.slots[slot].is_some() {
                self.arm(slot, cfg, horizon, q, true, true);
            }
        }
    }

    /// Syncs everyone to `t`, removing path-integrated particles that
    /// crossed the ceiling on the way.
    fn sync_all(&mut self, t: f64, cfg: &EngineConfig) {
        for slot in 0..self.slots.len() {
            if self.slots[slot].is_some() {
                if let Some(cross) = self.sync(slot, t, cfg) {
                    self.remove(slot, cross, EventKind::Death, self.r);
                }
            }
        }
    }

    /// Multiplies every level by `rho` at the current time; levels reaching
    /// the ceiling die. Returns the number killed.
    pub(crate) fn apply_catastrophe(&mut self, cfg: &EngineConfig, rho: &RhoMap) -> usize {
        self.catastrophe_at(self.now, cfg, rho)
    }

    fn catastrophe_at(&mut self, t: f64, cfg: &EngineConfig, rho: &RhoMap) -> usize {
        self.sync_all(t, cfg);
        self.counters.catastrophes += 1;
        let r = self.r;
        let mut killed = 0;
        for slot in 0..self.slots.len() {
            let Some(p) = self.slots[slot].as_mut() else { continue };
            let scaled = p.level * rho.at(&p.location);
            self.counters.catastrophe_exposed += 1;
            if scaled >= r {
                self.remove(slot, t, EventKind::Catastrophe, scaled);
                killed += 1;
            } else {
                p.level = scaled;
                self.counters.catastrophe_survivors += 1;
            }
        }
        killed
    }

    /// Simulates exactly up to `t_target`.
    pub fn advance(&mut self, t_target: f64, cfg: &EngineConfig) -> Result<()> {
        if !(t_target >= self.now) || !t_target.is_finite() {
            return Err(Error::domain(format!(
                "advance needs a finite target >= now (now={}, target={t_target})",
                self.now
            )));
        }
        if cfg.model.r != self.r {
            return Err(Error::State("configuration ceiling differs from the population's".into()));
        }
        cfg.validate()?;
        if t_target == self.now {
            return Ok(());
        }
        let log_start = self.log.as_ref().map_or(0, Vec::len);
        let mut q = Queue::new();
        self.arm_all(cfg, t_target, &mut q);

        let arrivals: Vec<Arrival> = match &cfg.variants.immigration {
            Some(imm) => immigration_events(imm, self.r, self.now, t_target, &mut self.global),
            None => Vec::new(),
        };
        for (i, a) in arrivals.iter().enumerate() {
            q.push(Reverse(Scheduled { time: a.time, id: 0, kind: Kind::Immigration, slot: i, epoch: 0 }));
        }
        let global = |q: &mut Queue, time: f64, kind: Kind| {
            if time <= t_target {
                q.push(Reverse(Scheduled { time, id: 0, kind, slot: 0, epoch: 0 }));
            }
        };
        if let Some(c) = cfg.variants.catastrophe.as_ref().filter(|c| c.event_rate > 0.0) {
            global(&mut q, self.now + exp_sample(c.event_rate, &mut self.global), Kind::Catastrophe);
        }
        if let Some(rate) = self.env_exit_rate(cfg) {
            global(&mut q, self.now + exp_sample(rate, &mut self.global), Kind::EnvJump);
        }

        while let Some(Reverse(ev)) = q.pop() {
            if ev.time > t_target {
                break;
            }
            let t = ev.time;
            match ev.kind {
                Kind::Death => {
                    if self.slots[ev.slot].as_ref().is_some_and(|p| p.id == ev.id && p.death_epoch == ev.epoch) {
                        self.now = t;
                        let level = match cfg.model.level_mode {
                            LevelMode::Uniform => self.r,
                            LevelMode::Exponential => f64::INFINITY,
                        };
                        self.remove(ev.slot, t, EventKind::Death, level);
                    }
                }
                Kind::Birth | Kind::Proposal => {
                    if self.slots[ev.slot].as_ref().is_some_and(|p| p.id == ev.id && p.birth_epoch == ev.epoch) {
                        self.now = t;
                        self.birth_event(ev.slot, ev.kind, t, t_target, cfg, &mut q);
                    }
                }
                Kind::Immigration => {
                    self.now = t;
                    let a = arrivals[ev.slot].clone();
                    let slot = self.spawn(None, EventKind::Immigrate, false, |_| (a.level, a.location));
                    self.counters.immigrants += 1;
                    self.arm(slot, cfg, t_target, &mut q, true, true);
                }
                Kind::Catastrophe => {
                    self.now = t;
                    let spec = cfg.variants.catastrophe.as_ref().unwrap();
                    let rho = spec.sample_mark(&mut self.global).clone();
                    self.catastrophe_at(t, cfg, &rho);
                    self.arm_all(cfg, t_target, &mut q);
                    global(&mut q, t + exp_sample(spec.event_rate, &mut self.global), Kind::Catastrophe);
                }
                Kind::EnvJump => {
                    self.now = t;
                    self.sync_all(t, cfg);
                    self.jump_environment(cfg);
                    self.arm_all(cfg, t_target, &mut q);
                    if let Some(rate) = self.env_exit_rate(cfg) {
                        global(&mut q, t + exp_sample(rate, &mut self.global), Kind::EnvJump);
                    }
                }
            }
        }
        self.sync_all(t_target, cfg);
        self.now = t_target;
        if let Some(log) = &mut self.log {
            // path-integrated deaths are found late; restore time order
            log[log_start..].sort_by(|x, y| x.time.total_cmp(&y.time));
        }
        if self.counters.bound_violations > 0 {
            return Err(Error::config(format!(
                "a(x) exceeded the declared a_max in {} thinning steps",
                self.counters.bound_violations
            )));
        }
        Ok(())
    }

    fn env_exit_rate(&self, cfg: &EngineConfig) -> Option<f64> {
        let env = cfg.variants.environment.as_ref()?;
        let l = self.env?;
        let rate = -env.q[l][l] * env.speedup;
        (rate > 0.0).then_some(rate)
    }

    fn jump_environment(&mut self, cfg: &EngineConfig) {
        let env = cfg.variants.environment.as_ref().unwrap();
        let l = self.env.unwrap();
        let row = &env.q[l];
        let total = -row[l];
        let mut x = self.global.random::<f64>() * total;
        let mut next = l;
        for (j, &w) in row.iter().enumerate() {
            if j == l || w <= 0.0 {
                continue;
            }
            next = j;
            if x < w {
                break;
            }
            x -= w;
        }
        self.env = Some(next);
    }

    fn birth_event(&mut self, slot: usize, kind: Kind, t: f64, horizon: f64, cfg: &EngineConfig, q: &mut Queue) {
        if let Some(cross) = self.sync(slot, t, cfg) {
            self.remove(slot, cross, EventKind::Death, self.r);
            return;
        }
        let r = self.r;
        let kin = self.kinetics(cfg, &self.slots[slot].as_ref().unwrap().location);
        let p = self.slots[slot].as_mut().unwrap();
        let parent_id = p.id;
        let mut rearm_death = false;
        let children: Vec<(f64, Location)> = match (kind, kin) {
            (Kind::Birth, Kinetics::Exponential { .. }) => {
                let e: f64 = Exp1.sample(&mut p.rng);
                vec![(p.level + r * e, p.location.clone())]
            }
            (Kind::Birth, _) => match &cfg.variants.multitype {
                Some(spec) => {
                    let z = p.location.type_index().unwrap_or(0);
                    let mb = multitype_birth(z, p.level, r, spec, &mut p.rng);
                    rearm_death = mb.swapped;
                    p.level = mb.parent_level;
                    vec![(mb.child_level, Location::Type(mb.child_type))]
                }
                None => vec![(p.pending_child, p.location.clone())],
            },
            (_, Kinetics::Polynomial { .. }) => {
                let o = cfg.variants.offspring.as_ref().unwrap();
                multi_offspring_birth(p.level, r, o, &mut p.rng)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|v| (v, p.location.clone()))
                    .collect()
            }
            _ => {
                let a_max = cfg.model.rates.a_max().unwrap_or(0.0);
                let (a, _) = cfg.model.rates.at(&p.location);
                if a > a_max {
                    self.counters.bound_violations += 1;
                }
                if p.rng.random::<f64>() * a_max * r < a * (r - p.level) {
                    let v = uniform_between(p.level, r, &mut p.rng);
                    vec![(v, p.location.clone())]
                } else {
                    Vec::new()
                }
            }
        };
        self.arm(slot, cfg, horizon, q, true, rearm_death);
        for (level, location) in children {
            let child = self.spawn(Some(parent_id), EventKind::Birth, false, |_| (level, location));
            self.counters.births += 1;
            self.arm(child, cfg, horizon, q, true, true);
        }
    }
}

/// `#{particles with level < k}`.
pub fn observe_count(state: &PopulationState, k: f64) -> Result<usize> {
    check_window(state, k)?;
    Ok(state.particles().filter(|p| p.level < k).count())
}

/// `(1/k) sum_{level < k} f(location)`.
pub fn observe_normalized(state: &PopulationState, k: f64, f: impl Fn(&Location) -> f64) -> Result<f64> {
    check_window(state, k)?;
    Ok(state.particles().filter(|p| p.level < k).map(|p| f(&p.location)).sum::<f64>() / k)
}

fn check_window(state: &PopulationState, k: f64) -> Result<()> {
    if !(k > 0.0) || k > state.r {
        return Err(Error::domain(format!("window must satisfy 0 < K <= r (K={k}, r={})", state.r)));
    }
    Ok(())
}
