use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::levels::{LevelParams, OffspringRates};
use crate::variants::{CatastropheSpec, EnvironmentSpec, ImmigrationSpec, MultitypeSpec};

/// Where a particle lives: nowhere in particular, a type index, or a point.
#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Unit,
    Type(usize),
    Point(Vec<f64>),
}

impl Location {
    pub fn type_index(&self) -> Option<usize> {
        match self {
            Location::Type(t) => Some(*t),
            _ => None,
        }
    }

    pub fn coords(&self) -> &[f64] {
        match self {
            Location::Point(x) => x,
            _ => &[],
        }
    }

    /// Columns used when the location is written to CSV.
    pub fn csv_fields(&self) -> Vec<String> {
        match self {
            Location::Unit => Vec::new(),
            Location::Type(t) => vec![t.to_string()],
            Location::Point(x) => x.iter().map(|v| format!("{v:?}")).collect(),
        }
    }
}

/// Motion of particle locations between events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Frozen,
    /// Independent Brownian coordinates with variance `diffusion * dt`.
    Brownian { dim: usize, diffusion: f64 },
}

/// Moves a location over `dt` under `motion`.
pub fn motion_step<R: Rng + ?Sized>(location: &Location, dt: f64, motion: &Motion, rng: &mut R) -> Location {
    let mut out = location.clone();
    move_in_place(&mut out, dt, motion, rng);
    out
}

pub(crate) fn move_in_place<R: Rng + ?Sized>(location: &mut Location, dt: f64, motion: &Motion, rng: &mut R) {
    if dt <= 0.0 {
        return;
    }
    if let (Motion::Brownian { diffusion, .. }, Location::Point(x)) = (motion, location) {
        let sd = (diffusion * dt).sqrt();
        for c in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *c += sd * z;
        }
    }
}

/// Law of initial (and immigrant) locations.
#[derive(Debug, Clone, PartialEq)]
pub enum LocationLaw {
    Unit,
    /// Categorical law over type indices (weights need not be normalized).
    Types(Vec<f64>),
    Point(Vec<f64>),
    /// Uniform on `[-half_width, half_width]^dim`.
    UniformCube { dim: usize, half_width: f64 },
}

impl LocationLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Location {
        match self {
            LocationLaw::Unit => Location::Unit,
            LocationLaw::Types(w) => {
                let total: f64 = w.iter().sum();
                let mut x = rng.random::<f64>() * total;
                for (i, &wi) in w.iter().enumerate() {
                    if x < wi {
                        return Location::Type(i);
                    }
                    x -= wi;
                }
                Location::Type(w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0))
            }
            LocationLaw::Point(x) => Location::Point(x.clone()),
            LocationLaw::UniformCube { dim, half_width } => Location::Point(
                (0..*dim)
                    .map(|_| (2.0 * rng.random::<f64>() - 1.0) * half_width)
                    .collect(),
            ),
        }
    }

    pub(crate) fn validate(&self, errs: &mut Vec<String>) {
        match self {
            LocationLaw::Types(w) => {
                if w.is_empty() || w.iter().any(|&x| !(x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                    errs.push("type weights must be nonnegative with a positive sum".into());
                }
            }
            LocationLaw::UniformCube { half_width, .. } if !(*half_width >= 0.0) => {
                errs.push("uniform cube half width must be >= 0".into());
            }
            _ => {}
        }
    }
}

pub type RateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Branching coefficients `a(x)` and `b(x)`.
#[derive(Clone)]
pub enum Rates {
    Constant { a: f64, b: f64 },
    /// Indexed by particle type.
    PerType { a: Vec<f64>, b: Vec<f64> },
    /// Piecewise constant on the sign of the first coordinate:
    /// index 0 for `x_0 < 0`, index 1 otherwise.
    HalfSpace { a: [f64; 2], b: [f64; 2] },
    /// Arbitrary functions of the coordinates with declared global bounds
    /// `a_max >= a(x) >= a_min >= 0` and `|b(x)| <= b_max`.
    Field {
        a: RateFn,
        b: RateFn,
        a_min: f64,
        a_max: Option<f64>,
        b_max: Option<f64>,
    },
}

impl fmt::Debug for Rates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rates::Constant { a, b } => write!(f, "Constant {{ a: {a}, b: {b} }}"),
            Rates::PerType { a, b } => write!(f, "PerType {{ a: {a:?}, b: {b:?} }}"),
            Rates::HalfSpace { a, b } => write!(f, "HalfSpace {{ a: {a:?}, b: {b:?} }}"),
            Rates::Field { a_min, a_max, b_max, .. } => {
                write!(f, "Field {{ a_min: {a_min}, a_max: {a_max:?}, b_max: {b_max:?} }}")
            }
        }
    }
}

impl Rates {
    pub fn at(&self, loc: &Location) -> (f64, f64) {
        match self {
            Rates::Constant { a, b } => (*a, *b),
            Rates::PerType { a, b } => {
                let t = loc.type_index().unwrap_or(0);
                (a[t], b[t])
            }
            Rates::HalfSpace { a, b } => {
                let i = usize::from(loc.coords().first().is_none_or(|&x| x >= 0.0));
                (a[i], b[i])
            }
            Rates::Field { a, b, .. } => {
                let x = loc.coords();
                (a(x), b(x))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Rates::Constant { .. })
    }

    pub fn constant(&self) -> Option<(f64, f64)> {
        match self {
            Rates::Constant { a, b } => Some((*a, *b)),
            _ => None,
        }
    }

    /// Whether the coefficients can change while a particle moves.
    pub fn depends_on_position(&self) -> bool {
        matches!(self, Rates::HalfSpace { .. } | Rates::Field { .. })
    }

    /// Declared supremum of `a`; `None` when undeclared.
    pub fn a_max(&self) -> Option<f64> {
        match self {
            Rates::Constant { a, .. } => Some(*a),
            Rates::PerType { a, .. } => a.iter().copied().reduce(f64::max),
            Rates::HalfSpace { a, .. } => Some(a[0].max(a[1])),
            Rates::Field { a_max, .. } => *a_max,
        }
    }

    pub fn a_min(&self) -> f64 {
        match self {
            Rates::Constant { a, .. } => *a,
            Rates::PerType { a, .. } => a.iter().copied().fold(f64::INFINITY, f64::min),
            Rates::HalfSpace { a, .. } => a[0].min(a[1]),
            Rates::Field { a_min, .. } => *a_min,
        }
    }

    pub fn b_max(&self) -> Option<f64> {
        match self {
            Rates::Constant { b, .. } => Some(b.abs()),
            Rates::PerType { b, .. } => b.iter().map(|x| x.abs()).reduce(f64::max),
            Rates::HalfSpace { b, .. } => Some(b[0].abs().max(b[1].abs())),
            Rates::Field { b_max, .. } => *b_max,
        }
    }

    /// Checks `r a(x) - b(x) >= 0` wherever it can be decided.
    fn validate(&self, r: f64, errs: &mut Vec<String>) {
        let regions: Vec<(f64, f64)> = match self {
            Rates::Constant { a, b } => vec![(*a, *b)],
            Rates::PerType { a, b } => {
                if a.len() != b.len() || a.is_empty() {
                    errs.push("per-type a and b must have the same nonzero length".into());
                    return;
                }
                a.iter().copied().zip(b.iter().copied()).collect()
            }
            Rates::HalfSpace { a, b } => vec![(a[0], b[0]), (a[1], b[1])],
            Rates::Field { a_min, a_max, b_max, .. } => {
                match a_max {
                    None => errs.push("location-dependent a(x) needs a declared bound a_max".into()),
                    Some(m) if !(*m >= *a_min && m.is_finite()) => {
                        errs.push("a_max must be finite and >= a_min".into())
                    }
                    _ => {}
                }
                match b_max {
                    None => errs.push("location-dependent b(x) needs a declared bound b_max".into()),
                    Some(bm) if r * a_min - bm < 0.0 => errs.push(format!(
                        "r*a_min - b_max must be >= 0 (r={r}, a_min={a_min}, b_max={bm})"
                    )),
                    _ => {}
                }
                return;
            }
        };
        for (a, b) in regions {
            if !(a >= 0.0 && a.is_finite()) || !b.is_finite() {
                errs.push(format!("rates must be finite with a >= 0 (got a={a}, b={b})"));
            } else if r * a - b < 0.0 {
                errs.push(format!(
                    "r*a - b must be >= 0 so the projected death rate is nonnegative (r={r}, a={a}, b={b})"
                ));
            }
        }
    }
}

/// Finite ceiling, or the ceiling standing in for `r = infinity` below an
/// observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Finite,
    Ceiling { window: f64 },
}

impl Mode {
    /// Default ceiling for a window: `max(4 K, 4 b_max / a_min)`.
    pub fn default_ceiling(window: f64, rates: &Rates) -> f64 {
        let a_min = rates.a_min();
        let b_max = rates.b_max().unwrap_or(0.0);
        let from_rates = if a_min > 0.0 { 4.0 * b_max / a_min } else { 0.0 };
        (4.0 * window).max(from_rates)
    }
}

/// Law of the levels given the population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelMode {
    /// i.i.d. uniform on `[0, r)`.
    Uniform,
    /// i.i.d. exponential with mean `r`; particles die when the level
    /// escapes to infinity.
    Exponential,
}

/// The particle model: ceiling, branching coefficients, motion and level law.
#[derive(Debug, Clone)]
pub struct Model {
    /// The ceiling `r` (`Lambda_max` in ceiling mode).
    pub r: f64,
    pub rates: Rates,
    pub motion: Motion,
    pub mode: Mode,
    pub level_mode: LevelMode,
    pub initial_location: LocationLaw,
    pub record_genealogy: bool,
    /// Step of the shared path grid used with position-dependent rates.
    pub path_step: f64,
}

impl Model {
    /// Scalar model with constant coefficients and finite ceiling `r`.
    pub fn scalar(a: f64, b: f64, r: f64) -> Self {
        Self {
            r,
            rates: Rates::Constant { a, b },
            motion: Motion::Frozen,
            mode: Mode::Finite,
            level_mode: LevelMode::Uniform,
            initial_location: LocationLaw::Unit,
            record_genealogy: false,
            path_step: 1e-3,
        }
    }

    pub fn from_params(p: &LevelParams) -> Self {
        Self::scalar(p.a, p.b, p.r)
    }

    /// Ceiling-mode scalar model observed below `window`.
    pub fn ceiling(a: f64, b: f64, window: f64, lambda_max: Option<f64>) -> Self {
        let rates = Rates::Constant { a, b };
        let r = lambda_max.unwrap_or_else(|| Mode::default_ceiling(window, &rates));
        Self {
            mode: Mode::Ceiling { window },
            ..Self::scalar(a, b, r)
        }
    }

    pub fn with_genealogy(mut self) -> Self {
        self.record_genealogy = true;
        self
    }

    /// Constant-coefficient level parameters, if the rates are constant.
    pub fn level_params(&self) -> Option<LevelParams> {
        self.rates.constant().map(|(a, b)| LevelParams { a, b, r: self.r })
    }

    /// The observation window: `K` in ceiling mode, `r` otherwise.
    pub fn window(&self) -> f64 {
        match self.mode {
            Mode::Finite => self.r,
            Mode::Ceiling { window } => window,
        }
    }

    pub(crate) fn validate(&self, errs: &mut Vec<String>) {
        if !(self.r > 0.0 && self.r.is_finite()) {
            errs.push(format!("ceiling r must be finite and > 0 (got {})", self.r));
            return;
        }
        self.rates.validate(self.r, errs);
        if let Mode::Ceiling { window } = self.mode {
            if !(window > 0.0) {
                errs.push(format!("observation window must be > 0 (got {window})"));
            } else if self.r < 4.0 * window {
                errs.push(format!(
                    "ceiling Lambda_max={} must be at least 4 times the window K={window}",
                    self.r
                ));
            }
        }
        if let Motion::Brownian { dim, diffusion } = self.motion {
            if dim == 0 || !(diffusion >= 0.0) {
                errs.push("Brownian motion needs dim >= 1 and diffusion >= 0".into());
            }
            if matches!(self.rates, Rates::PerType { .. }) {
                errs.push("type-indexed rates need frozen motion".into());
            }
            match &self.initial_location {
                LocationLaw::Point(x) if x.len() != dim => {
                    errs.push("initial point dimension differs from the motion dimension".into())
                }
                LocationLaw::UniformCube { dim: d, .. } if *d != dim => {
                    errs.push("initial cube dimension differs from the motion dimension".into())
                }
                LocationLaw::Unit | LocationLaw::Types(_) => {
                    errs.push("Brownian motion needs point-valued initial locations".into())
                }
                _ => {}
            }
        }
        if self.rates.depends_on_position()
            && !matches!(self.initial_location, LocationLaw::Point(_) | LocationLaw::UniformCube { .. })
        {
            errs.push("position-dependent rates need point-valued locations".into());
        }
        if let Rates::PerType { a, .. } = &self.rates {
            match &self.initial_location {
                LocationLaw::Types(w) if w.len() == a.len() => {}
                _ => errs.push("type-indexed rates need a type-valued initial law of matching size".into()),
            }
        }
        if !(self.path_step > 0.0) {
            errs.push("path step must be > 0".into());
        }
        self.initial_location.validate(errs);
    }
}

/// Optional mechanisms layered on the base model.
#[derive(Debug, Clone, Default)]
pub struct Variants {
    /// One particle pinned at level 0 (conditioning on nonextinction).
    pub immortal: bool,
    pub immigration: Option<ImmigrationSpec>,
    pub multitype: Option<MultitypeSpec>,
    pub offspring: Option<OffspringRates>,
    pub catastrophe: Option<CatastropheSpec>,
    /// Finite-speed random environment driving the coefficients.
    pub environment: Option<EnvironmentSpec>,
}

/// Everything [`crate::engine::PopulationState::advance`] needs.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub model: Model,
    pub variants: Variants,
}

impl EngineConfig {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            variants: Variants::default(),
        }
    }

    pub fn with_variants(model: Model, variants: Variants) -> Self {
        Self { model, variants }
    }

    /// All constraint violations, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.model.validate(&mut errs);
        let v = &self.variants;
        let m = &self.model;
        if let Some(imm) = &v.immigration {
            imm.validate(&mut errs);
        }
        if let Some(mt) = &v.multitype {
            mt.validate(m.r, &mut errs);
            if v.offspring.is_some() || v.environment.is_some() {
                errs.push("multitype cannot be combined with multiple births or environments".into());
            }
        }
        if let Some(o) = &v.offspring {
            match m.rates.b_max() {
                Some(b) => {
                    if let Err(Error::Config(mut e)) = o.validate_with(b, m.r) {
                        errs.append(&mut e);
                    }
                }
                None => errs.push("multiple births need bounded b".into()),
            }
            if m.rates.depends_on_position() {
                errs.push("multiple births need position-independent b".into());
            }
        }
        if let Some(c) = &v.catastrophe {
            c.validate(&mut errs);
            if m.level_mode == LevelMode::Exponential {
                errs.push("catastrophes need uniform levels".into());
            }
        }
        if let Some(env) = &v.environment {
            env.validate(m.r, &mut errs);
            if !m.rates.is_constant() || m.level_mode != LevelMode::Uniform || v.offspring.is_some() {
                errs.push("environments need the scalar uniform-level model".into());
            }
        }
        if m.level_mode == LevelMode::Exponential
            && (!m.rates.is_constant() || v.offspring.is_some() || v.multitype.is_some() || v.immortal)
        {
            errs.push("exponential levels are provided for the scalar model only".into());
        }
        if v.immortal && m.mode != Mode::Finite {
            errs.push("the immortal particle is defined for finite r only".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
