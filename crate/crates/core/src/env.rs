//! Time-evolving conductance field on ℤ^d or on the torus, realized lazily.
//!
//! Only edges that have been queried or refreshed are stored. Each edge is an
//! independent Markov process that resamples from `q` at the points of a rate-μ
//! Poisson process, so an edge last seen at time `s` is still showing the same
//! value at time `t` with probability `e^{−μ(t−s)}` and is otherwise a fresh draw.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::ConductanceLaw;

pub const MAX_DIM: usize = 4;

/// Lattice point; coordinates past the active dimension stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub [i64; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i64]) -> Self {
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    #[inline]
    pub fn step(self, dir: Direction) -> Site {
        let mut c = self.0;
        c[dir.axis as usize] += dir.sign as i64;
        Site(c)
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i64 {
        self.0[axis]
    }

    pub fn sub(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a -= b;
        }
        Site(c)
    }

    pub fn linf_distance(&self, other: &Site) -> i64 {
        self.0.iter().zip(other.0).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }
}

/// Signed unit vector `sign·e_{axis+1}` (axis is zero based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub axis: u8,
    pub sign: i8,
}

impl Direction {
    pub const PLUS_E1: Direction = Direction { axis: 0, sign: 1 };
    pub const MINUS_E1: Direction = Direction { axis: 0, sign: -1 };

    pub fn new(axis: usize, sign: i8) -> Self {
        debug_assert!(sign == 1 || sign == -1);
        Direction { axis: axis as u8, sign }
    }

    pub fn opposite(self) -> Self {
        Direction { axis: self.axis, sign: -self.sign }
    }

    /// The `2d` nearest-neighbour directions, ordered `+e1, −e1, +e2, −e2, …`.
    pub fn all(d: usize) -> impl Iterator<Item = Direction> {
        (0..d).flat_map(|a| [Direction::new(a, 1), Direction::new(a, -1)])
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.sign > 0 { '+' } else { '-' }, self.axis + 1)
    }
}

/// Undirected nearest-neighbour edge `{site, site + e_{axis+1}}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub site: Site,
    pub axis: u8,
}

impl Edge {
    /// Edge crossed when leaving `x` in direction `dir`.
    #[inline]
    pub fn from_step(x: Site, dir: Direction) -> Edge {
        if dir.sign > 0 {
            Edge { site: x, axis: dir.axis }
        } else {
            Edge { site: x.step(dir), axis: dir.axis }
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}+e{}", self.site.0, self.axis + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum Geometry {
    Lattice { d: usize },
    /// `[−m, m]^d` with period `2m+1` in every coordinate.
    Torus { d: usize, m: i64 },
}

impl Geometry {
    pub fn lattice(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Geometry::Lattice { d })
    }

    pub fn torus(d: usize, m: i64) -> Result<Self> {
        check_dim(d)?;
        if m < 2 {
            return Err(Error::InvalidGeometry(format!("torus half-width M must be >= 2, got {m}")));
        }
        Ok(Geometry::Torus { d, m })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Lattice { d } | Geometry::Torus { d, .. } => d,
        }
    }

    pub fn canonical_site(&self, x: Site) -> Site {
        match *self {
            Geometry::Lattice { .. } => x,
            Geometry::Torus { d, m } => {
                let period = 2 * m + 1;
                let mut c = x.0;
                for v in c.iter_mut().take(d) {
                    *v = (*v + m).rem_euclid(period) - m;
                }
                Site(c)
            }
        }
    }

    pub fn canonical_edge(&self, e: Edge) -> Edge {
        Edge { site: self.canonical_site(e.site), axis: e.axis }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidGeometry(format!("dimension must be in [1, {MAX_DIM}], got {d}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// Reads skip over the refresh events between queries.
    MemorylessLazy,
    /// Refreshes are driven by the infected-set bookkeeping of the regeneration construction.
    EventDriven,
}

impl EnvMode {
    fn name(self) -> &'static str {
        match self {
            EnvMode::MemorylessLazy => "memoryless_lazy",
            EnvMode::EventDriven => "event_driven",
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct EdgeState {
    value: f64,
    last: f64,
}

#[derive(Clone, Debug)]
pub struct DynEnvironment {
    geometry: Geometry,
    mu: f64,
    law: ConductanceLaw,
    mode: EnvMode,
    realized: HashMap<Edge, EdgeState>,
}

impl DynEnvironment {
    pub fn new(geometry: Geometry, mu: f64, law: ConductanceLaw, mode: EnvMode) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("refresh rate mu must be > 0, got {mu}")));
        }
        Ok(Self { geometry, mu, law, mode, realized: HashMap::new() })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn law(&self) -> &ConductanceLaw {
        &self.law
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    pub fn realized_len(&self) -> usize {
        self.realized.len()
    }

    /// Forget every realized edge. Valid at regeneration times, when every
    /// examined edge has been refreshed since it was last looked at.
    pub fn clear(&mut self) {
        self.realized.clear();
    }

    /// Drops realized edges farther than `radius` (L∞, on canonical sites) from `center`.
    pub fn sweep_far(&mut self, center: Site, radius: i64) -> usize {
        let c = self.geometry.canonical_site(center);
        let before = self.realized.len();
        self.realized.retain(|e, _| e.site.linf_distance(&c) <= radius);
        before - self.realized.len()
    }

    /// Value last recorded for `e`, if realized (no clock advance).
    pub fn peek(&self, e: Edge) -> Option<f64> {
        self.realized.get(&self.geometry.canonical_edge(e)).map(|s| s.value)
    }

    /// Conductance of `e` at time `t` in memoryless mode.
    pub fn conductance_at<R: Rng + ?Sized>(&mut self, e: Edge, t: f64, rng: &mut R) -> Result<f64> {
        if self.mode != EnvMode::MemorylessLazy {
            return Err(Error::ModeViolation { op: "conductance_at", mode: self.mode.name() });
        }
        self.evolve(e, t, rng)
    }

    /// Resample `e` from `q` at time `t` (event-driven mode only).
    pub fn force_refresh<R: Rng + ?Sized>(&mut self, e: Edge, t: f64, rng: &mut R) -> Result<f64> {
        if self.mode != EnvMode::EventDriven {
            return Err(Error::ModeViolation { op: "force_refresh", mode: self.mode.name() });
        }
        let e = self.geometry.canonical_edge(e);
        if let Some(s) = self.realized.get(&e) {
            if t < s.last {
                return Err(Error::ClockRegression { edge: e.to_string(), query: t, last: s.last });
            }
        }
        let value = self.law.sample(rng);
        self.realized.insert(e, EdgeState { value, last: t });
        Ok(value)
    }

    /// Read `e` at time `t` in event-driven mode.
    ///
    /// A `frozen` edge (its first infected copy is present) only changes through
    /// [`force_refresh`](Self::force_refresh); any other edge follows its own
    /// rate-μ refresh clock.
    pub fn examine<R: Rng + ?Sized>(&mut self, e: Edge, t: f64, frozen: bool, rng: &mut R) -> Result<f64> {
        if self.mode != EnvMode::EventDriven {
            return Err(Error::ModeViolation { op: "examine", mode: self.mode.name() });
        }
        if frozen {
            let ce = self.geometry.canonical_edge(e);
            if let Some(s) = self.realized.get_mut(&ce) {
                if t < s.last {
                    return Err(Error::ClockRegression { edge: ce.to_string(), query: t, last: s.last });
                }
                s.last = t;
                return Ok(s.value);
            }
        }
        self.evolve(e, t, rng)
    }

    fn evolve<R: Rng + ?Sized>(&mut self, e: Edge, t: f64, rng: &mut R) -> Result<f64> {
        let e = self.geometry.canonical_edge(e);
        let mu = self.mu;
        match self.realized.get_mut(&e) {
            None => {
                let value = self.law.sample(rng);
                self.realized.insert(e, EdgeState { value, last: t });
                Ok(value)
            }
            Some(s) => {
                if t < s.last {
                    return Err(Error::ClockRegression { edge: e.to_string(), query: t, last: s.last });
                }
                let dt = t - s.last;
                if dt > 0.0 {
                    let keep = (-mu * dt).exp();
                    if rng.random::<f64>() >= keep {
                        s.value = self.law.sample(rng);
                    }
                }
                s.last = t;
                Ok(s.value)
            }
        }
    }
}
