//! Infected-set regeneration construction and the cycle-based estimators.
//!
//! Every attempt adds copies of the examined edges to the infected set `I_t`;
//! copies die at total rate `μ|I_t|`, one uniformly chosen copy at a time, and
//! removing a first copy `e_{i,1}` refreshes that edge. A cycle ends when `I_t`
//! empties, at which point every edge the walker examined has been refreshed
//! since, so the realized environment can simply be dropped.

mod estimate;
mod infected;

pub use estimate::{estimate_speed, CiMethod, Interval, MeanCi, SpeedEstimate, MIN_CYCLES};
pub use infected::InfectedSet;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_forms::z_lambda;
use crate::env::{DynEnvironment, EnvMode, Geometry, Site};
use crate::error::{Error, Result};
use crate::rng::{exp_time, stream, SimRng};
use crate::stats::mean_se;
use crate::walkers::{attempt, incident_edges, Counts, TrajEvent, Trajectory, WalkerKind, WalkerParams};
use crate::walkers::csv_err;
use crate::Edge;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegenCycleRecord {
    pub tau: f64,
    pub dx: Site,
    /// Attempts (jump epochs for cbrw).
    pub n: u64,
    pub r: u64,
    pub l: u64,
    pub ra: u64,
    pub la: u64,
}

impl RegenCycleRecord {
    fn from_counts(tau: f64, dx: Site, c: &Counts) -> Self {
        RegenCycleRecord { tau, dx, n: c.n(), r: c.r(), l: c.l(), ra: c.ra(), la: c.la() }
    }
}

/// CSV with header `cycle,tau,dx1,...,dxd,N,R,L,Ra,La`.
pub fn write_records_csv<W: std::io::Write>(records: &[RegenCycleRecord], d: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["cycle".into(), "tau".into()];
    header.extend((1..=d).map(|i| format!("dx{i}")));
    header.extend(["N", "R", "L", "Ra", "La"].map(String::from));
    out.write_record(&header).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![i.to_string(), format!("{}", r.tau)];
        row.extend(r.dx.0[..d].iter().map(|c| c.to_string()));
        row.extend([r.n, r.r, r.l, r.ra, r.la].map(|v| v.to_string()));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-cycle limits on the infected-set size and the elapsed time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleCaps {
    pub max_copies: usize,
    pub max_time: f64,
}

impl Default for CycleCaps {
    fn default() -> Self {
        CycleCaps { max_copies: 1_000_000, max_time: 1e9 }
    }
}

/// Joint state of walker, environment and infected set in event-driven mode.
pub(crate) struct Process<'a> {
    params: &'a WalkerParams,
    env: &'a mut DynEnvironment,
    infected: InfectedSet,
    t: f64,
    x: Site,
    attempt_rate: f64,
}

enum Step {
    Attempt(crate::walkers::Attempt),
    Removal,
}

impl<'a> Process<'a> {
    pub(crate) fn new(params: &'a WalkerParams, env: &'a mut DynEnvironment) -> Result<Self> {
        if env.mode() != EnvMode::EventDriven {
            return Err(Error::ModeViolation { op: "regeneration", mode: "memoryless_lazy" });
        }
        if env.geometry().dim() != params.d {
            return Err(Error::InvalidGeometry(format!(
                "walker dimension {} does not match environment dimension {}",
                params.d,
                env.geometry().dim()
            )));
        }
        env.clear();
        Ok(Process { params, env, infected: InfectedSet::new(), t: 0.0, x: Site::ORIGIN, attempt_rate: params.attempt_rate() })
    }

    /// Time of the next event, without applying it.
    fn next_time<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = self.attempt_rate + self.params.mu * self.infected.len() as f64;
        (self.t + exp_time(rng, total), total)
    }

    fn apply<R: Rng + ?Sized>(&mut self, t: f64, total: f64, rng: &mut R) -> Result<Step> {
        self.t = t;
        let pick = rng.random::<f64>() * total;
        if pick < self.attempt_rate || self.infected.is_empty() {
            let geometry = self.env.geometry();
            let infected = &self.infected;
            let env = &mut *self.env;
            let a = attempt(self.params, self.x, rng, |e, r| {
                let ce = geometry.canonical_edge(e);
                env.examine(ce, t, infected.is_frozen(&ce), r)
            })?;
            if self.params.kind == WalkerKind::Cbrw {
                for e in incident_edges(self.x, self.params.d) {
                    self.infected.add(geometry.canonical_edge(e));
                }
            } else {
                self.infected.add(geometry.canonical_edge(Edge::from_step(self.x, a.dir)));
            }
            if a.success {
                self.x = self.x.step(a.dir);
            }
            Ok(Step::Attempt(a))
        } else {
            let k = rng.random_range(0..self.infected.len());
            let (e, j) = self.infected.remove_at(k);
            if j == 1 {
                self.env.force_refresh(e, t, rng)?;
            }
            if self.infected.is_empty() {
                self.env.clear();
            }
            Ok(Step::Removal)
        }
    }

    fn run_cycle<R: Rng + ?Sized>(&mut self, caps: &CycleCaps, rng: &mut R) -> Result<RegenCycleRecord> {
        debug_assert!(self.infected.is_empty());
        let t0 = self.t;
        let x0 = self.x;
        let mut counts = Counts::default();
        loop {
            let (t, total) = self.next_time(rng);
            if t - t0 > caps.max_time {
                return Err(self.overflow("time", t - t0));
            }
            match self.apply(t, total, rng)? {
                Step::Attempt(a) => {
                    counts.record(a);
                    if self.infected.len() > caps.max_copies {
                        return Err(self.overflow("copies", t - t0));
                    }
                }
                Step::Removal => {
                    if self.infected.is_empty() {
                        return Ok(RegenCycleRecord::from_counts(self.t - t0, self.x.sub(x0), &counts));
                    }
                }
            }
        }
    }

    fn overflow(&self, reason: &'static str, elapsed: f64) -> Error {
        Error::CycleOverflow {
            reason,
            copies: self.infected.len(),
            elapsed,
            mu: self.params.mu,
            attempt_rate: self.attempt_rate,
        }
    }
}

/// `n` consecutive regeneration cycles on ℤ^d.
pub fn run_cycles<R: Rng + ?Sized>(params: &WalkerParams, n: usize, rng: &mut R) -> Result<Vec<RegenCycleRecord>> {
    run_cycles_with(params, Geometry::lattice(params.d)?, n, &CycleCaps::default(), rng)
}

pub fn run_cycles_with<R: Rng + ?Sized>(
    params: &WalkerParams,
    geometry: Geometry,
    n: usize,
    caps: &CycleCaps,
    rng: &mut R,
) -> Result<Vec<RegenCycleRecord>> {
    if n == 0 {
        return Err(Error::Domain("cycle count must be >= 1".into()));
    }
    let mut env = DynEnvironment::new(geometry, params.mu, params.law.clone(), EnvMode::EventDriven)?;
    let mut p = Process::new(params, &mut env)?;
    (0..n).map(|_| p.run_cycle(caps, rng)).collect()
}

/// Splits `n` cycles over `replicas` independent streams of `seed` and
/// concatenates the batches in replica order.
pub fn run_cycles_parallel(params: &WalkerParams, n: usize, seed: u64, replicas: usize) -> Result<Vec<RegenCycleRecord>> {
    let replicas = replicas.max(1).min(n.max(1));
    let batches: Vec<Result<Vec<RegenCycleRecord>>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let share = n / replicas + usize::from(i < n % replicas);
            let mut rng: SimRng = stream(seed, i as u64);
            run_cycles(params, share, &mut rng)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}

/// Runs the joint process in event-driven mode up to `horizon`.
pub(crate) fn run_event_driven<R: Rng + ?Sized>(
    params: &WalkerParams,
    env: &mut DynEnvironment,
    horizon: f64,
    max_jumps: Option<u64>,
    record: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut traj = Trajectory { d: params.d, horizon, events: Vec::new(), final_position: Site::ORIGIN, counts: Counts::default() };
    if !(horizon > 0.0) {
        return Ok(traj);
    }
    let cap = max_jumps.unwrap_or(u64::MAX);
    let mut p = Process::new(params, env)?;
    loop {
        let (t, total) = p.next_time(rng);
        if t > horizon || traj.counts.n() >= cap {
            break;
        }
        if let Step::Attempt(a) = p.apply(t, total, rng)? {
            traj.counts.record(a);
            if record {
                traj.events.push(TrajEvent { time: t, position: p.x, dir: a.dir, success: a.success });
            }
        }
    }
    traj.final_position = p.x;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReweightedEstimate {
    pub mean: f64,
    pub se: f64,
    pub n_cycles: usize,
}

/// Estimates `E^λ[X_τ·e_1]` from unbiased normalized-walk cycles via
/// `E^0[(R−L)·e^{λ(R_a−L_a)}·(2d/Z_λ)^N]`.
pub fn reweighted_displacement(
    source: &WalkerParams,
    records: &[RegenCycleRecord],
    lambda_target: f64,
) -> Result<ReweightedEstimate> {
    if source.kind != WalkerKind::Nvbrw || source.lambda != 0.0 {
        return Err(Error::Misuse(format!(
            "reweighting needs normalized-walk cycles at lambda = 0, got {} at lambda = {}",
            source.kind.name(),
            source.lambda
        )));
    }
    if records.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    let d = source.d;
    let log_base = (2.0 * d as f64 / z_lambda(lambda_target, d)).ln();
    let terms: Vec<f64> = records
        .iter()
        .map(|r| {
            let net = r.r as f64 - r.l as f64;
            if net == 0.0 {
                return 0.0;
            }
            let log_w = lambda_target * (r.ra as f64 - r.la as f64) + r.n as f64 * log_base;
            net * log_w.exp()
        })
        .collect();
    let (mean, se) = mean_se(&terms);
    Ok(ReweightedEstimate { mean, se, n_cycles: records.len() })
}
