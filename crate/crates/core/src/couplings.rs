//! Pathwise couplings between walks with different biases.

use rand::Rng;
use serde::Serialize;

use crate::closed_forms::{v_asym, z_lambda};
use crate::env::{Direction, DynEnvironment, Edge, EnvMode, Geometry, Site};
use crate::error::{Error, Result};
use crate::law::ConductanceLaw;
use crate::regeneration::{estimate_speed, run_cycles_parallel, CycleCaps, InfectedSet, RegenCycleRecord};
use crate::rng::{exp_time, substream, uniform, SimRng};
use crate::stats::Z99;
use crate::walkers::{attempt, Attempt, Counts, TrajEvent, Trajectory, WalkerKind, WalkerParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Good,
    Bad,
    VeryBad,
}

/// Rates of good, bad and very bad points for biases `λ` and `λ+ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointRates {
    pub r_g: f64,
    pub r_b: f64,
    pub r_v: f64,
}

pub fn point_rates(lambda: f64, epsilon: f64, d: usize, kappa: f64) -> PointRates {
    let zx = z_lambda(lambda, d);
    let zy = z_lambda(lambda + epsilon, d);
    PointRates {
        r_g: kappa * lambda.exp() / zx,
        r_b: kappa * (2.0 * d as f64 - 2.0 + (-(lambda + epsilon)).exp()) / zy,
        r_v: kappa * ((lambda + epsilon).exp() / zy - lambda.exp() / zx),
    }
}

/// Joint direction assignment of one shared attempt point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointClass {
    pub class: Class,
    /// Case 1 to 5 of the joint partition.
    pub case: u8,
    pub x_dir: Direction,
    pub y_dir: Direction,
}

/// `k`-th of the `2d−2` transverse directions: `+e_2, …, +e_d, −e_2, …, −e_d`.
fn transverse(k: usize, d: usize) -> Direction {
    let side = d - 1;
    if k < side {
        Direction::new(1 + k, 1)
    } else {
        Direction::new(1 + (k - side).min(side - 1), -1)
    }
}

/// Classifies `U ∈ [0,1]` for the pair `X` (bias `λ`) and `Y` (bias `λ+ε`).
///
/// Case thresholds follow the point rates: case 4 ends at `1 − e^λ/Z_λ`, so
/// case 5 (both `+e_1`) has length `e^λ/Z_λ = r_g/κ`.
pub fn classify_point(u: f64, lambda: f64, epsilon: f64, d: usize) -> Result<PointClass> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("U = {u} outside [0, 1]")));
    }
    if epsilon < 0.0 {
        return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let zx = z_lambda(lambda, d);
    let zy = z_lambda(lambda + epsilon, d);
    let s = 2.0 * d as f64 - 2.0;
    let b1 = s / zy;
    let b2 = s / zx;
    let b3 = b2 + (-(lambda + epsilon)).exp() / zy;
    let b4 = 1.0 - lambda.exp() / zx;
    let (case, x_dir, y_dir) = if u < b1 {
        let k = ((u * zy) as usize).min(2 * d - 3);
        let dir = transverse(k, d);
        (1, dir, dir)
    } else if u < b2 {
        let frac = (u - b1) / (b2 - b1);
        let k = ((frac * s) as usize).min(2 * d - 3);
        (2, transverse(k, d), Direction::PLUS_E1)
    } else if u < b3 {
        (3, Direction::MINUS_E1, Direction::MINUS_E1)
    } else if u < b4 {
        (4, Direction::MINUS_E1, Direction::PLUS_E1)
    } else {
        (5, Direction::PLUS_E1, Direction::PLUS_E1)
    };
    let class = match case {
        1 | 3 => Class::Bad,
        2 | 4 => Class::VeryBad,
        _ => Class::Good,
    };
    Ok(PointClass { class, case, x_dir, y_dir })
}

/// Interval lengths of the partition, in the order good, bad, very bad.
pub fn class_lengths(lambda: f64, epsilon: f64, d: usize) -> (f64, f64, f64) {
    let zx = z_lambda(lambda, d);
    let zy = z_lambda(lambda + epsilon, d);
    let s = 2.0 * d as f64 - 2.0;
    let b1 = s / zy;
    let b2 = s / zx;
    let b3 = b2 + (-(lambda + epsilon)).exp() / zy;
    let b4 = 1.0 - lambda.exp() / zx;
    (1.0 - b4, b1 + (b3 - b2), (b2 - b1) + (b4 - b3))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SharedDraw {
    pub time: f64,
    pub u: f64,
    pub v: f64,
    pub label: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledPair {
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub shared_event_log: Vec<SharedDraw>,
    pub decoupling_time: Option<f64>,
    /// Events at which the claimed ordering failed; zero for a correct coupling.
    pub violations: u64,
}

fn blank(d: usize, horizon: f64) -> Trajectory {
    Trajectory { d, horizon, events: Vec::new(), final_position: Site::ORIGIN, counts: Counts::default() }
}

fn push(tr: &mut Trajectory, t: f64, x: Site, a: Attempt) {
    tr.counts.record(a);
    tr.events.push(TrajEvent { time: t, position: x, dir: a.dir, success: a.success });
    tr.final_position = x;
}

fn shared_env(mu: f64, law: &ConductanceLaw) -> Result<DynEnvironment> {
    DynEnvironment::new(Geometry::lattice(1)?, mu, law.clone(), EnvMode::MemorylessLazy)
}

fn check_d1_law(law: &ConductanceLaw) -> Result<()> {
    if !law.validate().bounded_support {
        return Err(Error::Capability("variable speed walks need q with bounded support".into()));
    }
    Ok(())
}

/// Variable speed walks with biases `λ` (path `a`) and `λ+ε` (path `b`) on one
/// shared environment, ordered `a ≤ b` at all times.
pub fn coupled_monotone_d1<R: Rng + ?Sized>(
    lambda: f64,
    epsilon: f64,
    mu: f64,
    law: &ConductanceLaw,
    horizon: f64,
    rng: &mut R,
) -> Result<CoupledPair> {
    if epsilon < 0.0 || lambda < 0.0 {
        return Err(Error::Domain("need lambda >= 0 and epsilon >= 0".into()));
    }
    check_d1_law(law)?;
    let kappa = law.kappa();
    let (el, ele, eml, emle) = (lambda.exp(), (lambda + epsilon).exp(), (-lambda).exp(), (-(lambda + epsilon)).exp());
    let total = ele + eml;
    let rate = kappa * total;
    let mut env = shared_env(mu, law)?;
    let mut pair = CoupledPair {
        traj_a: blank(1, horizon),
        traj_b: blank(1, horizon),
        shared_event_log: Vec::new(),
        decoupling_time: None,
        violations: 0,
    };
    let (mut xa, mut xb) = (Site::ORIGIN, Site::ORIGIN);
    let mut t = 0.0;
    loop {
        t += exp_time(rng, rate);
        if t > horizon {
            break;
        }
        let u = uniform(rng, total);
        let v = uniform(rng, kappa);
        let (da, db, label) = if u < el {
            (Some(Direction::PLUS_E1), Some(Direction::PLUS_E1), "both_right")
        } else if u < ele {
            (None, Some(Direction::PLUS_E1), "upper_right")
        } else if u < ele + emle {
            (Some(Direction::MINUS_E1), Some(Direction::MINUS_E1), "both_left")
        } else {
            (Some(Direction::MINUS_E1), None, "lower_left")
        };
        if let Some(dir) = da {
            let w = env.conductance_at(Edge::from_step(xa, dir), t, rng)?;
            let a = Attempt { dir, success: v <= w };
            if a.success {
                xa = xa.step(dir);
            }
            push(&mut pair.traj_a, t, xa, a);
        }
        if let Some(dir) = db {
            let w = env.conductance_at(Edge::from_step(xb, dir), t, rng)?;
            let a = Attempt { dir, success: v <= w };
            if a.success {
                xb = xb.step(dir);
            }
            push(&mut pair.traj_b, t, xb, a);
        }
        pair.shared_event_log.push(SharedDraw { time: t, u, v, label });
        if xa.coord(0) > xb.coord(0) {
            pair.violations += 1;
        }
    }
    Ok(pair)
}

/// Totally asymmetric walk (path `a`) against the normalized walk (path `b`) in
/// d = 1 with shared clock, direction and acceptance draws: `a ≥ b` at all times.
pub fn coupled_nvbrw_dominated_by_tasym<R: Rng + ?Sized>(
    lambda: f64,
    mu: f64,
    law: &ConductanceLaw,
    horizon: f64,
    rng: &mut R,
) -> Result<CoupledPair> {
    if lambda < 0.0 {
        return Err(Error::Domain("need lambda >= 0".into()));
    }
    check_d1_law(law)?;
    let kappa = law.kappa();
    let el = lambda.exp();
    let total = el + (-lambda).exp();
    let mut env = shared_env(mu, law)?;
    let mut pair = CoupledPair {
        traj_a: blank(1, horizon),
        traj_b: blank(1, horizon),
        shared_event_log: Vec::new(),
        decoupling_time: None,
        violations: 0,
    };
    let (mut a, mut y) = (Site::ORIGIN, Site::ORIGIN);
    let mut t = 0.0;
    loop {
        t += exp_time(rng, kappa);
        if t > horizon {
            break;
        }
        let u = uniform(rng, total);
        let v = uniform(rng, kappa);
        let ydir = if u < el { Direction::PLUS_E1 } else { Direction::MINUS_E1 };
        let wa = env.conductance_at(Edge::from_step(a, Direction::PLUS_E1), t, rng)?;
        let wy = env.conductance_at(Edge::from_step(y, ydir), t, rng)?;
        let att_a = Attempt { dir: Direction::PLUS_E1, success: v <= wa };
        let att_y = Attempt { dir: ydir, success: v <= wy };
        if att_a.success {
            a = a.step(Direction::PLUS_E1);
        }
        if att_y.success {
            y = y.step(ydir);
        }
        push(&mut pair.traj_a, t, a, att_a);
        push(&mut pair.traj_b, t, y, att_y);
        pair.shared_event_log.push(SharedDraw { time: t, u, v, label: if u < el { "right" } else { "left" } });
        if a.coord(0) < y.coord(0) {
            pair.violations += 1;
        }
    }
    Ok(pair)
}

/// Per-cycle output of the two-bias construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasPairCycle {
    pub x: RegenCycleRecord,
    pub y: RegenCycleRecord,
    pub saw_very_bad: bool,
    /// A bad point occurred before the first very bad point (or in the whole cycle if none).
    pub saw_bad_before: bool,
    /// Index among the cycle's attempts of the first very bad point.
    pub first_very_bad_index: Option<u64>,
}

impl BiasPairCycle {
    pub fn displacement_difference(&self) -> i64 {
        self.y.dx.coord(0) - self.x.dx.coord(0)
    }
}

struct Side {
    params: WalkerParams,
    env: DynEnvironment,
    infected: InfectedSet,
    x: Site,
    counts: Counts,
}

impl Side {
    fn new(params: WalkerParams) -> Result<Self> {
        let env = DynEnvironment::new(Geometry::lattice(params.d)?, params.mu, params.law.clone(), EnvMode::EventDriven)?;
        Ok(Side { params, env, infected: InfectedSet::new(), x: Site::ORIGIN, counts: Counts::default() })
    }

    fn read<R: Rng + ?Sized>(&mut self, dir: Direction, t: f64, rng: &mut R) -> Result<f64> {
        let e = Edge::from_step(self.x, dir);
        self.env.examine(e, t, self.infected.is_frozen(&e), rng)
    }

    fn settle(&mut self, a: Attempt) {
        self.infected.add(Edge::from_step(self.x, a.dir));
        if a.success {
            self.x = self.x.step(a.dir);
        }
        self.counts.record(a);
    }

    fn own_attempt<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        let Side { params, env, infected, x, .. } = self;
        let a = attempt(params, *x, rng, |e, r| env.examine(e, t, infected.is_frozen(&e), r))?;
        self.settle(a);
        Ok(())
    }

    fn remove<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        let k = rng.random_range(0..self.infected.len());
        let (e, j) = self.infected.remove_at(k);
        if j == 1 {
            self.env.force_refresh(e, t, rng)?;
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.env.clear();
        self.infected.clear();
        self.counts = Counts::default();
    }
}

/// Runs `n_cycles` regeneration cycles of the normalized walks `X` (bias `λ`)
/// and `Y` (bias `λ+ε`), coupled until the first very bad point of each cycle.
pub fn coupled_bias_pair_cycles(
    lambda: f64,
    epsilon: f64,
    mu: f64,
    law: &ConductanceLaw,
    d: usize,
    n_cycles: usize,
    rng: &mut SimRng,
) -> Result<Vec<BiasPairCycle>> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    let caps = CycleCaps::default();
    let px = WalkerParams::new(WalkerKind::Nvbrw, lambda, mu, d, law.clone())?;
    let py = WalkerParams::new(WalkerKind::Nvbrw, lambda + epsilon, mu, d, law.clone())?;
    let kappa = law.kappa();
    let mut sx = Side::new(px)?;
    let mut sy = Side::new(py)?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let t0 = t;
        let start = sx.x;
        // shared state lives in `sx` until the fork
        let mut forked: Option<(SimRng, SimRng)> = None;
        let mut saw_bad = false;
        let mut first_vb = None;
        let mut k = 0u64;
        loop {
            let size = sx.infected.len();
            let total = kappa + mu * size as f64;
            t += exp_time(rng, total);
            if t - t0 > caps.max_time || size > caps.max_copies {
                return Err(Error::CycleOverflow {
                    reason: if size > caps.max_copies { "copies" } else { "time" },
                    copies: size,
                    elapsed: t - t0,
                    mu,
                    attempt_rate: kappa,
                });
            }
            let is_attempt = size == 0 || rng.random::<f64>() * total < kappa;
            match (&mut forked, is_attempt) {
                (None, true) => {
                    let pc = classify_point(rng.random::<f64>(), lambda, epsilon, d)?;
                    let v = uniform(rng, kappa);
                    if pc.class == Class::VeryBad {
                        first_vb = Some(k);
                        sy.env = sx.env.clone();
                        sy.infected = sx.infected.clone();
                        sy.x = sx.x;
                        sy.counts = sx.counts;
                        let mut rx = substream(rng, 1);
                        let mut ry = substream(rng, 2);
                        let wx = sx.read(pc.x_dir, t, &mut rx)?;
                        let wy = sy.read(pc.y_dir, t, &mut ry)?;
                        sx.settle(Attempt { dir: pc.x_dir, success: v <= wx });
                        sy.settle(Attempt { dir: pc.y_dir, success: v <= wy });
                        forked = Some((rx, ry));
                    } else {
                        saw_bad |= pc.class == Class::Bad;
                        let w = sx.read(pc.x_dir, t, rng)?;
                        sx.settle(Attempt { dir: pc.x_dir, success: v <= w });
                    }
                    k += 1;
                }
                (None, false) => {
                    sx.remove(t, rng)?;
                }
                (Some((rx, ry)), true) => {
                    sx.own_attempt(t, rx)?;
                    sy.own_attempt(t, ry)?;
                    k += 1;
                }
                (Some((rx, ry)), false) => {
                    sx.remove(t, rx)?;
                    sy.remove(t, ry)?;
                }
            }
            if forked.is_some() {
                assert_eq!(sx.infected.len(), sy.infected.len(), "infected-set sizes diverged");
            }
            if sx.infected.is_empty() {
                break;
            }
        }
        let tau = t - t0;
        let xrec = rec(tau, sx.x.sub(start), &sx.counts);
        let yrec = match forked {
            Some(_) => rec(tau, sy.x.sub(start), &sy.counts),
            None => xrec,
        };
        out.push(BiasPairCycle {
            x: xrec,
            y: yrec,
            saw_very_bad: first_vb.is_some(),
            saw_bad_before: saw_bad,
            first_very_bad_index: first_vb,
        });
        // re-couple at the shared regeneration time
        sx.reset();
        sy.reset();
        sy.x = sx.x;
    }
    Ok(out)
}

fn rec(tau: f64, dx: Site, c: &Counts) -> RegenCycleRecord {
    RegenCycleRecord { tau, dx, n: c.n(), r: c.r(), l: c.l(), ra: c.ra(), la: c.la() }
}

/// Independent-simulation estimate of `|v^1(λ, Z_λμ + m(2d−2)) − v(λ, Z_λμ)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapEstimate {
    pub lambda: f64,
    pub gap: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub v_one_dim: f64,
    pub v_d_dim: f64,
}

pub fn dim_reduction_gap(lambda: f64, mu: f64, law: &ConductanceLaw, d: usize, n_cycles: usize, seed: u64, replicas: usize) -> Result<GapEstimate> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension reduction needs d >= 2, got {d}")));
    }
    let z = z_lambda(lambda, d);
    let m = law.mean();
    let high = WalkerParams::new(WalkerKind::Vbrw, lambda, z * mu, d, law.clone())?;
    let one = WalkerParams::new(WalkerKind::Vbrw, lambda, z * mu + m * (2.0 * d as f64 - 2.0), 1, law.clone())?;
    let eh = estimate_speed(&run_cycles_parallel(&high, n_cycles, seed, replicas)?)?;
    let e1 = estimate_speed(&run_cycles_parallel(&one, n_cycles, seed ^ 0x9e37_79b9_7f4a_7c15, replicas)?)?;
    let diff = e1.point - eh.point;
    let se = (e1.se * e1.se + eh.se * eh.se).sqrt();
    let gap = diff.abs();
    Ok(GapEstimate {
        lambda,
        gap,
        se,
        ci_low: (gap - Z99 * se).max(0.0),
        ci_high: gap + Z99 * se,
        v_one_dim: e1.point,
        v_d_dim: eh.point,
    })
}

/// `v_A(μ) − v̂(λ, μ)` in d = 1 with the simulated term's standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymGap {
    pub lambda: f64,
    pub v_asym: f64,
    pub v_hat: f64,
    pub gap: f64,
    pub se: f64,
}

pub fn asymmetric_gap(lambda: f64, mu: f64, law: &ConductanceLaw, n_cycles: usize, seed: u64, replicas: usize) -> Result<AsymGap> {
    let p = WalkerParams::new(WalkerKind::Nvbrw, lambda, mu, 1, law.clone())?;
    let est = estimate_speed(&run_cycles_parallel(&p, n_cycles, seed, replicas)?)?;
    let va = v_asym(law, mu)?;
    Ok(AsymGap { lambda, v_asym: va, v_hat: est.point, gap: va - est.point, se: est.se })
}
