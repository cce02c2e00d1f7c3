//! The four walk dynamics as exact event-driven samplers.
//!
//! Variable speed and normalized walks use the alternative construction: attempts
//! at a constant Poisson rate, a uniform `U ∈ [0, Z_λ)` picks the direction and a
//! uniform `V ∈ [0, κ]` accepts the jump iff `V ≤ ω_t(e)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_forms::z_lambda;
use crate::env::{Direction, DynEnvironment, Edge, EnvMode, Site, MAX_DIM};
use crate::error::{Error, Result};
use crate::law::ConductanceLaw;
use crate::rng::{exp_time, uniform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkerKind {
    Vbrw,
    Nvbrw,
    Cbrw,
    #[serde(alias = "totally_asymmetric")]
    Tasym,
}

impl WalkerKind {
    pub fn name(self) -> &'static str {
        match self {
            WalkerKind::Vbrw => "vbrw",
            WalkerKind::Nvbrw => "nvbrw",
            WalkerKind::Cbrw => "cbrw",
            WalkerKind::Tasym => "tasym",
        }
    }
}

impl std::str::FromStr for WalkerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vbrw" => Ok(WalkerKind::Vbrw),
            "nvbrw" => Ok(WalkerKind::Nvbrw),
            "cbrw" => Ok(WalkerKind::Cbrw),
            "tasym" | "totally_asymmetric" => Ok(WalkerKind::Tasym),
            other => Err(Error::Config(format!("unknown walker kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkerParams {
    pub kind: WalkerKind,
    pub lambda: f64,
    pub mu: f64,
    pub d: usize,
    pub law: ConductanceLaw,
}

impl WalkerParams {
    /// Checks that the law and dimension are admissible for `kind`.
    pub fn new(kind: WalkerKind, lambda: f64, mu: f64, d: usize, law: ConductanceLaw) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidGeometry(format!("dimension must be in [1, {MAX_DIM}], got {d}")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("mu must be > 0, got {mu}")));
        }
        if !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be finite, got {lambda}")));
        }
        let caps = law.validate();
        match kind {
            WalkerKind::Vbrw | WalkerKind::Nvbrw => {
                if lambda < 0.0 {
                    return Err(Error::Domain(format!(
                        "{} requires lambda >= 0 (negative bias is only defined for cbrw), got {lambda}",
                        kind.name()
                    )));
                }
                if !caps.bounded_support {
                    return Err(Error::Capability(format!("{} requires q to have bounded support", kind.name())));
                }
            }
            WalkerKind::Cbrw => {
                if !(caps.zero_free && caps.log_moment_finite) {
                    return Err(Error::Capability(
                        "CBRW requires q({0}) = 0 and E|log ω| < ∞ so the total jump rate never vanishes".into(),
                    ));
                }
            }
            WalkerKind::Tasym => {
                if d != 1 {
                    return Err(Error::Capability(format!("the totally asymmetric walk is defined for d = 1 only, got d = {d}")));
                }
            }
        }
        Ok(Self { kind, lambda, mu, d, law })
    }

    pub fn z_lambda(&self) -> f64 {
        z_lambda(self.lambda, self.d)
    }

    /// Rate of the Poisson clock that drives attempts (jump epochs for cbrw).
    pub fn attempt_rate(&self) -> f64 {
        let kappa = self.law.kappa();
        match self.kind {
            WalkerKind::Vbrw => kappa * self.z_lambda(),
            WalkerKind::Nvbrw | WalkerKind::Tasym => kappa,
            WalkerKind::Cbrw => 1.0,
        }
    }

    /// Edges copied into the infected set per attempt.
    pub fn edges_per_attempt(&self) -> usize {
        if self.kind == WalkerKind::Cbrw {
            2 * self.d
        } else {
            1
        }
    }
}

/// Direction selected by `U ∈ [0, Z_λ]`.
///
/// `[i−2, i−1)` gives `+e_i` and `[d+i−3, d+i−2)` gives `−e_i` for `i ≥ 2`,
/// `[2d−2, 2d−2+e^λ)` gives `+e_1` and the rest, including the right end point, `−e_1`.
pub fn attempt_direction(u: f64, lambda: f64, d: usize) -> Result<Direction> {
    let z = z_lambda(lambda, d);
    if !(0.0..=z).contains(&u) {
        return Err(Error::Domain(format!("U = {u} outside [0, Z_λ = {z}]")));
    }
    Ok(direction_unchecked(u, lambda.exp(), d))
}

#[inline]
fn direction_unchecked(u: f64, e_lambda: f64, d: usize) -> Direction {
    let side = (d - 1) as f64;
    if u < side {
        Direction::new(1 + u as usize, 1)
    } else if u < 2.0 * side {
        Direction::new(1 + (u - side) as usize, -1)
    } else if u < 2.0 * side + e_lambda {
        Direction::PLUS_E1
    } else {
        Direction::MINUS_E1
    }
}

/// `W_λ(x) = Σ_{y∼x} e^{λ(y−x)·e_1} ω({x,y})` for a view ordered `+e1, −e1, +e2, −e2, …`.
pub fn total_jump_rate(view: &[f64], lambda: f64) -> f64 {
    tilted_weights(view, lambda).sum()
}

fn tilted_weights(view: &[f64], lambda: f64) -> impl Iterator<Item = f64> + '_ {
    let (up, down) = (lambda.exp(), (-lambda).exp());
    view.iter().enumerate().map(move |(k, &w)| match k {
        0 => up * w,
        1 => down * w,
        _ => w,
    })
}

/// Conductances of the `2d` edges at `x`, in [`Direction::all`] order.
pub fn incident_edges(x: Site, d: usize) -> impl Iterator<Item = Edge> {
    Direction::all(d).map(move |dir| Edge::from_step(x, dir))
}

/// Outcome of one attempt or jump epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attempt {
    pub dir: Direction,
    pub success: bool,
}

/// Performs one attempt from `x`, reading edge values through `read`.
///
/// For cbrw `read` is called on all `2d` incident edges, for the other kinds on
/// the attempted edge only.
pub(crate) fn attempt<R, F>(p: &WalkerParams, x: Site, rng: &mut R, mut read: F) -> Result<Attempt>
where
    R: Rng + ?Sized,
    F: FnMut(Edge, &mut R) -> Result<f64>,
{
    let kappa = p.law.kappa();
    match p.kind {
        WalkerKind::Vbrw | WalkerKind::Nvbrw => {
            let u = uniform(rng, p.z_lambda());
            let dir = direction_unchecked(u, p.lambda.exp(), p.d);
            let w = read(Edge::from_step(x, dir), rng)?;
            let v = uniform(rng, kappa);
            Ok(Attempt { dir, success: v <= w })
        }
        WalkerKind::Tasym => {
            let w = read(Edge::from_step(x, Direction::PLUS_E1), rng)?;
            let v = uniform(rng, kappa);
            Ok(Attempt { dir: Direction::PLUS_E1, success: v <= w })
        }
        WalkerKind::Cbrw => {
            let mut view = [0.0; 2 * MAX_DIM];
            for (slot, e) in view.iter_mut().zip(incident_edges(x, p.d)) {
                *slot = read(e, rng)?;
            }
            let dir = cbrw_choose(&view[..2 * p.d], p.lambda, uniform(rng, 1.0))?;
            Ok(Attempt { dir, success: true })
        }
    }
}

/// Picks the neighbour with probability `ω^λ(x,y)/W_λ(x)` using `u ∈ [0,1)`.
pub fn cbrw_choose(view: &[f64], lambda: f64, u: f64) -> Result<Direction> {
    let total = total_jump_rate(view, lambda);
    if !(total > 0.0) {
        return Err(Error::AssumptionViolation("total jump rate vanished; cbrw needs q({0}) = 0".into()));
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in tilted_weights(view, lambda).enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if target < acc {
                return Ok(Direction::new(k / 2, if k % 2 == 0 { 1 } else { -1 }));
            }
        }
    }
    Ok(Direction::new(last / 2, if last % 2 == 0 { 1 } else { -1 }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajEvent {
    pub time: f64,
    /// Position after the event.
    pub position: Site,
    pub dir: Direction,
    pub success: bool,
}

/// Attempt and success tallies, indexed like [`Direction::all`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub attempts: [u64; 2 * MAX_DIM],
    pub successes: [u64; 2 * MAX_DIM],
}

impl Counts {
    #[inline]
    pub fn record(&mut self, a: Attempt) {
        let k = 2 * a.dir.axis as usize + (a.dir.sign < 0) as usize;
        self.attempts[k] += 1;
        self.successes[k] += a.success as u64;
    }

    pub fn n(&self) -> u64 {
        self.attempts.iter().sum()
    }
    pub fn r(&self) -> u64 {
        self.successes[0]
    }
    pub fn l(&self) -> u64 {
        self.successes[1]
    }
    pub fn ra(&self) -> u64 {
        self.attempts[0]
    }
    pub fn la(&self) -> u64 {
        self.attempts[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub d: usize,
    pub horizon: f64,
    /// Empty unless recording was requested.
    pub events: Vec<TrajEvent>,
    pub final_position: Site,
    pub counts: Counts,
}

impl Trajectory {
    fn empty(d: usize, horizon: f64) -> Self {
        Trajectory { d, horizon, events: Vec::new(), final_position: Site::ORIGIN, counts: Counts::default() }
    }

    /// CSV with header `time,x1,...,xd,attempt_axis,success`; the axis column is signed, e.g. `-2`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["time".into()];
        header.extend((1..=self.d).map(|i| format!("x{i}")));
        header.push("attempt_axis".into());
        header.push("success".into());
        out.write_record(&header).map_err(csv_err)?;
        for ev in &self.events {
            let mut row = vec![format!("{}", ev.time)];
            row.extend(ev.position.0[..self.d].iter().map(|c| c.to_string()));
            row.push(format!("{}", ev.dir.sign as i32 * (ev.dir.axis as i32 + 1)));
            row.push((ev.success as u8).to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Runs any walker kind up to `horizon` (for cbrw: also stops after `max_jumps` epochs if given).
///
/// Dispatches on the environment mode: the memoryless mode reads edges directly,
/// the event-driven mode runs the infected-set dynamics alongside.
pub fn run<R: Rng + ?Sized>(
    params: &WalkerParams,
    env: &mut DynEnvironment,
    horizon: f64,
    max_jumps: Option<u64>,
    record: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    if env.geometry().dim() != params.d {
        return Err(Error::InvalidGeometry(format!(
            "walker dimension {} does not match environment dimension {}",
            params.d,
            env.geometry().dim()
        )));
    }
    match env.mode() {
        EnvMode::MemorylessLazy => run_memoryless(params, env, horizon, max_jumps, record, rng),
        EnvMode::EventDriven => crate::regeneration::run_event_driven(params, env, horizon, max_jumps, record, rng),
    }
}

fn run_memoryless<R: Rng + ?Sized>(
    params: &WalkerParams,
    env: &mut DynEnvironment,
    horizon: f64,
    max_jumps: Option<u64>,
    record: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut traj = Trajectory::empty(params.d, horizon);
    if !(horizon > 0.0) {
        return Ok(traj);
    }
    let rate = params.attempt_rate();
    let cap = max_jumps.unwrap_or(u64::MAX);
    let mut t = 0.0;
    let mut x = Site::ORIGIN;
    let mut n = 0u64;
    loop {
        t += exp_time(rng, rate);
        if t > horizon || n >= cap {
            break;
        }
        let a = attempt(params, x, rng, |e, r| env.conductance_at(e, t, r))?;
        if a.success {
            x = x.step(a.dir);
        }
        traj.counts.record(a);
        n += 1;
        if record {
            traj.events.push(TrajEvent { time: t, position: x, dir: a.dir, success: a.success });
        }
    }
    traj.final_position = x;
    Ok(traj)
}

/// Convenience wrappers matching the four dynamics.
pub fn vbrw_run<R: Rng + ?Sized>(p: &WalkerParams, env: &mut DynEnvironment, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    expect_kind(p, WalkerKind::Vbrw)?;
    run(p, env, horizon, None, true, rng)
}

pub fn nvbrw_run<R: Rng + ?Sized>(p: &WalkerParams, env: &mut DynEnvironment, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    expect_kind(p, WalkerKind::Nvbrw)?;
    run(p, env, horizon, None, true, rng)
}

pub fn cbrw_run<R: Rng + ?Sized>(p: &WalkerParams, env: &mut DynEnvironment, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    expect_kind(p, WalkerKind::Cbrw)?;
    run(p, env, horizon, None, true, rng)
}

pub fn tasym_run<R: Rng + ?Sized>(p: &WalkerParams, env: &mut DynEnvironment, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    expect_kind(p, WalkerKind::Tasym)?;
    run(p, env, horizon, None, true, rng)
}

fn expect_kind(p: &WalkerParams, k: WalkerKind) -> Result<()> {
    if p.kind != k {
        return Err(Error::Misuse(format!("expected {} parameters, got {}", k.name(), p.kind.name())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Geometry;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn env(d: usize, mu: f64, law: &ConductanceLaw) -> DynEnvironment {
        DynEnvironment::new(Geometry::lattice(d).unwrap(), mu, law.clone(), EnvMode::MemorylessLazy).unwrap()
    }

    fn one() -> ConductanceLaw {
        ConductanceLaw::point(1.0).unwrap()
    }

    #[test]
    fn direction_partition() {
        assert_eq!(attempt_direction(0.5, 0.0, 2).unwrap(), Direction::new(1, 1));
        assert_eq!(attempt_direction(1.5, 0.0, 2).unwrap(), Direction::new(1, -1));
        assert_eq!(attempt_direction(2.5, 0.0, 2).unwrap(), Direction::PLUS_E1);
        assert_eq!(attempt_direction(3.5, 0.0, 2).unwrap(), Direction::MINUS_E1);
        let e = 1f64.exp();
        assert_eq!(attempt_direction(e, 1.0, 1).unwrap(), Direction::MINUS_E1);
        assert_eq!(attempt_direction(e - 1e-12, 1.0, 1).unwrap(), Direction::PLUS_E1);
        assert_eq!(attempt_direction(z_lambda(1.0, 1), 1.0, 1).unwrap(), Direction::MINUS_E1);
        assert!(attempt_direction(-0.1, 0.0, 1).is_err());
        assert!(attempt_direction(2.1, 0.0, 1).is_err());
        // d = 3: [0,1) +e2, [1,2) +e3, [2,3) −e2, [3,4) −e3
        assert_eq!(attempt_direction(1.2, 0.0, 3).unwrap(), Direction::new(2, 1));
        assert_eq!(attempt_direction(2.2, 0.0, 3).unwrap(), Direction::new(1, -1));
        assert_eq!(attempt_direction(3.9, 0.0, 3).unwrap(), Direction::new(2, -1));
    }

    #[test]
    fn jump_rate_examples() {
        assert_abs_diff_eq!(total_jump_rate(&[1.0, 1.0], 1.0), 3.0861612696304874, epsilon = 1e-12);
        assert_eq!(total_jump_rate(&[1.0; 4], 0.0), 4.0);
        assert_eq!(total_jump_rate(&[0.3, 2.5], 0.0), 2.8);
    }

    #[test]
    fn parameter_gates() {
        let perc = ConductanceLaw::two_point(0.0, 1.0, 0.5).unwrap();
        assert!(matches!(WalkerParams::new(WalkerKind::Cbrw, 1.0, 1.0, 1, perc.clone()), Err(Error::Capability(_))));
        assert!(matches!(WalkerParams::new(WalkerKind::Tasym, 1.0, 1.0, 2, perc.clone()), Err(Error::Capability(_))));
        assert!(WalkerParams::new(WalkerKind::Vbrw, -1.0, 1.0, 1, perc.clone()).is_err());
        assert!(WalkerParams::new(WalkerKind::Cbrw, -1.0, 1.0, 1, one()).is_ok());
        assert!(WalkerParams::new(WalkerKind::Vbrw, 1.0, 0.0, 1, perc).is_err());
    }

    #[test]
    fn zero_bias_is_centered() {
        let p = WalkerParams::new(WalkerKind::Vbrw, 0.0, 1.0, 1, one()).unwrap();
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = stream(11, i);
                let mut e = env(1, 1.0, &p.law);
                run(&p, &mut e, 100.0, None, false, &mut rng).unwrap().final_position.coord(0) as f64
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn full_conductance_always_succeeds_and_rate_is_z() {
        let p = WalkerParams::new(WalkerKind::Vbrw, 1.0, 1.0, 1, one()).unwrap();
        let mut rng = stream(12, 0);
        let mut e = env(1, 1.0, &p.law);
        let horizon = 20_000.0;
        let tr = vbrw_run(&p, &mut e, horizon, &mut rng).unwrap();
        assert!(tr.events.iter().all(|ev| ev.success));
        let n = tr.counts.n() as f64;
        let z = z_lambda(1.0, 1);
        assert_abs_diff_eq!(z, 3.0862, epsilon = 1e-4);
        assert!((n / horizon - z).abs() < 4.0 * (z / horizon).sqrt());
        // positions change only on successes, by one unit; times increase
        let mut prev = Site::ORIGIN;
        let mut pt = 0.0;
        for ev in &tr.events {
            assert!(ev.time > pt);
            pt = ev.time;
            let step = ev.position.sub(prev).0.iter().map(|c| c.abs()).sum::<i64>();
            assert_eq!(step, ev.success as i64);
            prev = ev.position;
        }
    }

    #[test]
    fn normalized_walk_rate_and_large_bias_speed() {
        let p = WalkerParams::new(WalkerKind::Nvbrw, 12.0, 1.0, 1, one()).unwrap();
        let mut rng = stream(13, 0);
        let mut e = env(1, 1.0, &p.law);
        let horizon = 20_000.0;
        let tr = run(&p, &mut e, horizon, None, false, &mut rng).unwrap();
        let n = tr.counts.n() as f64;
        assert!((n / horizon - 1.0).abs() < 4.0 * (1.0 / horizon).sqrt());
        let v = tr.final_position.coord(0) as f64 / horizon;
        assert!((v - 1.0).abs() < 0.03);
    }

    #[test]
    fn success_probability_is_w_over_kappa() {
        let law = ConductanceLaw::two_point(0.25, 1.0, 0.5).unwrap();
        let p = WalkerParams::new(WalkerKind::Vbrw, 0.5, 3.0, 2, law.clone()).unwrap();
        let mut rng = stream(14, 0);
        let (mut low_tries, mut low_ok, mut high_tries, mut high_ok) = (0u64, 0u64, 0u64, 0u64);
        let mut e = env(2, 3.0, &law);
        let mut t = 0.0;
        let x = Site::ORIGIN;
        for _ in 0..200_000 {
            t += 1.0;
            let mut seen = 0.0;
            let a = attempt(&p, x, &mut rng, |edge, r| {
                seen = e.conductance_at(edge, t, r)?;
                Ok(seen)
            })
            .unwrap();
            if seen == 0.25 {
                low_tries += 1;
                low_ok += a.success as u64;
            } else {
                high_tries += 1;
                high_ok += a.success as u64;
            }
        }
        assert_eq!(high_ok, high_tries);
        let f = low_ok as f64 / low_tries as f64;
        assert!((f - 0.25).abs() < 4.0 * (0.25 * 0.75 / low_tries as f64).sqrt());
    }

    #[test]
    fn cbrw_choice_probabilities() {
        let n = 200_000;
        let mut rng = stream(15, 0);
        let right = (0..n).filter(|_| cbrw_choose(&[3.0, 1.0], 0.0, rng.random()).unwrap() == Direction::PLUS_E1).count();
        let f = right as f64 / n as f64;
        assert!((f - 0.75).abs() < 4.0 * (0.75 * 0.25 / n as f64).sqrt());

        let lam = 0.7f64;
        let p = lam.exp() / (lam.exp() + (-lam).exp());
        let right = (0..n).filter(|_| cbrw_choose(&[1.0, 1.0], lam, rng.random()).unwrap() == Direction::PLUS_E1).count();
        let f = right as f64 / n as f64;
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn cbrw_epochs_are_unit_rate_and_always_move() {
        let law = ConductanceLaw::two_point(0.1, 1.0, 0.5).unwrap();
        let p = WalkerParams::new(WalkerKind::Cbrw, 0.0, 1.0, 2, law.clone()).unwrap();
        let mut rng = stream(16, 0);
        let mut e = env(2, 1.0, &law);
        let tr = cbrw_run(&p, &mut e, 50_000.0, &mut rng).unwrap();
        assert!(tr.events.iter().all(|ev| ev.success));
        let mut gaps: Vec<f64> = tr.events.windows(2).map(|w| w[1].time - w[0].time).collect();
        gaps.sort_by(f64::total_cmp);
        let ks = crate::stats::ks_one_sample(&gaps, |x| 1.0 - (-x).exp());
        assert!(ks < crate::stats::ks_critical(gaps.len(), 0.01));

        // zero bias, many short runs: centered
        let xs: Vec<f64> = (0..4000)
            .map(|i| {
                let mut rng = stream(17, i);
                let mut e = env(2, 1.0, &law);
                run(&p, &mut e, 30.0, None, false, &mut rng).unwrap().final_position.coord(0) as f64
            })
            .collect();
        let (m, sd) = crate::stats::mean_sd(&xs);
        assert!(m.abs() < 4.0 * sd / (xs.len() as f64).sqrt());
    }

    #[test]
    fn tasym_paths_are_monotone() {
        let perc = ConductanceLaw::two_point(0.0, 1.0, 0.5).unwrap();
        let p = WalkerParams::new(WalkerKind::Tasym, 0.0, 1.0, 1, perc.clone()).unwrap();
        let mut rng = stream(18, 0);
        let mut e = env(1, 1.0, &perc);
        let horizon = 300_000.0;
        let tr = tasym_run(&p, &mut e, horizon, &mut rng).unwrap();
        assert!(tr.events.windows(2).all(|w| w[1].position.coord(0) >= w[0].position.coord(0)));
        let v = tr.final_position.coord(0) as f64 / horizon;
        assert!((v - 1.0 / 3.0).abs() < 0.01, "{v}");

        let p1 = WalkerParams::new(WalkerKind::Tasym, 0.0, 1.0, 1, one()).unwrap();
        let mut e = env(1, 1.0, &p1.law);
        let tr = tasym_run(&p1, &mut e, 1000.0, &mut rng).unwrap();
        assert_eq!(tr.final_position.coord(0) as u64, tr.counts.n());
    }

    #[test]
    fn transverse_attempts_are_exchangeable() {
        let p = WalkerParams::new(WalkerKind::Vbrw, 1.0, 1.0, 3, one()).unwrap();
        let mut rng = stream(19, 0);
        let mut e = env(3, 1.0, &p.law);
        let tr = run(&p, &mut e, 50_000.0, None, false, &mut rng).unwrap();
        let a = &tr.counts.attempts;
        let transverse = [a[2], a[3], a[4], a[5]];
        let mean = transverse.iter().sum::<u64>() as f64 / 4.0;
        for c in transverse {
            assert!((c as f64 - mean).abs() < 5.0 * mean.sqrt());
        }
    }

    #[test]
    fn normalized_walk_is_a_time_change() {
        // same seed, same environment draws: the embedded jump chains coincide
        let law = ConductanceLaw::two_point(0.2, 1.0, 0.5).unwrap();
        let lam = 0.8;
        let mu = 0.5;
        let z = z_lambda(lam, 2);
        let nv = WalkerParams::new(WalkerKind::Nvbrw, lam, mu, 2, law.clone()).unwrap();
        let vb = WalkerParams::new(WalkerKind::Vbrw, lam, z * mu, 2, law.clone()).unwrap();
        let mut r1 = stream(20, 0);
        let mut r2 = stream(20, 0);
        let mut e1 = env(2, mu, &law);
        let mut e2 = env(2, z * mu, &law);
        let horizon = 200.0;
        let a = run(&nv, &mut e1, horizon, None, true, &mut r1).unwrap();
        let b = run(&vb, &mut e2, horizon / z, None, true, &mut r2).unwrap();
        let k = a.events.len().min(b.events.len());
        assert!(k > 150);
        for (x, y) in a.events.iter().zip(&b.events).take(k - 1) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.dir, y.dir);
            assert!((x.time / z - y.time).abs() < 1e-9 * x.time.max(1.0));
        }
    }

    #[test]
    fn trajectory_csv() {
        let p = WalkerParams::new(WalkerKind::Vbrw, 0.5, 1.0, 2, one()).unwrap();
        let mut rng = stream(21, 0);
        let mut e = env(2, 1.0, &p.law);
        let tr = vbrw_run(&p, &mut e, 3.0, &mut rng).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "time,x1,x2,attempt_axis,success");
        assert_eq!(lines.count(), tr.events.len());
    }

    #[test]
    fn empty_horizon() {
        let p = WalkerParams::new(WalkerKind::Vbrw, 0.5, 1.0, 1, one()).unwrap();
        let mut rng = stream(22, 0);
        let mut e = env(1, 1.0, &p.law);
        let tr = vbrw_run(&p, &mut e, 0.0, &mut rng).unwrap();
        assert!(tr.events.is_empty());
        assert_eq!(tr.final_position, Site::ORIGIN);
    }
}
