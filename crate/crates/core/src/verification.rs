//! Statistical checks of the structural identities: reversibility on the torus,
//! stationarity of the environment, path likelihood ratios of the constant speed
//! walk, its bias symmetry and positivity of the speed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::env::{Direction, DynEnvironment, Edge, EnvMode, Geometry, Site};
use crate::error::{Error, Result};
use crate::law::{ConductanceLaw, LawKind};
use crate::regeneration::{estimate_speed, run_cycles_parallel, MIN_CYCLES};
use crate::rng::{par_samples, stream};
use crate::stats::{chi2_quantile, chi_square, mean_se, normal_quantile};
use crate::walkers::{cbrw_choose, run, total_jump_rate, WalkerKind, WalkerParams};

pub const ALPHA: f64 = 0.01;
const MIN_EXPECTED: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// False when the check does not apply to the given parameters; `pass` is then true.
    pub applicable: bool,
    pub n_samples: usize,
    pub notes: Vec<String>,
}

impl TestReport {
    fn below(name: &str, statistic: f64, threshold: f64, n_samples: usize, notes: Vec<String>) -> Self {
        TestReport { name: name.into(), statistic, threshold, pass: statistic <= threshold, applicable: true, n_samples, notes }
    }
}

/// Reversible measure `π(x) = e^{2λ x·e_1}` of the biased walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasMeasure {
    pub lambda: f64,
}

impl BiasMeasure {
    pub fn evaluation(&self, x: Site) -> f64 {
        (2.0 * self.lambda * x.coord(0) as f64).exp()
    }
}

/// `p_t(0,x) = e^{2λ x·e_1} p_t(0,−x)` for the variable speed walk over an
/// `m`-periodic environment, tested per displacement with `|x·e_1| ≤ 3`.
#[allow(clippy::too_many_arguments)]
pub fn detailed_balance_test<R: Rng + ?Sized>(
    m: i64,
    d: usize,
    lambda: f64,
    mu: f64,
    law: &ConductanceLaw,
    t: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<TestReport> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    let geometry = Geometry::torus(d, m)?;
    let params = WalkerParams::new(WalkerKind::Vbrw, lambda, mu, d, law.clone())?;
    let base: u64 = rng.random();
    let ends = par_samples(base, n_samples, |r| {
        let mut env = DynEnvironment::new(geometry, mu, law.clone(), EnvMode::MemorylessLazy)?;
        Ok(run(&params, &mut env, t, None, false, r)?.final_position)
    })?;
    let mut counts: BTreeMap<Site, u64> = BTreeMap::new();
    for x in ends {
        *counts.entry(x).or_default() += 1;
    }
    let neg = |x: Site| Site(x.0.map(|c| -c));
    // one representative per pair {x, −x}: the lexicographically larger one
    let mut cells: Vec<Site> = counts
        .keys()
        .flat_map(|&x| [x, neg(x)])
        .filter(|&x| x > neg(x) && x.coord(0).abs() <= 3)
        .collect();
    cells.sort();
    cells.dedup();
    if d == 1 {
        for k in 1..=3 {
            let x = Site::new(&[k]);
            if !cells.contains(&x) {
                cells.push(x);
            }
        }
    }
    let pi = BiasMeasure { lambda };
    let mut notes = Vec::new();
    let mut tested = Vec::new();
    for x in cells {
        let np = *counts.get(&x).unwrap_or(&0) as f64;
        let nm = *counts.get(&neg(x)).unwrap_or(&0) as f64;
        let n = np + nm;
        let p0 = pi.evaluation(x) / (1.0 + pi.evaluation(x));
        if n * p0.min(1.0 - p0) < MIN_EXPECTED {
            notes.push(format!("low power: displacement {:?} has {n} samples, skipped", &x.0[..d]));
            continue;
        }
        let z = (np - n * p0) / (n * p0 * (1.0 - p0)).sqrt();
        tested.push((x, z, (np / nm).ln()));
    }
    if tested.is_empty() {
        return Ok(TestReport {
            name: "detailed_balance".into(),
            statistic: 0.0,
            threshold: 0.0,
            pass: true,
            applicable: false,
            n_samples,
            notes: [notes, vec!["no displacement had enough samples".into()]].concat(),
        });
    }
    let thr = normal_quantile(1.0 - ALPHA / (2.0 * tested.len() as f64));
    let stat = tested.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    for (x, z, lr) in &tested {
        notes.push(format!(
            "x={:?}: log ratio {lr:.4} (target {:.4}), z={z:.3}",
            &x.0[..d],
            2.0 * lambda * x.coord(0) as f64
        ));
    }
    Ok(TestReport::below("detailed_balance", stat, thr, n_samples, notes))
}

/// Exact `dP^λ_ω/dP^{−λ}_ω` of a constant speed path given the conductance views at its jumps.
///
/// `views[k]` lists the `2d` conductances around `path[k]` in the order of [`Direction::all`].
pub fn cbrw_path_likelihood_ratio(path: &[Site], views: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if path.is_empty() || views.len() + 1 != path.len() {
        return Err(Error::Domain(format!("need one view per step: {} sites, {} views", path.len(), views.len())));
    }
    let mut log_w = 0.0;
    for (k, view) in views.iter().enumerate() {
        let step = path[k + 1].sub(path[k]);
        if step.0.iter().map(|c| c.abs()).sum::<i64>() != 1 {
            return Err(Error::Domain(format!("path is not nearest-neighbor at step {k}")));
        }
        if view.len() % 2 != 0 || view.is_empty() {
            return Err(Error::Domain(format!("view {k} has odd length {}", view.len())));
        }
        if view.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::AssumptionViolation(format!(
                "the constant speed walk requires positive conductances; view {k} has a zero"
            )));
        }
        log_w += total_jump_rate(view, -lambda).ln() - total_jump_rate(view, lambda).ln();
    }
    let dx = path[path.len() - 1].coord(0) - path[0].coord(0);
    Ok((2.0 * lambda * dx as f64 + log_w).exp())
}

/// `E^λ[X_n·e_1] + E^{−λ}[X_n·e_1] = 0` from independent runs of `n_steps` jumps.
pub fn cbrw_symmetry_test<R: Rng + ?Sized>(
    n_steps: u64,
    lambda: f64,
    mu: f64,
    law: &ConductanceLaw,
    d: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<TestReport> {
    if n_samples < MIN_CYCLES {
        return Err(Error::InsufficientSample { needed: MIN_CYCLES, got: n_samples });
    }
    let mut means = Vec::new();
    for l in [lambda, -lambda] {
        let params = WalkerParams::new(WalkerKind::Cbrw, l, mu, d, law.clone())?;
        let base: u64 = rng.random();
        let xs = par_samples(base, n_samples, |r| {
            let mut env = DynEnvironment::new(Geometry::lattice(d)?, mu, law.clone(), EnvMode::MemorylessLazy)?;
            Ok(run(&params, &mut env, f64::INFINITY, Some(n_steps), false, r)?.final_position.coord(0) as f64)
        })?;
        means.push(mean_se(&xs));
    }
    let sum = means[0].0 + means[1].0;
    let se = (means[0].1.powi(2) + means[1].1.powi(2)).sqrt();
    let stat = if se > 0.0 { sum.abs() / se } else if sum == 0.0 { 0.0 } else { f64::INFINITY };
    let notes = vec![format!("E^+ = {:.5} ± {:.5}, E^- = {:.5} ± {:.5}", means[0].0, means[0].1, means[1].0, means[1].1)];
    Ok(TestReport::below("cbrw_symmetry", stat, 4.0, n_samples, notes))
}

/// Checks `P^λ(path) = LR(path)·P^{−λ}(path)` exactly over all paths of `n_steps`
/// jumps in a frozen environment, then checks the weighted empirical frequencies
/// under `P^{−λ}` against `P^λ` within 4 standard errors per path.
pub fn likelihood_ratio_consistency<R: Rng + ?Sized>(
    lambda: f64,
    law: &ConductanceLaw,
    d: usize,
    n_steps: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<TestReport> {
    if !law.validate().zero_free {
        return Err(Error::Capability("CBRW requires q({0}) = 0".into()));
    }
    let mut frozen: BTreeMap<Edge, f64> = BTreeMap::new();
    let mut view_at = |x: Site, rng: &mut R| -> Vec<f64> {
        Direction::all(d).map(|dir| *frozen.entry(Edge::from_step(x, dir)).or_insert_with(|| law.sample(rng))).collect()
    };
    // enumerate all (2d)^n paths with their views
    let dirs: Vec<Direction> = Direction::all(d).collect();
    let mut paths: Vec<Vec<Site>> = vec![vec![Site::ORIGIN]];
    for _ in 0..n_steps {
        paths = paths
            .into_iter()
            .flat_map(|p| dirs.iter().map(move |&dir| [p.clone(), vec![p[p.len() - 1].step(dir)]].concat()))
            .collect();
    }
    let mut views: BTreeMap<Site, Vec<f64>> = BTreeMap::new();
    for p in &paths {
        for &x in &p[..n_steps] {
            if !views.contains_key(&x) {
                let v = view_at(x, rng);
                views.insert(x, v);
            }
        }
    }
    let prob = |p: &[Site], l: f64| -> f64 {
        p.windows(2)
            .map(|w| {
                let v = &views[&w[0]];
                let k = dirs.iter().position(|&dir| w[0].step(dir) == w[1]).unwrap();
                let c = if k < 2 { v[k] * (if k == 0 { l } else { -l }).exp() } else { v[k] };
                c / total_jump_rate(v, l)
            })
            .product()
    };
    let mut worst_exact = 0.0f64;
    let mut lrs = Vec::with_capacity(paths.len());
    for p in &paths {
        let pv: Vec<Vec<f64>> = p[..n_steps].iter().map(|x| views[x].clone()).collect();
        let lr = cbrw_path_likelihood_ratio(p, &pv, lambda)?;
        let (plus, minus) = (prob(p, lambda), prob(p, -lambda));
        worst_exact = worst_exact.max((plus - lr * minus).abs() / plus.max(f64::MIN_POSITIVE));
        lrs.push(lr);
    }
    let index: BTreeMap<&[Site], usize> = paths.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let mut hits = vec![0u64; paths.len()];
    for _ in 0..n_samples {
        let mut p = vec![Site::ORIGIN];
        for _ in 0..n_steps {
            let x = p[p.len() - 1];
            let dir = cbrw_choose(&views[&x], -lambda, rng.random())?;
            p.push(x.step(dir));
        }
        hits[index[p.as_slice()]] += 1;
    }
    let n = n_samples as f64;
    let mut stat = 0.0f64;
    for (i, p) in paths.iter().enumerate() {
        let q = hits[i] as f64 / n;
        let est = lrs[i] * q;
        // standard error under the exact sampling law, so paths never hit still count
        let pm = prob(p, -lambda);
        let se = lrs[i] * (pm * (1.0 - pm) / n).sqrt();
        let target = prob(p, lambda);
        let z = if se > 0.0 { (est - target).abs() / se } else { 0.0 };
        stat = stat.max(z);
    }
    let notes = vec![format!("max relative error of the exact identity: {worst_exact:.3e}"), format!("{} paths", paths.len())];
    let mut r = TestReport::below("likelihood_ratio", stat, 4.0, n_samples, notes);
    r.pass &= worst_exact <= 1e-12;
    Ok(r)
}

/// Lower 99% confidence bound of the regenerative speed estimate is positive.
pub fn speed_positivity_test(
    kind: WalkerKind,
    lambda: f64,
    mu: f64,
    law: &ConductanceLaw,
    d: usize,
    n_cycles: usize,
    seed: u64,
    replicas: usize,
) -> Result<TestReport> {
    let name = format!("speed_positivity_{}", kind.name());
    if lambda == 0.0 {
        return Ok(TestReport {
            name,
            statistic: 0.0,
            threshold: 0.0,
            pass: true,
            applicable: false,
            n_samples: 0,
            notes: vec!["not applicable: an unbiased walk has zero speed".into()],
        });
    }
    if lambda < 0.0 {
        return Err(Error::Domain(format!("positivity needs lambda > 0, got {lambda}")));
    }
    let params = WalkerParams::new(kind, lambda, mu, d, law.clone())?;
    let est = estimate_speed(&run_cycles_parallel(&params, n_cycles, seed, replicas)?)?;
    Ok(TestReport {
        name,
        statistic: est.ci_low,
        threshold: 0.0,
        pass: est.ci_low > 0.0,
        applicable: true,
        n_samples: n_cycles,
        notes: vec![format!("speed {:.5} in [{:.5}, {:.5}]", est.point, est.ci_low, est.ci_high)],
    })
}

/// Category of a conductance value: atom index, or one of `bins` equiprobable bins.
fn categorize(law: &ConductanceLaw, bins: usize) -> (Vec<f64>, Box<dyn Fn(f64) -> usize + Sync + '_>) {
    match law.kind() {
        LawKind::FiniteDiscrete { atoms } => {
            let probs: Vec<f64> = atoms.iter().map(|a| a.1).collect();
            let f = move |w: f64| {
                atoms
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 .0 - w).abs().total_cmp(&(b.1 .0 - w).abs()))
                    .map(|(i, _)| i)
                    .unwrap()
            };
            (probs, Box::new(f))
        }
        LawKind::UniformInterval { lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            let f = move |w: f64| (((w - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
            (vec![1.0 / bins as f64; bins], Box::new(f))
        }
    }
}

/// Marginal and three-edge joint law of the environment after time `t` against `q`.
pub fn stationarity_test<R: Rng + ?Sized>(mu: f64, law: &ConductanceLaw, t: f64, n_replicas: usize, rng: &mut R) -> Result<TestReport> {
    if t < 0.0 {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    let edges = [
        Edge::from_step(Site::ORIGIN, Direction::PLUS_E1),
        Edge::from_step(Site::new(&[1]), Direction::PLUS_E1),
        Edge::from_step(Site::new(&[5]), Direction::PLUS_E1),
    ];
    let base: u64 = rng.random();
    let samples = par_samples(base, n_replicas, |r| {
        let mut env = DynEnvironment::new(Geometry::lattice(1)?, mu, law.clone(), EnvMode::MemorylessLazy)?;
        for e in edges {
            env.conductance_at(e, 0.0, r)?;
        }
        let mut out = [0.0; 3];
        for (o, e) in out.iter_mut().zip(edges) {
            *o = env.conductance_at(e, t, r)?;
        }
        Ok(out)
    })?;
    let (probs, cat) = categorize(law, 3);
    let k = probs.len();
    let n = n_replicas as f64;
    let mut marg = vec![0.0; k];
    let mut joint = vec![0.0; k * k * k];
    for s in &samples {
        let c: Vec<usize> = s.iter().map(|&w| cat(w)).collect();
        marg[c[0]] += 1.0;
        joint[(c[0] * k + c[1]) * k + c[2]] += 1.0;
    }
    let exp_m: Vec<f64> = probs.iter().map(|p| p * n).collect();
    let mut exp_j = Vec::with_capacity(k * k * k);
    for a in &probs {
        for b in &probs {
            for c in &probs {
                exp_j.push(a * b * c * n);
            }
        }
    }
    // Bonferroni over the two statistics
    let chi_m = chi_square(&marg, &exp_m);
    let chi_j = chi_square(&joint, &exp_j);
    let thr_m = chi2_quantile(1.0 - ALPHA / 2.0, (k - 1) as f64);
    let thr_j = chi2_quantile(1.0 - ALPHA / 2.0, (k * k * k - 1) as f64);
    let stat = (chi_m / thr_m).max(chi_j / thr_j);
    let notes = vec![
        format!("marginal chi2 {chi_m:.3} (limit {thr_m:.3}, {} cells)", k),
        format!("joint chi2 {chi_j:.3} (limit {thr_j:.3}, {} cells)", k * k * k),
    ];
    Ok(TestReport::below("stationarity", stat, 1.0, n_replicas, notes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub quick: bool,
    pub all_pass: bool,
    pub reports: Vec<TestReport>,
}

/// The `verify` suite; `quick` shrinks every sample size by a factor of ten.
pub fn run_suite(seed: u64, quick: bool, replicas: usize) -> Result<SuiteReport> {
    let scale = if quick { 10 } else { 1 };
    let law = ConductanceLaw::two_point(0.1, 1.0, 0.5)?;
    let mut rng = stream(seed, u64::MAX);
    let reports = vec![
        detailed_balance_test(2, 1, 0.5, 1.0, &law, 1.0, 400_000 / scale, &mut rng)?,
        detailed_balance_test(2, 2, 0.5, 1.0, &law, 1.0, 400_000 / scale, &mut rng)?,
        stationarity_test(1.0, &law, 0.7, 100_000 / scale, &mut rng)?,
        stationarity_test(1.0, &ConductanceLaw::uniform(0.0, 1.0)?, 2.0, 100_000 / scale, &mut rng)?,
        likelihood_ratio_consistency(1.0, &law, 1, 3, 200_000 / scale, &mut rng)?,
        likelihood_ratio_consistency(0.5, &law, 2, 3, 200_000 / scale, &mut rng)?,
        cbrw_symmetry_test(50, 1.0, 1.0, &law, 1, 40_000 / scale, &mut rng)?,
        speed_positivity_test(WalkerKind::Vbrw, 1.0, 1.0, &law, 2, 40_000 / scale, rng.random(), replicas)?,
        speed_positivity_test(WalkerKind::Cbrw, 1.0, 1.0, &law, 1, 40_000 / scale, rng.random(), replicas)?,
        speed_positivity_test(WalkerKind::Nvbrw, 1.0, 1.0, &law, 1, 40_000 / scale, rng.random(), replicas)?,
    ];
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(SuiteReport { seed, quick, all_pass, reports })
}
