//! The twelve acceptance criteria at their stated tolerances and budgets.
//!
//! Each test writes one `criterion N: PASS|FAIL ...` line straight to stderr so the
//! verdicts show up in a normal `cargo test` run.

use std::f64::consts::E;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;

use dynwalk::birth_death::{ld_lambda_star, simulate_bd_return, tail_exponent_fit, BDParams, RWParams};
use dynwalk::closed_forms::{alt_first_order, nvbrw_expansion, two_point_a};
use dynwalk::couplings::{coupled_monotone_d1, coupled_nvbrw_dominated_by_tasym, CoupledPair};
use dynwalk::regeneration::{reweighted_displacement, run_cycles_parallel};
use dynwalk::rng::{par_samples, stream};
use dynwalk::stats::{linear_fit, mean_se, normal_quantile};
use dynwalk::verification::{cbrw_path_likelihood_ratio, cbrw_symmetry_test, likelihood_ratio_consistency, speed_positivity_test};
use dynwalk::walkers::{cbrw_choose, run};
use dynwalk::{estimate_speed, ConductanceLaw, Direction, DynEnvironment, EnvMode, Geometry, Site, WalkerKind, WalkerParams};

const REPLICAS: usize = 8;

fn report(n: u32, pass: bool, elapsed: Duration, limit: Duration, detail: String) {
    let ok = pass && elapsed <= limit;
    let line = format!(
        "criterion {n:>2}: {} ({:.1}s of {:.0}s) {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(elapsed <= limit, "criterion {n} over budget: {:.1}s", elapsed.as_secs_f64());
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn elliptic() -> ConductanceLaw {
    ConductanceLaw::two_point(0.1, 1.0, 0.5).unwrap()
}

fn within(x: f64, target: f64, k: f64, se: f64) -> bool {
    (x - target).abs() <= k * se
}

#[test]
fn criterion_01_vbrw_regeneration_moments() {
    let t0 = Instant::now();
    let p = WalkerParams::new(WalkerKind::Vbrw, 0.0, 2.0, 1, elliptic()).unwrap();
    let recs = run_cycles_parallel(&p, 100_000, 101, REPLICAS).unwrap();
    let (mn, sn) = mean_se(&recs.iter().map(|r| r.n as f64).collect::<Vec<_>>());
    let (mt, st) = mean_se(&recs.iter().map(|r| r.tau).collect::<Vec<_>>());
    let pass = within(mn, E, 3.0, sn) && within(mt, E / 2.0, 3.0, st);
    report(1, pass, t0.elapsed(), secs(30), format!("E[N]={mn:.4}±{sn:.4} (e), E[tau]={mt:.4}±{st:.4} (e/2)"));
}

#[test]
fn criterion_02_nvbrw_regeneration_moments() {
    let t0 = Instant::now();
    let p = WalkerParams::new(WalkerKind::Nvbrw, 1.0, 2.0, 1, elliptic()).unwrap();
    let recs = run_cycles_parallel(&p, 100_000, 102, REPLICAS).unwrap();
    let (mn, sn) = mean_se(&recs.iter().map(|r| r.n as f64).collect::<Vec<_>>());
    let target = 0.5f64.exp();
    report(2, within(mn, target, 3.0, sn), t0.elapsed(), secs(30), format!("E[N]={mn:.4}±{sn:.4} vs {target:.4}"));
}

#[test]
fn criterion_03_totally_asymmetric_speed() {
    let t0 = Instant::now();
    let half = ConductanceLaw::two_point(0.0, 1.0, 0.5).unwrap();
    let p = WalkerParams::new(WalkerKind::Tasym, 0.0, 1.0, 1, half).unwrap();
    // E[N] = e per cycle, so this is about 10^6 attempts
    let recs = run_cycles_parallel(&p, 370_000, 103, REPLICAS).unwrap();
    let attempts: u64 = recs.iter().map(|r| r.n).sum();
    let est = estimate_speed(&recs).unwrap();
    let ok_half = attempts >= 1_000_000 - 10_000 && within(est.point, 1.0 / 3.0, 3.0, est.se);

    let one = WalkerParams::new(WalkerKind::Tasym, 0.0, 1.0, 1, ConductanceLaw::point(1.0).unwrap()).unwrap();
    let recs = run_cycles_parallel(&one, 370_000, 104, REPLICAS).unwrap();
    let n: f64 = recs.iter().map(|r| r.n as f64).sum();
    let dx: f64 = recs.iter().map(|r| r.dx.coord(0) as f64).sum();
    let t: f64 = recs.iter().map(|r| r.tau).sum();
    let ok_one = dx == n && (n / t - 1.0).abs() <= 3.0 * n.sqrt() / t;
    report(
        3,
        ok_half && ok_one,
        t0.elapsed(),
        secs(60),
        format!("{attempts} attempts, v={:.4}±{:.4} (1/3); constant law v={:.5}", est.point, est.se, dx / t),
    );
}

#[test]
fn criterion_04_exponential_convergence_to_asymmetric_speed() {
    let t0 = Instant::now();
    // v_A = E[ω/(μ+ω)]/E[1/(μ+ω)] for (δ_0.1 + δ_1)/2, μ = 1, by hand
    let v_a = (0.5 * (0.1 / 1.1) + 0.5 * 0.5) / (0.5 / 1.1 + 0.5 * 0.5);
    let mut gaps = Vec::new();
    for (lambda, cycles) in [(1.0, 500_000), (2.0, 2_000_000), (3.0, 8_000_000)] {
        let p = WalkerParams::new(WalkerKind::Nvbrw, lambda, 1.0, 1, elliptic()).unwrap();
        let est = estimate_speed(&run_cycles_parallel(&p, cycles, 104 + lambda as u64, REPLICAS).unwrap()).unwrap();
        gaps.push((lambda, v_a - est.point, est.se));
    }
    let nonneg = gaps.iter().all(|g| g.1 >= -4.0 * g.2);
    let decreasing = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    let positive = gaps.iter().all(|g| g.1 > 0.0);
    let slope = if positive {
        let xs: Vec<f64> = gaps.iter().map(|g| g.0).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.1.ln()).collect();
        linear_fit(&xs, &ys).unwrap().slope
    } else {
        f64::NAN
    };
    let detail = gaps.iter().map(|g| format!("λ={}: {:.5}±{:.5}", g.0, g.1, g.2)).collect::<Vec<_>>().join(", ");
    report(4, nonneg && decreasing && slope <= -1.0, t0.elapsed(), secs(600), format!("{detail}; log slope {slope:.3}"));
}

/// Largest `a − b` over all event times of the two paths, recomputed from the trajectories.
fn worst_gap(p: &CoupledPair) -> i64 {
    let mut times: Vec<(f64, i64, i64)> = Vec::new();
    let (mut a, mut b) = (0, 0);
    let (mut i, mut j) = (0, 0);
    let (ea, eb) = (&p.traj_a.events, &p.traj_b.events);
    while i < ea.len() || j < eb.len() {
        let ta = ea.get(i).map_or(f64::INFINITY, |e| e.time);
        let tb = eb.get(j).map_or(f64::INFINITY, |e| e.time);
        let t = ta.min(tb);
        while i < ea.len() && ea[i].time == t {
            a = ea[i].position.coord(0);
            i += 1;
        }
        while j < eb.len() && eb[j].time == t {
            b = eb[j].position.coord(0);
            j += 1;
        }
        times.push((t, a, b));
    }
    times.iter().map(|x| x.1 - x.2).max().unwrap_or(0)
}

#[test]
fn criterion_05_coupling_dominance() {
    let t0 = Instant::now();
    let law = elliptic();
    let mut mono = 0u64;
    let mut dom = 0u64;
    for i in 0..1_000 {
        let p = coupled_monotone_d1(1.0, 0.5, 1.0, &law, 100.0, &mut stream(105, i)).unwrap();
        mono += p.violations + (worst_gap(&p) > 0) as u64;
        let q = coupled_nvbrw_dominated_by_tasym(1.0, 1.0, &law, 100.0, &mut stream(106, i)).unwrap();
        // here path a is the dominating one
        let swapped = CoupledPair { traj_a: q.traj_b.clone(), traj_b: q.traj_a.clone(), ..q.clone() };
        dom += q.violations + (worst_gap(&swapped) > 0) as u64;
    }
    report(5, mono == 0 && dom == 0, t0.elapsed(), secs(60), format!("monotone violations {mono}, dominance violations {dom}"));
}

#[test]
fn criterion_06_detailed_balance_on_torus() {
    let t0 = Instant::now();
    let law = elliptic();
    let p = WalkerParams::new(WalkerKind::Vbrw, 0.5, 1.0, 1, law.clone()).unwrap();
    let geometry = Geometry::torus(1, 2).unwrap();
    let ends = par_samples(106, 1_000_000, |r| {
        let mut env = DynEnvironment::new(geometry, 1.0, law.clone(), EnvMode::MemorylessLazy)?;
        Ok(run(&p, &mut env, 1.0, None, false, r)?.final_position.coord(0))
    })
    .unwrap();
    let np = ends.iter().filter(|&&x| x == 1).count() as f64;
    let nm = ends.iter().filter(|&&x| x == -1).count() as f64;
    // conditional on n+ + n−, n+ is binomial with success probability e/(1+e) under the null
    let p0 = E / (1.0 + E);
    let n = np + nm;
    let z = (np - n * p0) / (n * p0 * (1.0 - p0)).sqrt();
    let pass = z.abs() <= normal_quantile(0.995);
    report(6, pass, t0.elapsed(), secs(300), format!("n+={np} n-={nm} ratio {:.4} (e), z={z:.3}", np / nm));
}

#[test]
fn criterion_07_speed_positivity() {
    let t0 = Instant::now();
    let law = elliptic();
    let v1 = speed_positivity_test(WalkerKind::Vbrw, 1.0, 1.0, &law, 1, 100_000, 107, REPLICAS).unwrap();
    let v2 = speed_positivity_test(WalkerKind::Vbrw, 1.0, 1.0, &law, 2, 100_000, 108, REPLICAS).unwrap();
    let c = speed_positivity_test(WalkerKind::Cbrw, 1.0, 1.0, &law, 1, 100_000, 109, REPLICAS).unwrap();
    let pass = [&v1, &v2, &c].iter().all(|r| r.pass && r.applicable && r.statistic > 0.0);
    report(
        7,
        pass,
        t0.elapsed(),
        secs(300),
        format!("lower bounds vbrw d=1 {:.4}, vbrw d=2 {:.4}, cbrw {:.4}", v1.statistic, v2.statistic, c.statistic),
    );
}

/// `P^λ(path)` in a frozen d = 1 environment given by `w(edge left end)`.
fn path_probability(path: &[i64], w: &dyn Fn(i64) -> f64, lambda: f64) -> f64 {
    path.windows(2)
        .map(|s| {
            let (right, left) = (w(s[0]), w(s[0] - 1));
            let total = lambda.exp() * right + (-lambda).exp() * left;
            if s[1] > s[0] {
                lambda.exp() * right / total
            } else {
                (-lambda).exp() * left / total
            }
        })
        .product()
}

#[test]
fn criterion_08_cbrw_symmetry_and_likelihood_ratio() {
    let t0 = Instant::now();
    let law = elliptic();
    let sym = cbrw_symmetry_test(50, 1.0, 1.0, &law, 1, 100_000, &mut stream(110, 0)).unwrap();

    // frozen environment on the edges {x, x+1}, x = −3..2
    let mut rng = stream(111, 0);
    let vals: Vec<f64> = (0..6).map(|_| law.sample(&mut rng)).collect();
    let w = |x: i64| vals[(x + 3) as usize];
    let mut worst = 0.0f64;
    for code in 0..8u32 {
        let mut path = vec![0i64];
        for k in 0..3 {
            let x = *path.last().unwrap();
            path.push(if code >> k & 1 == 1 { x + 1 } else { x - 1 });
        }
        let sites: Vec<Site> = path.iter().map(|&x| Site::new(&[x])).collect();
        let views: Vec<Vec<f64>> = path[..3].iter().map(|&x| vec![w(x), w(x - 1)]).collect();
        for lambda in [0.3, 1.0, 2.0] {
            let lr = cbrw_path_likelihood_ratio(&sites, &views, lambda).unwrap();
            let plus = path_probability(&path, &w, lambda);
            let minus = path_probability(&path, &w, -lambda);
            worst = worst.max((plus - lr * minus).abs() / plus);
        }
    }
    // the sampler draws paths with the same probabilities
    let view = vec![w(0), w(-1)];
    let draws = 200_000;
    let right = (0..draws).filter(|_| cbrw_choose(&view, 1.0, rng.random()).unwrap() == Direction::PLUS_E1).count() as f64;
    let p_right = path_probability(&[0, 1], &w, 1.0);
    let sampler_ok = within(right / draws as f64, p_right, 4.0, (p_right * (1.0 - p_right) / draws as f64).sqrt());
    let mc = likelihood_ratio_consistency(1.0, &law, 1, 3, 200_000, &mut stream(112, 0)).unwrap();
    let pass = sym.pass && worst <= 1e-12 && sampler_ok && mc.pass;
    report(
        8,
        pass,
        t0.elapsed(),
        secs(120),
        format!("symmetry z={:.3}, exact LR rel. error {worst:.2e}, weighted MC max z={:.3}", sym.statistic, mc.statistic),
    );
}

#[test]
fn criterion_09_closed_form_identities() {
    let t0 = Instant::now();
    let mut rng = stream(113, 0);
    let mut rep = 0.0f64;
    let mut special = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(0.0..1.0);
        let b = rng.random_range(a + 0.01..a + 5.0);
        let law = ConductanceLaw::two_point(a, b, rng.random_range(0.05..0.95)).unwrap();
        let mu = rng.random_range(0.01..10.0);
        let d = rng.random_range(2..=4usize);
        rep = rep.max((nvbrw_expansion(&law, mu, d).unwrap().first - (2.0 * d as f64 - 2.0) * alt_first_order(&law, mu).unwrap()).abs());
        let alpha = rng.random_range(0.001..0.999);
        let mu = rng.random_range(0.01..10.0);
        let law = ConductanceLaw::two_point(alpha, 1.0, 0.5).unwrap();
        special = special.max((alt_first_order(&law, mu).unwrap() - two_point_a(mu, alpha).unwrap()).abs());
    }
    let a = two_point_a(0.1, 0.1).unwrap();
    let pass = rep <= 1e-12 && special <= 1e-12 && (a - 0.19 / 2.6).abs() < 1e-15 && a > 0.0;
    report(9, pass, t0.elapsed(), secs(1), format!("(a) {rep:.2e}, (b) {special:.2e}, (c) A(0.1,0.1)={a:.7}"));
}

#[test]
fn criterion_10_first_order_agreement() {
    let t0 = Instant::now();
    let one = ConductanceLaw::point(1.0).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in [3.0f64, 4.0] {
        let p = WalkerParams::new(WalkerKind::Nvbrw, lambda, 1.0, 2, one.clone()).unwrap();
        let est = estimate_speed(&run_cycles_parallel(&p, 2_000_000, 110 + lambda as u64, REPLICAS).unwrap()).unwrap();
        let target = 1.0 - 2.0 * (-lambda).exp();
        let tol = (3.0 * est.se).max(5.0 * (-2.0 * lambda).exp());
        ok &= (est.point - target).abs() <= tol;
        detail.push(format!("λ={lambda}: {:.5} vs {target:.5} (tol {tol:.5})", est.point));
    }
    report(10, ok, t0.elapsed(), secs(900), detail.join(", "));
}

/// `sup_λ λy − log E[e^{λξ}]` by golden-section search.
fn rate_by_search(p: f64, l: u32, y: f64) -> f64 {
    let g = |lam: f64| lam * y - (p * (-lam).exp() + (1.0 - p) * (l as f64 * lam).exp()).ln();
    let (mut a, mut b) = (0.0, 20.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g((a + b) / 2.0)
}

#[test]
fn criterion_11_birth_death_suite() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (alpha, mu)) in [(1.0, 2.0), (2.0, 2.0), (2.0, 1.0)].into_iter().enumerate() {
        let p = BDParams::new(alpha, mu, 1).unwrap();
        let runs = par_samples(120 + i as u64, 100_000, |r| simulate_bd_return(&p, r)).unwrap();
        let (m, se) = mean_se(&runs.iter().map(|r| r.steps as f64).collect::<Vec<_>>());
        let target = 2.0 * (alpha / mu).exp();
        ok &= within(m, target, 3.0, se);
        detail.push(format!("ratio {}: {m:.3}±{se:.3} vs {target:.3}", alpha / mu));
        if alpha == mu {
            let fit = tail_exponent_fit(&runs.iter().map(|r| r.tau).collect::<Vec<_>>()).unwrap();
            ok &= fit.rate > 0.0 && fit.r_squared > 0.95;
            detail.push(format!("tail rate {:.3} R²={:.4}", fit.rate, fit.r_squared));
        }
    }
    let mut rng = stream(123, 0);
    let mut checked = 0;
    while checked < 100 {
        let p = rng.random_range(0.01..0.999);
        let l = rng.random_range(1..=6u32);
        let drift = -p + l as f64 * (1.0 - p);
        if drift >= -1e-6 {
            continue;
        }
        let rw = RWParams::new(p, l).unwrap();
        let y = rw.drift() * rng.random_range(0.05..0.95);
        let r = ld_lambda_star(p, l, y).unwrap();
        let oracle = rate_by_search(p, l, y);
        ok &= r.rate > 0.0 && (r.rate - oracle).abs() <= 1e-9 * oracle.max(1.0);
        checked += 1;
    }
    detail.push(format!("{checked} rate checks"));
    report(11, ok, t0.elapsed(), secs(120), detail.join(", "));
}

#[test]
fn criterion_12_reweighted_estimator() {
    let t0 = Instant::now();
    let law = elliptic();
    let source = WalkerParams::new(WalkerKind::Nvbrw, 0.0, 2.0, 1, law.clone()).unwrap();
    let base = run_cycles_parallel(&source, 1_000_000, 124, REPLICAS).unwrap();
    let rw = reweighted_displacement(&source, &base, 0.5).unwrap();
    let target = WalkerParams::new(WalkerKind::Nvbrw, 0.5, 2.0, 1, law).unwrap();
    let direct = run_cycles_parallel(&target, 1_000_000, 125, REPLICAS).unwrap();
    let (m, se) = mean_se(&direct.iter().map(|r| r.dx.coord(0) as f64).collect::<Vec<_>>());
    let combined = (rw.se * rw.se + se * se).sqrt();
    report(
        12,
        within(rw.mean, m, 4.0, combined),
        t0.elapsed(),
        secs(300),
        format!("reweighted {:.5}±{:.5}, direct {m:.5}±{se:.5}", rw.mean, rw.se),
    );
}
