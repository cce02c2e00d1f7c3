use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{Check, ExperimentConfig, Outcome};
use crate::birth_death::{simulate_bd_return, tail_exponent_fit, BDParams, MIN_TAIL_SAMPLES};
use crate::closed_forms::{
    alt_first_order, bd_discrete_return_mean, nvbrw_expansion, nvbrw_regen_moments, two_point_a, v_asym, vbrw_expansion,
    vbrw_regen_moments, z_lambda,
};
use crate::couplings::{coupled_bias_pair_cycles, coupled_monotone_d1, coupled_nvbrw_dominated_by_tasym, dim_reduction_gap};
use crate::env::{DynEnvironment, EnvMode, Geometry};
use crate::error::{Error, Result};
use crate::law::ConductanceLaw;
use crate::regeneration::{estimate_speed, run_cycles_parallel, write_records_csv};
use crate::rng::{par_samples, stream};
use crate::stats::mean_se;
use crate::verification::run_suite;
use crate::walkers::{run, WalkerKind, WalkerParams};

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("summary types serialize")
}

fn walker_kind(cfg: &ExperimentConfig) -> Result<WalkerKind> {
    cfg.kind.as_deref().unwrap_or("nvbrw").parse()
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Reference values that exist for the given walker.
fn predictions(kind: WalkerKind, lambda: f64, mu: f64, d: usize, law: &ConductanceLaw) -> Result<Value> {
    let k = law.kappa();
    Ok(match kind {
        WalkerKind::Vbrw => json!({ "regeneration": vbrw_regen_moments(lambda, mu, k, d)? }),
        WalkerKind::Nvbrw => json!({
            "regeneration": nvbrw_regen_moments(mu, k)?,
            "expansion": nvbrw_expansion(law, mu, d)?,
        }),
        WalkerKind::Tasym => json!({ "regeneration": nvbrw_regen_moments(mu, k)?, "speed": v_asym(law, mu)? }),
        WalkerKind::Cbrw => Value::Null,
    })
}

pub(crate) fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kind = walker_kind(cfg)?;
    let (lambda, mu) = (cfg.single_lambda()?, cfg.single_mu()?);
    let law = cfg.law.build()?;
    let params = WalkerParams::new(kind, lambda, mu, cfg.d, law.clone())?;
    if let Some(h) = cfg.horizon {
        let geometry = match cfg.m {
            Some(m) => Geometry::torus(cfg.d, m)?,
            None => Geometry::lattice(cfg.d)?,
        };
        let mut env = DynEnvironment::new(geometry, mu, law, EnvMode::MemorylessLazy)?;
        let mut rng = stream(cfg.seed, 0);
        let traj = run(&params, &mut env, h, None, true, &mut rng)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        let result = json!({
            "horizon": h,
            "final_position": &traj.final_position.0[..cfg.d],
            "attempts": traj.counts.n(),
            "displacement_over_time": traj.final_position.coord(0) as f64 / h,
        });
        return Ok(Outcome { result, csv: Some(csv), checks: vec![] });
    }
    if cfg.m.is_some() {
        return Err(Error::Config("regeneration cycles run on the infinite lattice; drop --m or give --horizon".into()));
    }
    let records = run_cycles_parallel(&params, cfg.cycles, cfg.seed, cfg.replicas)?;
    let est = estimate_speed(&records)?;
    let mut csv = Vec::new();
    write_records_csv(&records, cfg.d, &mut csv)?;
    let result = json!({
        "speed": est,
        "predictions": predictions(kind, lambda, mu, cfg.d, &params.law)?,
    });
    Ok(Outcome { result, csv: Some(csv), checks: vec![] })
}

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    mu: f64,
    speed: f64,
    ci_low: f64,
    ci_high: f64,
    se: f64,
    n_cycles: usize,
    zeroth: Option<f64>,
    first: Option<f64>,
    truncated: Option<f64>,
    vbrw_expansion: Option<f64>,
    v_asym: Option<f64>,
    asym_gap: Option<f64>,
    asym_gap_over_se: Option<f64>,
}

/// Seed of grid point `i`; point 0 uses the seed itself so a one-point sweep equals `simulate`.
fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub(crate) fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kind = walker_kind(cfg)?;
    let law = cfg.law.build()?;
    let mut rows = Vec::new();
    let grid: Vec<(f64, f64)> = cfg.lambda.iter().flat_map(|&l| cfg.mu.iter().map(move |&m| (l, m))).collect();
    for (i, &(lambda, mu)) in grid.iter().enumerate() {
        let params = WalkerParams::new(kind, lambda, mu, cfg.d, law.clone())?;
        let est = estimate_speed(&run_cycles_parallel(&params, cfg.cycles, point_seed(cfg.seed, i), cfg.replicas)?)?;
        let mut row = SweepRow {
            lambda,
            mu,
            speed: est.point,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            se: est.se,
            n_cycles: est.n_cycles,
            zeroth: None,
            first: None,
            truncated: None,
            vbrw_expansion: None,
            v_asym: None,
            asym_gap: None,
            asym_gap_over_se: None,
        };
        match kind {
            WalkerKind::Nvbrw => {
                let c = nvbrw_expansion(&law, mu, cfg.d)?;
                row.zeroth = Some(c.zeroth);
                row.first = Some(c.first);
                row.truncated = Some(c.truncated(lambda));
                row.v_asym = Some(c.zeroth);
            }
            WalkerKind::Vbrw => {
                // the expansion is in terms of the environment rate divided by Z_λ
                row.vbrw_expansion = Some(vbrw_expansion(&law, mu / z_lambda(lambda, cfg.d), cfg.d, lambda)?);
            }
            WalkerKind::Tasym => row.v_asym = Some(v_asym(&law, mu)?),
            WalkerKind::Cbrw => {}
        }
        if let Some(va) = row.v_asym {
            row.asym_gap = Some(va - est.point);
            row.asym_gap_over_se = Some((va - est.point) / est.se);
        }
        rows.push(row);
    }
    let header: Vec<String> = [
        "lambda", "mu", "speed", "ci_low", "ci_high", "se", "n_cycles", "zeroth", "first", "truncated", "vbrw_expansion",
        "v_asym", "asym_gap", "asym_gap_over_se",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                r.mu.to_string(),
                r.speed.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.se.to_string(),
                r.n_cycles.to_string(),
                opt(r.zeroth),
                opt(r.first),
                opt(r.truncated),
                opt(r.vbrw_expansion),
                opt(r.v_asym),
                opt(r.asym_gap),
                opt(r.asym_gap_over_se),
            ]
        })
        .collect();
    Ok(Outcome { result: json!({ "rows": rows }), csv: Some(csv_bytes(&header, &table)?), checks: vec![] })
}

pub(crate) fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let suite = run_suite(cfg.seed, cfg.quick, cfg.replicas)?;
    let checks = suite.reports.iter().map(|r| Check { name: r.name.clone(), pass: r.pass }).collect();
    let header: Vec<String> = ["name", "statistic", "threshold", "pass", "applicable", "n_samples"].iter().map(|s| s.to_string()).collect();
    let table: Vec<Vec<String>> = suite
        .reports
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.statistic.to_string(),
                r.threshold.to_string(),
                r.pass.to_string(),
                r.applicable.to_string(),
                r.n_samples.to_string(),
            ]
        })
        .collect();
    Ok(Outcome { result: to_value(&suite), csv: Some(csv_bytes(&header, &table)?), checks })
}

#[derive(Serialize)]
struct Identity {
    name: &'static str,
    cases: usize,
    max_abs_deviation: f64,
    tolerance: f64,
    pass: bool,
}

fn identity(name: &'static str, devs: &[f64], tolerance: f64) -> Identity {
    let max = devs.iter().cloned().fold(0.0, f64::max);
    Identity { name, cases: devs.len(), max_abs_deviation: max, tolerance, pass: devs.iter().all(|d| d.is_finite()) && max <= tolerance }
}

pub(crate) fn validate_closed_forms(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut rng = stream(cfg.seed, 0);
    let n = 100;
    let mut rep = Vec::new();
    let mut special = Vec::new();
    for _ in 0..n {
        let a = rng.random_range(0.0..1.0);
        let b = rng.random_range(a..=a + 5.0);
        let p = rng.random_range(0.05..0.95);
        let mu = rng.random_range(0.01..10.0);
        let d = rng.random_range(2..=4);
        let law = ConductanceLaw::two_point(a, b, p)?;
        rep.push((nvbrw_expansion(&law, mu, d)?.first - (2.0 * d as f64 - 2.0) * alt_first_order(&law, mu)?).abs());
        let alpha = rng.random_range(0.001..0.999);
        let mu = rng.random_range(0.01..10.0);
        let law = ConductanceLaw::two_point(alpha, 1.0, 0.5)?;
        special.push((alt_first_order(&law, mu)? - two_point_a(mu, alpha)?).abs());
    }
    let a01 = two_point_a(0.1, 0.1)?;
    let one = ConductanceLaw::point(1.0)?;
    let mut moments = Vec::new();
    for &(l, mu, k, d) in &[(0.0, 2.0, 1.0, 1), (1.0, 0.5, 2.0, 2), (2.5, 3.0, 0.5, 4)] {
        let r = vbrw_regen_moments(l, mu, k, d)?;
        moments.push((r.expected_tau * k * z_lambda(l, d) - r.expected_n).abs());
        moments.push((bd_discrete_return_mean(k * z_lambda(l, d) / mu)? - 2.0 * r.expected_n).abs());
    }
    let half = ConductanceLaw::two_point(0.0, 1.0, 0.5)?;
    let table = vec![
        identity("first_order_representation", &rep, 1e-12),
        identity("two_point_specialization", &special, 1e-12),
        identity("two_point_a_at_0.1_0.1", &[(a01 - 0.19 / 2.6).abs()], 1e-12),
        Identity { name: "two_point_a_at_0.1_0.1_positive", cases: 1, max_abs_deviation: 0.0, tolerance: 0.0, pass: a01 > 0.0 },
        identity("alt_first_order_constant_law", &[(alt_first_order(&one, 1.0)? + 1.0).abs(), (alt_first_order(&one, 7.0)? + 1.0).abs()], 1e-12),
        identity("regeneration_moment_relations", &moments, 1e-9),
        identity("v_asym_half_bernoulli", &[(v_asym(&half, 1.0)? - 1.0 / 3.0).abs()], 1e-12),
    ];
    let checks = table.iter().map(|i| Check { name: i.name.into(), pass: i.pass }).collect();
    let header: Vec<String> = ["identity", "cases", "max_abs_deviation", "tolerance", "pass"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|i| vec![i.name.into(), i.cases.to_string(), i.max_abs_deviation.to_string(), i.tolerance.to_string(), i.pass.to_string()])
        .collect();
    Ok(Outcome { result: json!({ "identities": table }), csv: Some(csv_bytes(&header, &rows)?), checks })
}

pub(crate) fn coupling_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let lambda = cfg.single_lambda()?;
    let mu = cfg.single_mu()?;
    let law = cfg.law.build()?;
    let kind = cfg.kind.as_deref().unwrap_or("monotone");
    match kind {
        "monotone" | "dominate" => {
            let horizon = cfg.horizon.unwrap_or(100.0);
            let paths: Vec<Result<(i64, i64, u64)>> = (0..cfg.samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(cfg.seed, i as u64);
                    let p = if kind == "monotone" {
                        coupled_monotone_d1(lambda, cfg.epsilon, mu, &law, horizon, &mut rng)?
                    } else {
                        coupled_nvbrw_dominated_by_tasym(lambda, mu, &law, horizon, &mut rng)?
                    };
                    Ok((p.traj_a.final_position.coord(0), p.traj_b.final_position.coord(0), p.violations))
                })
                .collect();
            let paths: Vec<(i64, i64, u64)> = paths.into_iter().collect::<Result<_>>()?;
            let violations: u64 = paths.iter().map(|p| p.2).sum();
            let header: Vec<String> = ["path", "final_a", "final_b", "violations"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> =
                paths.iter().enumerate().map(|(i, p)| vec![i.to_string(), p.0.to_string(), p.1.to_string(), p.2.to_string()]).collect();
            let result = json!({ "coupling": kind, "paths": paths.len(), "horizon": horizon, "violations": violations });
            Ok(Outcome {
                result,
                csv: Some(csv_bytes(&header, &rows)?),
                checks: vec![Check { name: format!("{kind}_ordering"), pass: violations == 0 }],
            })
        }
        "bias-pair" => {
            let mut rng = stream(cfg.seed, 0);
            let cycles = coupled_bias_pair_cycles(lambda, cfg.epsilon, mu, &law, cfg.d, cfg.cycles, &mut rng)?;
            let diffs: Vec<f64> = cycles.iter().map(|c| c.displacement_difference() as f64).collect();
            let (mean, se) = mean_se(&diffs);
            let very_bad = cycles.iter().filter(|c| c.saw_very_bad).count();
            let identical = cycles.iter().filter(|c| !c.saw_very_bad).all(|c| c.displacement_difference() == 0);
            let header: Vec<String> =
                ["cycle", "tau", "n", "dx_x", "dx_y", "saw_very_bad", "saw_bad_before"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = cycles
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    vec![
                        i.to_string(),
                        c.x.tau.to_string(),
                        c.x.n.to_string(),
                        c.x.dx.coord(0).to_string(),
                        c.y.dx.coord(0).to_string(),
                        c.saw_very_bad.to_string(),
                        c.saw_bad_before.to_string(),
                    ]
                })
                .collect();
            let result = json!({
                "coupling": kind,
                "cycles": cycles.len(),
                "very_bad_fraction": very_bad as f64 / cycles.len().max(1) as f64,
                "mean_difference": mean,
                "se": se,
            });
            Ok(Outcome {
                result,
                csv: Some(csv_bytes(&header, &rows)?),
                checks: vec![Check { name: "identical_without_very_bad".into(), pass: identical }],
            })
        }
        "dim-gap" => {
            let g = dim_reduction_gap(lambda, mu, &law, cfg.d, cfg.cycles, cfg.seed, cfg.replicas)?;
            Ok(Outcome { result: to_value(&g), csv: None, checks: vec![] })
        }
        other => Err(Error::Config(format!("unknown coupling kind `{other}`; use monotone, dominate, bias-pair or dim-gap"))),
    }
}

pub(crate) fn bd_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mu = cfg.single_mu()?;
    let p = BDParams::new(cfg.alpha, mu, cfg.l)?;
    let runs = par_samples(cfg.seed, cfg.samples, |r| simulate_bd_return(&p, r))?;
    let taus: Vec<f64> = runs.iter().map(|r| r.tau).collect();
    let steps: Vec<f64> = runs.iter().map(|r| r.steps as f64).collect();
    let (mt, st) = mean_se(&taus);
    let (ms, ss) = mean_se(&steps);
    let mut checks = Vec::new();
    let mut result = json!({ "params": p, "mean_tau": mt, "se_tau": st, "mean_steps": ms, "se_steps": ss });
    if p.l == 1 {
        let target = bd_discrete_return_mean(p.alpha / p.mu)?;
        result["expected_steps"] = json!(target);
        result["expected_tau"] = json!((p.alpha / p.mu).exp() / p.alpha);
        checks.push(Check { name: "mean_return_steps".into(), pass: (ms - target).abs() <= 3.0 * ss });
    }
    if taus.len() >= MIN_TAIL_SAMPLES {
        let fit = tail_exponent_fit(&taus)?;
        checks.push(Check { name: "exponential_tail".into(), pass: fit.rate > 0.0 && fit.r_squared > 0.95 });
        result["tail_fit"] = to_value(&fit);
    }
    let header: Vec<String> = vec!["tau".into(), "T".into()];
    let rows: Vec<Vec<String>> = runs.iter().map(|r| vec![r.tau.to_string(), r.steps.to_string()]).collect();
    Ok(Outcome { result, csv: Some(csv_bytes(&header, &rows)?), checks })
}
