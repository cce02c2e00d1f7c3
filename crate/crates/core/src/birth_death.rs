//! Batch-birth/linear-death chain and the drifted walk that bounds its excursions.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::exp_time;
use crate::stats::linear_fit;

const STEP_CAP: u64 = 100_000_000;
pub const MIN_TAIL_SAMPLES: usize = 10_000;

/// Births of size `l` at rate `alpha`, each individual dies at rate `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BDParams {
    pub alpha: f64,
    pub mu: f64,
    pub l: u32,
}

impl BDParams {
    pub fn new(alpha: f64, mu: f64, l: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("alpha and mu must be > 0, got {alpha}, {mu}")));
        }
        if l == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        Ok(Self { alpha, mu, l })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BdReturn {
    /// Continuous return time to 0.
    pub tau: f64,
    /// Jumps of the embedded chain until the return.
    pub steps: u64,
}

/// One excursion from 0 back to 0.
pub fn simulate_bd_return<R: Rng + ?Sized>(p: &BDParams, rng: &mut R) -> Result<BdReturn> {
    let mut size = 0u64;
    let mut tau = 0.0;
    let mut steps = 0u64;
    loop {
        let death = p.mu * size as f64;
        let total = p.alpha + death;
        tau += exp_time(rng, total);
        steps += 1;
        if rng.random::<f64>() * total < p.alpha {
            size += p.l as u64;
        } else {
            size -= 1;
            if size == 0 {
                return Ok(BdReturn { tau, steps });
            }
        }
        if steps >= STEP_CAP {
            return Err(Error::StepOverflow(STEP_CAP));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log P(X > x)` against `x` over the central quantile range `[50%, 99%]`.
pub fn tail_exponent_fit(samples: &[f64]) -> Result<TailFit> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(Error::InsufficientSample { needed: MIN_TAIL_SAMPLES, got: samples.len() });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let lo = n / 2;
    let hi = (n as f64 * 0.99) as usize;
    if s[lo] == s[hi] {
        return Err(Error::Fit("samples are degenerate over the fitted quantile range".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut last = f64::NAN;
    for &x in &s[lo..=hi] {
        if x == last {
            continue;
        }
        last = x;
        let above = n - s.partition_point(|&v| v <= x);
        if above == 0 {
            continue;
        }
        xs.push(x);
        ys.push((above as f64 / n as f64).ln());
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(TailFit { rate: -fit.slope, r_squared: fit.r_squared, points: xs.len() })
}

/// Walk with steps `−1` (probability `p`) and `+l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RWParams {
    pub p: f64,
    pub l: u32,
}

impl RWParams {
    pub fn new(p: f64, l: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || l == 0 {
            return Err(Error::Domain(format!("need p in [0,1] and l >= 1, got {p}, {l}")));
        }
        let r = RWParams { p, l };
        if r.drift() >= 0.0 {
            return Err(Error::Domain(format!("drift {} must be negative", r.drift())));
        }
        Ok(r)
    }

    pub fn drift(&self) -> f64 {
        -self.p + self.l as f64 * (1.0 - self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LdExponent {
    pub lambda_star: f64,
    /// `I(y) = λ*y − log E[e^{λ*ξ}]`, strictly positive.
    pub rate: f64,
}

/// Tilt `λ* = log(p(1+y)/((L−y)(1−p)))/(L+1)` and the rate it certifies at level `y`.
pub fn ld_lambda_star(p: f64, l: u32, y: f64) -> Result<LdExponent> {
    let rw = RWParams::new(p, l)?;
    if !(y > rw.drift() && y < 0.0) {
        return Err(Error::Domain(format!("y must lie strictly between the drift {} and 0, got {y}", rw.drift())));
    }
    let lf = l as f64;
    let arg = p * (1.0 + y) / ((lf - y) * (1.0 - p));
    if !(arg > 0.0 && arg.is_finite()) {
        return Err(Error::Domain(format!("log argument {arg} is not positive")));
    }
    let lambda_star = arg.ln() / (lf + 1.0);
    let rate = lambda_star * y - (p * (-lambda_star).exp() + (1.0 - p) * (lf * lambda_star).exp()).ln();
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("rate I(y) = {rate} is not positive")));
    }
    Ok(LdExponent { lambda_star, rate })
}

/// First `n` with `X_n − X_0 = −L`, capped at `cap` steps (returns `cap` if not hit).
pub fn simulate_hitting_time<R: Rng + ?Sized>(rw: &RWParams, cap: u64, rng: &mut R) -> u64 {
    let target = -(rw.l as i64);
    let mut x = 0i64;
    for n in 1..=cap {
        if rng.random::<f64>() < rw.p {
            x -= 1;
        } else {
            x += rw.l as i64;
        }
        if x == target {
            return n;
        }
    }
    cap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::bd_discrete_return_mean;
    use crate::rng::stream;
    use crate::stats::mean_se;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn unit_batch_return_means() {
        let p = BDParams::new(2.0, 2.0, 1).unwrap();
        let mut rng = stream(50, 0);
        let runs: Vec<BdReturn> = (0..100_000).map(|_| simulate_bd_return(&p, &mut rng).unwrap()).collect();
        let taus: Vec<f64> = runs.iter().map(|r| r.tau).collect();
        let steps: Vec<f64> = runs.iter().map(|r| r.steps as f64).collect();
        let (mt, st) = mean_se(&taus);
        let (ms, ss) = mean_se(&steps);
        let e = std::f64::consts::E;
        assert!((mt - e / 2.0).abs() <= 3.0 * st, "{mt} ± {st}");
        assert!((ms - 2.0 * e).abs() <= 3.0 * ss, "{ms} ± {ss}");
        assert!(runs.iter().all(|r| r.steps % 2 == 0));
    }

    #[test]
    fn return_mean_matches_for_several_ratios() {
        for (i, (alpha, mu)) in [(1.0, 2.0), (3.0, 3.0), (2.0, 1.0)].into_iter().enumerate() {
            let p = BDParams::new(alpha, mu, 1).unwrap();
            let mut rng = stream(51, i as u64);
            let steps: Vec<f64> = (0..100_000).map(|_| simulate_bd_return(&p, &mut rng).unwrap().steps as f64).collect();
            let (m, s) = mean_se(&steps);
            let target = bd_discrete_return_mean(alpha / mu).unwrap();
            assert!((m - target).abs() <= 3.0 * s, "ratio {}: {m} ± {s} vs {target}", alpha / mu);
        }
    }

    #[test]
    fn tail_fit_recovers_exponential_rate() {
        let mut rng = stream(52, 0);
        let exp = Exp::new(2.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let fit = tail_exponent_fit(&xs).unwrap();
        assert!((fit.rate - 2.0).abs() < 0.1, "{fit:?}");
        assert!(fit.r_squared > 0.99);
        assert!(matches!(tail_exponent_fit(&vec![3.0; 20_000]), Err(Error::Fit(_))));
        assert!(matches!(tail_exponent_fit(&[1.0, 2.0]), Err(Error::InsufficientSample { .. })));
    }

    #[test]
    fn return_times_have_exponential_tails() {
        for l in [1, 2] {
            let p = BDParams::new(if l == 1 { 2.0 } else { 1.0 }, if l == 1 { 2.0 } else { 1.0 }, l).unwrap();
            let mut rng = stream(53, l as u64);
            let taus: Vec<f64> = (0..50_000).map(|_| simulate_bd_return(&p, &mut rng).unwrap().tau).collect();
            let fit = tail_exponent_fit(&taus).unwrap();
            assert!(fit.rate > 0.0 && fit.r_squared > 0.95, "L={l}: {fit:?}");
        }
    }

    #[test]
    fn lambda_star_example() {
        let r = ld_lambda_star(0.9, 1, -0.4).unwrap();
        assert_abs_diff_eq!(r.lambda_star, 0.5 * (0.54f64 / 0.14).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.lambda_star, 0.67497, epsilon = 1e-5);
        assert!(r.rate > 0.0);
        // p = 0.5, L = 1 has zero drift
        assert!(ld_lambda_star(0.5, 1, -0.1).is_err());
        assert!(ld_lambda_star(0.9, 1, -0.9).is_err());
        assert!(ld_lambda_star(0.9, 1, 0.0).is_err());
    }

    #[test]
    fn lambda_star_maximizes_the_transform() {
        // the returned tilt is a stationary point of λy − log E[e^{λξ}]
        let (p, l, y) = (0.8, 2u32, -0.2);
        let g = |lam: f64| lam * y - (p * (-lam).exp() + (1.0 - p) * (l as f64 * lam).exp()).ln();
        let r = ld_lambda_star(p, l, y).unwrap();
        let h = 1e-6;
        assert!((g(r.lambda_star + h) - g(r.lambda_star - h)).abs() < 1e-9);
        assert_abs_diff_eq!(g(r.lambda_star), r.rate, epsilon = 1e-14);
    }

    #[test]
    fn hitting_time_tail_bound() {
        let rw = RWParams::new(0.85, 2).unwrap();
        let y = rw.drift() / 2.0;
        let ld = ld_lambda_star(rw.p, rw.l, y).unwrap();
        let mut rng = stream(54, 0);
        let m = 200_000;
        let hs: Vec<u64> = (0..m).map(|_| simulate_hitting_time(&rw, 10_000, &mut rng)).collect();
        let start = (rw.l as f64 / y.abs()).ceil() as u64 + 1;
        for n in start..start + 40 {
            let count = hs.iter().filter(|&&h| h >= n).count() as f64;
            let bound = (-(n as f64) * ld.rate * 0.8).exp() * m as f64;
            assert!(count <= bound + 4.0 * bound.sqrt() + 1.0, "n={n}: {count} > {bound}");
        }
    }

    proptest::proptest! {
        #[test]
        fn rate_is_positive(p in 0.01f64..0.999, l in 1u32..6, frac in 0.05f64..0.95) {
            let l_f = l as f64;
            let drift = -p + l_f * (1.0 - p);
            proptest::prop_assume!(drift < -1e-6);
            let y = drift * frac;
            let r = ld_lambda_star(p, l, y).unwrap();
            proptest::prop_assert!(r.rate > 0.0);
        }
    }
}
