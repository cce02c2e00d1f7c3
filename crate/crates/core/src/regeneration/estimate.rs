use serde::Serialize;

use super::RegenCycleRecord;
use crate::error::{Error, Result};
use crate::stats::{mean_se, mean_sd, skewness, t_quantile, Z99};

pub const MIN_CYCLES: usize = 30;
const BATCHES: usize = 20;
/// Residual skewness above which the batch-means interval becomes the reported one.
const SKEW_LIMIT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub se: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub se: f64,
    pub low: f64,
    pub high: f64,
}

impl MeanCi {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, se) = mean_se(xs);
        MeanCi { mean, se, low: mean - Z99 * se, high: mean + Z99 * se }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Delta,
    BatchMeans,
}

/// Ratio estimate `Σ X_τ·e_1 / Σ τ` with 99% intervals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Standard error of the reported interval.
    pub se: f64,
    pub method: CiMethod,
    pub delta: Interval,
    pub batch: Option<Interval>,
    pub residual_skewness: f64,
    pub n_cycles: usize,
    pub mean_tau: MeanCi,
    pub mean_n: MeanCi,
}

pub fn estimate_speed(records: &[RegenCycleRecord]) -> Result<SpeedEstimate> {
    let n = records.len();
    if n < MIN_CYCLES {
        return Err(Error::InsufficientSample { needed: MIN_CYCLES, got: n });
    }
    let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();
    let dxs: Vec<f64> = records.iter().map(|r| r.dx.coord(0) as f64).collect();
    let ns: Vec<f64> = records.iter().map(|r| r.n as f64).collect();
    let sum_t: f64 = taus.iter().sum();
    let point = dxs.iter().sum::<f64>() / sum_t;
    let tbar = sum_t / n as f64;

    let resid: Vec<f64> = dxs.iter().zip(&taus).map(|(d, t)| d - point * t).collect();
    let (_, sd) = mean_sd(&resid);
    let se = sd / ((n as f64).sqrt() * tbar);
    let delta = Interval { low: point - Z99 * se, high: point + Z99 * se, se };
    let residual_skewness = skewness(&resid);

    let batch = if n >= BATCHES * 2 {
        let size = n / BATCHES;
        let ratios: Vec<f64> = (0..BATCHES)
            .map(|b| {
                let lo = b * size;
                let hi = if b + 1 == BATCHES { n } else { lo + size };
                let d: f64 = dxs[lo..hi].iter().sum();
                let t: f64 = taus[lo..hi].iter().sum();
                d / t
            })
            .collect();
        let (_, bsd) = mean_sd(&ratios);
        let bse = bsd / (BATCHES as f64).sqrt();
        let q = t_quantile(0.995, (BATCHES - 1) as f64);
        Some(Interval { low: point - q * bse, high: point + q * bse, se: bse })
    } else {
        None
    };

    let (method, chosen) = match batch {
        Some(b) if residual_skewness.abs() > SKEW_LIMIT => (CiMethod::BatchMeans, b),
        _ => (CiMethod::Delta, delta),
    };
    Ok(SpeedEstimate {
        point,
        ci_low: chosen.low,
        ci_high: chosen.high,
        se: chosen.se,
        method,
        delta,
        batch,
        residual_skewness,
        n_cycles: n,
        mean_tau: MeanCi::of(&taus),
        mean_n: MeanCi::of(&ns),
    })
}
