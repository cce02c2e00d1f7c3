//! Analytic formulas used as oracles for the simulations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::{ConductanceLaw, MomentFunctional as F};

/// `Z_λ = 2d − 2 + e^λ + e^{−λ}`, the total direction weight of one attempt.
pub fn z_lambda(lambda: f64, d: usize) -> f64 {
    2.0 * d as f64 - 2.0 + 2.0 * lambda.cosh()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegenMoments {
    pub expected_tau: f64,
    pub expected_n: f64,
}

/// Expected cycle length and attempt count for the variable speed walk.
pub fn vbrw_regen_moments(lambda: f64, mu: f64, kappa: f64, d: usize) -> Result<RegenMoments> {
    check_pos("mu", mu)?;
    check_pos("kappa", kappa)?;
    let rate = kappa * z_lambda(lambda, d);
    let n = (rate / mu).exp();
    Ok(RegenMoments { expected_tau: n / rate, expected_n: n })
}

/// Same for the normalized walk, whose attempts arrive at rate `κ` whatever the bias.
pub fn nvbrw_regen_moments(mu: f64, kappa: f64) -> Result<RegenMoments> {
    check_pos("mu", mu)?;
    check_pos("kappa", kappa)?;
    let n = (kappa / mu).exp();
    Ok(RegenMoments { expected_tau: n / kappa, expected_n: n })
}

/// Mean first return time to 0 of the embedded infected-size chain, `2e^{ratio}`.
pub fn bd_discrete_return_mean(rate_ratio: f64) -> Result<f64> {
    check_pos("rate ratio", rate_ratio)?;
    Ok(2.0 * rate_ratio.exp())
}

/// Speed of the totally asymmetric walk, `E[ω/(μ+ω)] / E[1/(μ+ω)]`.
pub fn v_asym(law: &ConductanceLaw, mu: f64) -> Result<f64> {
    Ok(law.moment(F::Ratio, mu)? / law.moment(F::Inv1, mu)?)
}

/// Large-bias expansion `zeroth + first·e^{−λ} + O(e^{−2λ})` of the normalized walk's speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymptoticCoefficients {
    pub zeroth: f64,
    pub first: f64,
    pub d: usize,
}

impl AsymptoticCoefficients {
    /// `δ(λ) = (2d−2)/Z_λ`
    pub fn delta(&self, lambda: f64) -> f64 {
        (2.0 * self.d as f64 - 2.0) / z_lambda(lambda, self.d)
    }

    pub fn truncated(&self, lambda: f64) -> f64 {
        self.zeroth + self.first * (-lambda).exp()
    }
}

struct Moments {
    inv1: f64,
    ratio: f64,
    inv2: f64,
    ratio2: f64,
    cr2: f64,
    ci2: f64,
    m: f64,
}

fn moments(law: &ConductanceLaw, mu: f64) -> Result<Moments> {
    Ok(Moments {
        inv1: law.moment(F::Inv1, mu)?,
        ratio: law.moment(F::Ratio, mu)?,
        inv2: law.moment(F::Inv2, mu)?,
        ratio2: law.moment(F::Ratio2, mu)?,
        cr2: law.moment(F::CenteredRatio2, mu)?,
        ci2: law.moment(F::CenteredInv2, mu)?,
        m: law.mean(),
    })
}

pub fn nvbrw_expansion(law: &ConductanceLaw, mu: f64, d: usize) -> Result<AsymptoticCoefficients> {
    check_dim(d)?;
    let k = moments(law, mu)?;
    // + 0.0 turns the d = 1 product into +0
    let first = (2.0 * d as f64 - 2.0) * (k.cr2 * k.inv1 - k.ci2 * k.ratio - k.ratio * k.inv1) / (k.inv1 * k.inv1) + 0.0;
    Ok(AsymptoticCoefficients { zeroth: k.ratio / k.inv1, first, d })
}

/// First-order coefficient per transverse direction, in the `(m+μ)` form.
pub fn alt_first_order(law: &ConductanceLaw, mu: f64) -> Result<f64> {
    let k = moments(law, mu)?;
    let i2 = k.inv1 * k.inv1;
    Ok((k.m + mu) * (k.inv2 * k.ratio - k.ratio2 * k.inv1) / i2 - k.ratio / k.inv1)
}

/// First-order coefficient for `q = (δ_α + δ_1)/2`.
pub fn two_point_a(mu: f64, alpha: f64) -> Result<f64> {
    check_pos("mu", mu)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(two_point_a_unchecked(mu, alpha))
}

/// The rational expression itself, also usable at the boundary points.
pub fn two_point_a_unchecked(mu: f64, alpha: f64) -> f64 {
    (alpha * alpha - (2.0 * mu + 6.0) * alpha + 1.0 - 2.0 * mu) / (2.0 * (2.0 * mu + 1.0 + alpha))
}

/// The two leading terms of the variable speed walk's speed `v(λ, Z_λμ)`; the remainder is `O(e^{−λ})`.
pub fn vbrw_expansion(law: &ConductanceLaw, mu: f64, d: usize, lambda: f64) -> Result<f64> {
    check_dim(d)?;
    let k = moments(law, mu)?;
    let second = (2.0 * d as f64 - 2.0) * (k.cr2 * k.inv1 - k.ci2 * k.ratio) / (k.inv1 * k.inv1);
    Ok(lambda.exp() * k.ratio / k.inv1 + second)
}

fn check_pos(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {x}")))
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    Ok(())
}
