//! Single-edge conductance distributions and their moment functionals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawKind {
    /// Atoms as `(value, probability)` pairs.
    FiniteDiscrete { atoms: Vec<(f64, f64)> },
    UniformInterval { lo: f64, hi: f64 },
}

/// Distribution `q` of a single edge conductance, with declared support bound `kappa`.
///
/// Immutable after construction; every constructor checks that the probabilities
/// sum to one, that the support lies in `[0, kappa]`, and that the law is not `δ_0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConductanceLaw {
    #[serde(flatten)]
    kind: LawKind,
    kappa: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Capability flags used to gate the walker kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub bounded_support: bool,
    pub uniformly_elliptic: bool,
    pub zero_free: bool,
    pub log_moment_finite: bool,
}

/// Integrands `f(ω)` whose expectations under `q` enter the speed formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFunctional {
    /// `1/(μ+ω)`
    Inv1,
    /// `ω/(μ+ω)`
    Ratio,
    /// `1/(μ+ω)²`
    Inv2,
    /// `ω/(μ+ω)²`
    Ratio2,
    /// `ω(ω−m)/(μ+ω)²`
    CenteredRatio2,
    /// `(ω−m)/(μ+ω)²`
    CenteredInv2,
    /// `ω`
    Mean,
    /// `|log ω|`
    AbsLog,
}

impl MomentFunctional {
    pub const ALL: [MomentFunctional; 8] = [
        MomentFunctional::Inv1,
        MomentFunctional::Ratio,
        MomentFunctional::Inv2,
        MomentFunctional::Ratio2,
        MomentFunctional::CenteredRatio2,
        MomentFunctional::CenteredInv2,
        MomentFunctional::Mean,
        MomentFunctional::AbsLog,
    ];

    /// Pointwise value; `m` is the law's mean (only read by centered functionals).
    pub fn eval(self, w: f64, mu: f64, m: f64) -> f64 {
        match self {
            MomentFunctional::Inv1 => 1.0 / (mu + w),
            MomentFunctional::Ratio => w / (mu + w),
            MomentFunctional::Inv2 => 1.0 / ((mu + w) * (mu + w)),
            MomentFunctional::Ratio2 => w / ((mu + w) * (mu + w)),
            MomentFunctional::CenteredRatio2 => w * (w - m) / ((mu + w) * (mu + w)),
            MomentFunctional::CenteredInv2 => (w - m) / ((mu + w) * (mu + w)),
            MomentFunctional::Mean => w,
            MomentFunctional::AbsLog => w.ln().abs(),
        }
    }
}

impl ConductanceLaw {
    pub fn new(kind: LawKind, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidLaw(format!("kappa must be finite and > 0, got {kappa}")));
        }
        let cumulative = match &kind {
            LawKind::FiniteDiscrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidLaw("no atoms".into()));
                }
                let mut acc = 0.0;
                let mut cum = Vec::with_capacity(atoms.len());
                for &(v, p) in atoms {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::InvalidLaw(format!("atom value {v} is negative or not finite")));
                    }
                    if v > kappa {
                        return Err(Error::InvalidLaw(format!("atom value {v} exceeds kappa={kappa}")));
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::InvalidLaw(format!("atom probability {p} outside (0,1]")));
                    }
                    acc += p;
                    cum.push(acc);
                }
                if (acc - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidLaw(format!("atom probabilities sum to {acc}, not 1")));
                }
                if atoms.iter().all(|&(v, _)| v == 0.0) {
                    return Err(Error::InvalidLaw("law is the point mass at 0".into()));
                }
                cum
            }
            LawKind::UniformInterval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return Err(Error::InvalidLaw(format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
                }
                if *hi > kappa {
                    return Err(Error::InvalidLaw(format!("interval end {hi} exceeds kappa={kappa}")));
                }
                Vec::new()
            }
        };
        Ok(Self { kind, kappa, cumulative })
    }

    pub fn point(value: f64) -> Result<Self> {
        Self::new(LawKind::FiniteDiscrete { atoms: vec![(value, 1.0)] }, value)
    }

    /// `p·δ_a + (1−p)·δ_b` with `kappa = max(a, b)`.
    pub fn two_point(a: f64, b: f64, p: f64) -> Result<Self> {
        Self::two_point_with_kappa(a, b, p, a.max(b))
    }

    pub fn two_point_with_kappa(a: f64, b: f64, p: f64, kappa: f64) -> Result<Self> {
        let atoms = if p >= 1.0 {
            vec![(a, 1.0)]
        } else if p <= 0.0 {
            vec![(b, 1.0)]
        } else {
            vec![(a, p), (b, 1.0 - p)]
        };
        Self::new(LawKind::FiniteDiscrete { atoms }, kappa)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(LawKind::UniformInterval { lo, hi }, hi)
    }

    pub fn discrete(atoms: Vec<(f64, f64)>, kappa: f64) -> Result<Self> {
        Self::new(LawKind::FiniteDiscrete { atoms }, kappa)
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `(min, max)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            LawKind::FiniteDiscrete { atoms } => atoms.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &(v, _)| {
                (lo.min(v), hi.max(v))
            }),
            LawKind::UniformInterval { lo, hi } => (*lo, *hi),
        }
    }

    /// `q({0})`.
    pub fn mass_at_zero(&self) -> f64 {
        match &self.kind {
            LawKind::FiniteDiscrete { atoms } => atoms.iter().filter(|(v, _)| *v == 0.0).map(|(_, p)| p).sum(),
            LawKind::UniformInterval { .. } => 0.0,
        }
    }

    pub fn validate(&self) -> Capabilities {
        let (lo, hi) = self.support();
        let zero_free = self.mass_at_zero() == 0.0;
        Capabilities {
            bounded_support: hi <= self.kappa,
            uniformly_elliptic: lo > 0.0,
            zero_free,
            // a uniform law starting at 0 still has a finite log moment (∫₀¹|log x|dx = 1)
            log_moment_finite: zero_free,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            LawKind::FiniteDiscrete { atoms } => {
                if atoms.len() == 1 {
                    return atoms[0].0;
                }
                let u: f64 = rng.random();
                let idx = self.cumulative.partition_point(|&c| c <= u);
                atoms[idx.min(atoms.len() - 1)].0
            }
            LawKind::UniformInterval { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            LawKind::FiniteDiscrete { atoms } => atoms.iter().map(|&(v, p)| v * p).sum(),
            LawKind::UniformInterval { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// `E[f(ω)]` for `ω ~ q`.
    pub fn moment(&self, f: MomentFunctional, mu: f64) -> Result<f64> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("moment requires mu > 0, got {mu}")));
        }
        if f == MomentFunctional::AbsLog && self.mass_at_zero() > 0.0 {
            return Err(Error::AssumptionViolation(
                "E|log ω| requires q({0}) = 0 (log-moment condition of the constant speed walk)".into(),
            ));
        }
        let m = match f {
            MomentFunctional::CenteredRatio2 | MomentFunctional::CenteredInv2 => self.mean(),
            _ => 0.0,
        };
        Ok(match &self.kind {
            LawKind::FiniteDiscrete { atoms } => atoms.iter().map(|&(v, p)| p * f.eval(v, mu, m)).sum(),
            LawKind::UniformInterval { lo, hi } => match f {
                MomentFunctional::Mean => 0.5 * (lo + hi),
                MomentFunctional::AbsLog => (abs_log_antiderivative(*hi) - abs_log_antiderivative(*lo)) / (hi - lo),
                _ => {
                    let width = hi - lo;
                    adaptive_simpson(&|w| f.eval(w, mu, m), *lo, *hi, 1e-12 * width.max(1.0)) / width
                }
            },
        })
    }
}

/// `∫₀ˣ |log s| ds`.
fn abs_log_antiderivative(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= 1.0 {
        x - x * x.ln()
    } else {
        2.0 + x * x.ln() - x
    }
}

pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}
