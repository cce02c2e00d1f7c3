use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::ConductanceLaw;

pub const LAMBDA_RANGE: (f64, f64) = (-20.0, 20.0);
pub const MU_MAX: f64 = 1e4;
pub const D_RANGE: (usize, usize) = (1, 4);
pub const M_RANGE: (i64, i64) = (2, 64);
pub const MAX_GRID: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Conductance law as written in a config file, e.g. `{ kind = "two_point", a = 0.1, b = 1.0, p = 0.5 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Point {
        value: f64,
    },
    /// `p` is the probability of `a`.
    TwoPoint {
        a: f64,
        b: f64,
        p: f64,
        kappa: Option<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
        kappa: Option<f64>,
    },
}

impl LawSpec {
    pub fn build(&self) -> Result<ConductanceLaw> {
        match self {
            LawSpec::Point { value } => ConductanceLaw::point(*value),
            LawSpec::TwoPoint { a, b, p, kappa: None } => ConductanceLaw::two_point(*a, *b, *p),
            LawSpec::TwoPoint { a, b, p, kappa: Some(k) } => ConductanceLaw::two_point_with_kappa(*a, *b, *p, *k),
            LawSpec::Uniform { lo, hi } => ConductanceLaw::uniform(*lo, *hi),
            LawSpec::Discrete { values, probs, kappa } => {
                if values.len() != probs.len() {
                    return Err(Error::Config(format!("{} values but {} probabilities", values.len(), probs.len())));
                }
                let k = kappa.unwrap_or_else(|| values.iter().cloned().fold(0.0, f64::max));
                ConductanceLaw::discrete(values.iter().cloned().zip(probs.iter().cloned()).collect(), k)
            }
        }
    }
}

fn nums(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{t}` in law {what}"))))
        .collect()
}

/// Parses the command line form: `point:V`, `two_point:A,B:P[:KAPPA]`,
/// `uniform:LO,HI` or `discrete:V1,V2,..:P1,P2,..[:KAPPA]`.
pub fn parse_law(s: &str) -> Result<LawSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("cannot parse law `{s}`; expected e.g. two_point:0,1:0.5 or uniform:0,1"));
    let kappa = |i: usize| -> Result<Option<f64>> {
        match parts.get(i) {
            None => Ok(None),
            Some(k) => Ok(Some(nums(k, "kappa")?.first().copied().ok_or_else(bad)?)),
        }
    };
    match parts[0] {
        "point" if parts.len() == 2 => Ok(LawSpec::Point { value: nums(parts[1], "value")?[0] }),
        "two_point" if (3..=4).contains(&parts.len()) => {
            let ab = nums(parts[1], "atoms")?;
            if ab.len() != 2 {
                return Err(bad());
            }
            Ok(LawSpec::TwoPoint { a: ab[0], b: ab[1], p: nums(parts[2], "probability")?[0], kappa: kappa(3)? })
        }
        "uniform" if parts.len() == 2 => {
            let r = nums(parts[1], "interval")?;
            if r.len() != 2 {
                return Err(bad());
            }
            Ok(LawSpec::Uniform { lo: r[0], hi: r[1] })
        }
        "discrete" if (3..=4).contains(&parts.len()) => {
            Ok(LawSpec::Discrete { values: nums(parts[1], "values")?, probs: nums(parts[2], "probabilities")?, kappa: kappa(3)? })
        }
        _ => Err(bad()),
    }
}

/// A single value or a grid `start:stop:step` (inclusive) or `v1,v2,...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let s = match self {
            Scalar::Num(v) => return Ok(vec![*v]),
            Scalar::Text(s) => s.trim(),
        };
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{t}` for {name}")));
        if s.contains(':') {
            let p: Vec<&str> = s.split(':').collect();
            if p.len() != 3 {
                return Err(Error::Config(format!("grid for {name} must be start:stop:step, got `{s}`")));
            }
            let (a, b, h) = (parse(p[0])?, parse(p[1])?, parse(p[2])?);
            if !(h > 0.0) || b < a {
                return Err(Error::Config(format!("grid for {name} needs step > 0 and stop >= start, got `{s}`")));
            }
            let n = ((b - a) / h + 1e-9).floor() + 1.0;
            if n > MAX_GRID as f64 {
                return Err(Error::Config(format!(
                    "grid for {name} has {n} points, more than {MAX_GRID}; use a coarser step or split the sweep"
                )));
            }
            Ok((0..n as usize).map(|i| a + i as f64 * h).collect())
        } else {
            s.split(',').map(parse).collect()
        }
    }

    pub fn single(&self, name: &str) -> Result<f64> {
        let v = self.values(name)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Config(format!("{name} must be a single value here, got {} values (grids belong to `sweep`)", v.len()))),
        }
    }
}

/// Keys accepted in a `--config` TOML file; command line flags override them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub kind: Option<String>,
    pub lambda: Option<Scalar>,
    pub mu: Option<Scalar>,
    pub d: Option<usize>,
    pub m: Option<i64>,
    pub law: Option<LawSpec>,
    pub cycles: Option<usize>,
    pub samples: Option<usize>,
    pub horizon: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub l: Option<u32>,
    pub quick: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Field-wise `self` over `base`.
    pub fn over(self, base: FileConfig) -> FileConfig {
        FileConfig {
            experiment: self.experiment.or(base.experiment),
            seed: self.seed.or(base.seed),
            replicas: self.replicas.or(base.replicas),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            kind: self.kind.or(base.kind),
            lambda: self.lambda.or(base.lambda),
            mu: self.mu.or(base.mu),
            d: self.d.or(base.d),
            m: self.m.or(base.m),
            law: self.law.or(base.law),
            cycles: self.cycles.or(base.cycles),
            samples: self.samples.or(base.samples),
            horizon: self.horizon.or(base.horizon),
            epsilon: self.epsilon.or(base.epsilon),
            alpha: self.alpha.or(base.alpha),
            l: self.l.or(base.l),
            quick: self.quick.or(base.quick),
        }
    }
}

/// Fully resolved settings, echoed into every JSON summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub replicas: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub kind: Option<String>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub d: usize,
    pub m: Option<i64>,
    pub law: LawSpec,
    pub cycles: usize,
    pub samples: usize,
    pub horizon: Option<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub l: u32,
    pub quick: bool,
}

impl ExperimentConfig {
    pub fn resolve(experiment: &str, c: FileConfig) -> Result<Self> {
        if let Some(e) = &c.experiment {
            if e != experiment {
                return Err(Error::Config(format!("config file is for `{e}` but the subcommand is `{experiment}`")));
            }
        }
        let lambda = c.lambda.unwrap_or(Scalar::Num(1.0)).values("lambda")?;
        let mu = c.mu.unwrap_or(Scalar::Num(1.0)).values("mu")?;
        if lambda.len() * mu.len() > MAX_GRID {
            return Err(Error::Config(format!(
                "grid has {} points, more than {MAX_GRID}; use a coarser step or split the sweep",
                lambda.len() * mu.len()
            )));
        }
        for &l in &lambda {
            if !(LAMBDA_RANGE.0..=LAMBDA_RANGE.1).contains(&l) {
                return Err(Error::Config(format!("lambda = {l} outside [{}, {}]", LAMBDA_RANGE.0, LAMBDA_RANGE.1)));
            }
        }
        for &m in &mu {
            if !(m > 0.0 && m <= MU_MAX) {
                return Err(Error::Config(format!("mu = {m} outside (0, {MU_MAX}]")));
            }
        }
        let d = c.d.unwrap_or(1);
        if !(D_RANGE.0..=D_RANGE.1).contains(&d) {
            return Err(Error::Config(format!("d = {d} outside [{}, {}]", D_RANGE.0, D_RANGE.1)));
        }
        if let Some(m) = c.m {
            if !(M_RANGE.0..=M_RANGE.1).contains(&m) {
                return Err(Error::Config(format!("m = {m} outside [{}, {}]", M_RANGE.0, M_RANGE.1)));
            }
        }
        let law = c.law.unwrap_or(LawSpec::TwoPoint { a: 0.1, b: 1.0, p: 0.5, kappa: None });
        law.build()?;
        Ok(ExperimentConfig {
            experiment: experiment.to_string(),
            seed: c.seed.unwrap_or(0),
            replicas: c.replicas.unwrap_or(8).max(1),
            out: c.out,
            format: c.format.unwrap_or_default(),
            kind: c.kind,
            lambda,
            mu,
            d,
            m: c.m,
            law,
            cycles: c.cycles.unwrap_or(100_000),
            samples: c.samples.unwrap_or(1_000),
            horizon: c.horizon,
            epsilon: c.epsilon.unwrap_or(0.5),
            alpha: c.alpha.unwrap_or(2.0),
            l: c.l.unwrap_or(1),
            quick: c.quick.unwrap_or(false),
        })
    }

    pub fn single_lambda(&self) -> Result<f64> {
        match self.lambda.as_slice() {
            [x] => Ok(*x),
            v => Err(Error::Config(format!("lambda must be a single value here, got {} values (grids belong to `sweep`)", v.len()))),
        }
    }

    pub fn single_mu(&self) -> Result<f64> {
        match self.mu.as_slice() {
            [x] => Ok(*x),
            v => Err(Error::Config(format!("mu must be a single value here, got {} values (grids belong to `sweep`)", v.len()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_syntax() {
        assert_eq!(parse_law("two_point:0,1:0.5").unwrap(), LawSpec::TwoPoint { a: 0.0, b: 1.0, p: 0.5, kappa: None });
        assert_eq!(parse_law("two_point:0.1,1:0.5:2").unwrap(), LawSpec::TwoPoint { a: 0.1, b: 1.0, p: 0.5, kappa: Some(2.0) });
        assert_eq!(parse_law("uniform:0,1").unwrap(), LawSpec::Uniform { lo: 0.0, hi: 1.0 });
        assert_eq!(parse_law("point:1").unwrap(), LawSpec::Point { value: 1.0 });
        assert!(parse_law("two_point:0:0.5").is_err());
        assert!(parse_law("gauss:0,1").is_err());
        let l = parse_law("discrete:0.1,0.5,1:0.2,0.3,0.5").unwrap().build().unwrap();
        assert_eq!(l.kappa(), 1.0);
    }

    #[test]
    fn toml_law_table() {
        let c = FileConfig::parse("law = { kind = \"two_point\", a = 0.1, b = 1.0, p = 0.5, kappa = 1.0 }\nmu = 2").unwrap();
        assert_eq!(c.law, Some(LawSpec::TwoPoint { a: 0.1, b: 1.0, p: 0.5, kappa: Some(1.0) }));
        assert_eq!(c.mu, Some(Scalar::Num(2.0)));
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = FileConfig::parse("seed = 1\nlambada = 2").unwrap_err();
        assert!(e.to_string().contains("lambada"), "{e}");
        let e = FileConfig::parse("law = { kind = \"uniform\", lo = 0, hi = 1, top = 3 }").unwrap_err();
        assert!(e.to_string().contains("top"), "{e}");
    }

    #[test]
    fn grids() {
        assert_eq!(Scalar::Text("1:6:1".into()).values("lambda").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Scalar::Text("0.5,2".into()).values("mu").unwrap(), vec![0.5, 2.0]);
        let e = Scalar::Text("0:20000:1".into()).values("lambda").unwrap_err();
        assert!(e.to_string().contains("10000"), "{e}");
        let c = FileConfig { lambda: Some(Scalar::Text("0:10:0.1".into())), mu: Some(Scalar::Text("0.1:100:0.1".into())), ..Default::default() };
        assert!(ExperimentConfig::resolve("sweep", c).is_err());
    }

    #[test]
    fn ranges_and_precedence() {
        let file = FileConfig { seed: Some(3), d: Some(2), ..Default::default() };
        let flags = FileConfig { seed: Some(9), ..Default::default() };
        let c = ExperimentConfig::resolve("simulate", flags.over(file)).unwrap();
        assert_eq!((c.seed, c.d), (9, 2));
        for bad in [
            FileConfig { d: Some(5), ..Default::default() },
            FileConfig { m: Some(1), ..Default::default() },
            FileConfig { mu: Some(Scalar::Num(0.0)), ..Default::default() },
            FileConfig { lambda: Some(Scalar::Num(21.0)), ..Default::default() },
            FileConfig { experiment: Some("verify".into()), ..Default::default() },
        ] {
            assert!(ExperimentConfig::resolve("simulate", bad).is_err());
        }
    }
}
