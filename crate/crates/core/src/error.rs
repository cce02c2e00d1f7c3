use thiserror::Error;

/// Errors raised across the simulator and analytic toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid conductance law: {0}")]
    InvalidLaw(String),

    #[error("model assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("clock regression on edge {edge}: query at t={query} but last known time is {last}")]
    ClockRegression { edge: String, query: f64, last: f64 },

    #[error("operation `{op}` is not available in {mode} environment mode")]
    ModeViolation { op: &'static str, mode: &'static str },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error(
        "regeneration cycle overflow ({reason}): infected copies={copies}, elapsed={elapsed:.3e} \
         with mu={mu}, attempt rate={attempt_rate}; mu is probably too small for these caps"
    )]
    CycleOverflow {
        reason: &'static str,
        copies: usize,
        elapsed: f64,
        mu: f64,
        attempt_rate: f64,
    },

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("step cap of {0} exceeded")]
    StepOverflow(u64),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
