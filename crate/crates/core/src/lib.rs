//! Biased random walks on dynamical random conductances.
//!
//! Exact event-driven samplers for the variable speed, normalized, constant speed
//! and totally asymmetric walks, the infected-set regeneration construction,
//! closed-form speed formulas, pathwise couplings and a statistical test harness.

pub mod birth_death;
pub mod cli;
pub mod closed_forms;
pub mod couplings;
pub mod env;
pub mod error;
pub mod law;
pub mod regeneration;
pub mod rng;
pub mod stats;
pub mod verification;
pub mod walkers;

pub use env::{Direction, DynEnvironment, Edge, EnvMode, Geometry, Site, MAX_DIM};
pub use error::{Error, Result};
pub use law::{Capabilities, ConductanceLaw, LawKind, MomentFunctional};
pub use regeneration::{estimate_speed, run_cycles, RegenCycleRecord, SpeedEstimate};
pub use walkers::{Trajectory, WalkerKind, WalkerParams};

/// Version string recorded in every JSON summary.
pub fn version_string() -> String {
    match option_env!("DYNWALK_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}
