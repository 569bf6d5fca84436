//! Exact-arithmetic laboratory for measure-preserving dynamics on the
//! dyadic measure algebra.
//!
//! The space is `[0,1)` cut into `2^n` half-open dyadic cells. Sets are
//! bit-vectors over the cells, automorphisms are cell permutations, and
//! step functions carry exact rational values, so every measure, norm and
//! neighborhood membership below is computed without rounding. On top of
//! that sit the dynamical constructions: Rohlin towers, tower-periodic
//! perturbations with machine-checkable whirly certificates, stable-set
//! operators with a Urysohn-style builder for group-continuous functions,
//! IP-prefix searches, skew-product rigidity scans, and (the one corner
//! where floating point is allowed) Monte-Carlo concentration profiles.

pub mod concentration;
pub mod error;
pub mod exact;
pub mod ip;
pub mod perm;
pub mod perturb;
pub mod set;
pub mod stable;
pub mod step;
pub mod tower;
pub mod whirly;

mod bits;

pub use error::{Error, Result};
pub use exact::Rat;
pub use perm::{DyadicPermutation, GroupTruncation, NeighborhoodSpec};
pub use perturb::{PerturbationParams, WhirlyCertificate};
pub use set::{DyadicSet, SetOp};
pub use step::StepFunction;
pub use tower::Tower;

/// Hard ceiling on the dyadic resolution. `2^22` cells keeps permutation
/// arrays and bitsets in the tens of megabytes.
pub const DEFAULT_RESOLUTION_CAP: u32 = 22;

/// Environment variable overriding [`DEFAULT_RESOLUTION_CAP`].
pub const RESOLUTION_CAP_ENV: &str = "WHIRLAB_RES_CAP";

/// The active resolution cap: the env override if set and parseable,
/// otherwise the default.
pub fn resolution_cap() -> u32 {
    std::env::var(RESOLUTION_CAP_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_RESOLUTION_CAP)
}

pub(crate) fn check_resolution(n: u32) -> Result<()> {
    let cap = resolution_cap();
    if n > cap {
        return Err(Error::ResolutionCap { requested: n, cap });
    }
    Ok(())
}
