use crate::exact::Rat;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("resolution {requested} exceeds cap {cap}")]
    ResolutionCap { requested: u32, cap: u32 },

    #[error("grid scale m={m} needs resolution >= m, got {resolution}")]
    Precision { m: u32, resolution: u32 },

    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("degenerate parameter: {0}")]
    Degenerate(String),

    #[error("empty pair list")]
    EmptyPairs,

    #[error("tower of height {height} infeasible: best remainder {best} >= {requested}")]
    TowerInfeasible {
        height: u32,
        best: Box<Rat>,
        requested: Box<Rat>,
    },

    #[error("no exponent in [{lo}, {hi}] with the required correlation")]
    NoMixing { lo: u64, hi: u64 },

    #[error("orbit frequencies failed at every feasible block count: {0}")]
    FrequencyFailure(String),

    #[error("constructed perturbation failed verification: {0}")]
    CertificateFailure(String),

    #[error("neighborhood sublist for m={m} is empty")]
    InsufficientTruncation { m: u32 },

    #[error("element list not closed: {0}")]
    GroupNotClosed(String),

    #[error("separation failed: {0}")]
    SeparationFailed(String),

    #[error("product space of {cells} cells exceeds cap {cap}")]
    ProductCap { cells: u128, cap: u128 },

    #[error("parse error: {0}")]
    Parse(String),
}
