//! Monte-Carlo concentration profiles for product families.
//!
//! The one module where floating point is allowed. For a family of
//! metric probability spaces the profile `alpha(eps) = 1 - mu(B_eps(A))`
//! is estimated against a canonical half-mass reference set `A` (a
//! sublevel set of the natural 1-Lipschitz functional, or a ball around
//! the identity), with the distance to `A` computed in closed form per
//! sample. Canonical sets only: the definition's infimum over all
//! half-mass sets is out of reach, so the numbers are a lower-bound
//! probe of the true profile. Sampling is batched on a fixed grid of
//! ChaCha streams, so a run is reproducible bit for bit from its seed
//! regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVY_TOWER_STAGE_CAP: u32 = 8;
const BATCHES: u64 = 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConcentrationSpace {
    /// `T^d` with the normalized L1 metric `(2/d) sum |x_i - y_i|`
    /// (circle distances), diameter 1. Reference set: sublevel of
    /// `f(x) = (2/d) sum |x_i|` at its median 1/2.
    TorusPower { dim: u32 },
    /// `{0,1}^d` with Hamming distance over `d`. Reference set: the
    /// majority half `{x : sum x_i <= floor(d/2)}`.
    Hypercube { dim: u32 },
    /// `S_d` with normalized Hamming distance. Reference set: the ball
    /// around the identity of the smallest radius with mass >= 1/2;
    /// distances to the ball use the triangle lower bound.
    SymmetricGroup { dim: u32 },
}

impl ConcentrationSpace {
    pub fn dim(&self) -> u32 {
        match self {
            ConcentrationSpace::TorusPower { dim }
            | ConcentrationSpace::Hypercube { dim }
            | ConcentrationSpace::SymmetricGroup { dim } => *dim,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ConcentrationSpace::TorusPower { .. } => "torus_power",
            ConcentrationSpace::Hypercube { .. } => "hypercube",
            ConcentrationSpace::SymmetricGroup { .. } => "symmetric_group",
        }
    }

    /// `torus:<d>`, `cube:<d>`, `sym:<d>`, or `tower:<n>` for the
    /// `2^n`-dimensional torus stage.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, d) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("space spec {spec:?} needs kind:<dim>")))?;
        let d: u32 = d
            .parse()
            .map_err(|_| Error::Parse(format!("bad dimension in {spec:?}")))?;
        match kind {
            "torus" => Ok(ConcentrationSpace::TorusPower { dim: d }),
            "cube" => Ok(ConcentrationSpace::Hypercube { dim: d }),
            "sym" => Ok(ConcentrationSpace::SymmetricGroup { dim: d }),
            "tower" => levy_tower(d),
            _ => Err(Error::Parse(format!("unknown space family {kind:?}"))),
        }
    }
}

/// Stage `n` of the torus tower: the `2^n`-dimensional torus power,
/// the finite-dimensional compact stage sitting under the group of
/// circle-valued measurable functions on partition-measurable data.
pub fn levy_tower(stage: u32) -> Result<ConcentrationSpace> {
    if stage > LEVY_TOWER_STAGE_CAP {
        return Err(Error::Degenerate(format!(
            "tower stage {stage} above cap {LEVY_TOWER_STAGE_CAP}"
        )));
    }
    Ok(ConcentrationSpace::TorusPower { dim: 1u32 << stage })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileRow {
    pub eps: f64,
    /// Empirical `1 - mu(B_eps(A))`.
    pub alpha: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileTable {
    pub space: ConcentrationSpace,
    pub samples: u64,
    pub seed: u64,
    pub rows: Vec<ProfileRow>,
}

/// Estimate the concentration profile on an eps grid. Deterministic
/// given the seed: samples are drawn on a fixed grid of 256 ChaCha
/// streams independent of scheduling.
pub fn concentration_profile(
    space: &ConcentrationSpace,
    eps_grid: &[f64],
    samples: u64,
    seed: u64,
) -> Result<ProfileTable> {
    if space.dim() == 0 {
        return Err(Error::Degenerate("dimension must be >= 1".into()));
    }
    if samples == 0 {
        return Err(Error::Degenerate("need at least one sample".into()));
    }
    if eps_grid.iter().any(|e| *e < 0.0 || !e.is_finite()) {
        return Err(Error::Degenerate("eps grid must be nonnegative".into()));
    }
    let mut eps_sorted: Vec<f64> = eps_grid.to_vec();
    eps_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite eps"));

    let mut beyond = vec![0u64; eps_sorted.len()];
    let per_batch = samples / BATCHES;
    let extra = samples % BATCHES;
    for batch in 0..BATCHES {
        let count = per_batch + u64::from(batch < extra);
        if count == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch.wrapping_add(1));
        for _ in 0..count {
            let dist = sample_distance(space, &mut rng);
            // distances exceed eps on a suffix of the sorted grid
            for (i, &eps) in eps_sorted.iter().enumerate() {
                if dist > eps {
                    beyond[i] += 1;
                }
            }
        }
    }

    let rows: Vec<ProfileRow> = eps_sorted
        .iter()
        .zip(&beyond)
        .map(|(&eps, &misses)| {
            let alpha = misses as f64 / samples as f64;
            ProfileRow {
                eps,
                alpha,
                stderr: (alpha * (1.0 - alpha) / samples as f64).sqrt(),
            }
        })
        .collect();
    // monotone by construction (one distance per sample); keep the
    // guard in case the sampler changes
    for w in rows.windows(2) {
        debug_assert!(w[0].alpha >= w[1].alpha);
    }
    Ok(ProfileTable {
        space: space.clone(),
        samples,
        seed,
        rows,
    })
}

/// Distance from a fresh sample to the canonical half-mass set.
fn sample_distance(space: &ConcentrationSpace, rng: &mut ChaCha8Rng) -> f64 {
    match space {
        ConcentrationSpace::TorusPower { dim } => {
            let d = *dim as usize;
            // f(x) = (2/d) sum of circle distances to 0; A = {f <= 1/2};
            // moving each coordinate toward 0 reduces f at unit metric
            // rate, so dist(x, A) = max(0, f(x) - 1/2) exactly
            let mut sum = 0.0f64;
            for _ in 0..d {
                let x: f64 = rng.random();
                sum += x.min(1.0 - x);
            }
            let f = 2.0 * sum / d as f64;
            (f - 0.5).max(0.0)
        }
        ConcentrationSpace::Hypercube { dim } => {
            let d = *dim as usize;
            let mut ones = 0u64;
            for _ in 0..d {
                if rng.random::<bool>() {
                    ones += 1;
                }
            }
            let radius = (d / 2) as u64;
            ones.saturating_sub(radius) as f64 / d as f64
        }
        ConcentrationSpace::SymmetricGroup { dim } => {
            let d = *dim as usize;
            // sample a uniform permutation, count displaced points
            let mut perm: Vec<u32> = (0..d as u32).collect();
            for i in (1..d).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let displaced = perm
                .iter()
                .enumerate()
                .filter(|(i, &v)| *i as u32 != v)
                .count() as u64;
            let radius = identity_ball_radius(d as u64);
            displaced.saturating_sub(radius) as f64 / d as f64
        }
    }
}

/// Hamming radius of the identity ball holding at least half of `S_d`.
/// `{displaced <= d-1}` is the event of a fixed point, whose mass is
/// `1 - D_d/d! >= 1/2` for every `d >= 2`; one radius lower the mass
/// drops to about `1 - 2/e < 1/2`, so `d - 1` is the canonical choice.
fn identity_ball_radius(d: u64) -> u64 {
    match d {
        0 | 1 => 0,
        _ => d - 1,
    }
}
