//! Tower-periodic perturbations with machine-checkable whirly
//! certificates.
//!
//! Given a mixing-like `T0` and positive sets `A, B`, the construction
//! finds an exponent `n0` where `T0^n0 A` correlates with `B`, builds a
//! Rohlin tower of height `N = n * n0`, and rewires the tower ceilings:
//! a `gamma`-fraction of columns wraps with period `N`, the rest wrap
//! blockwise with period `n0`, and the remainder is frozen. The result
//! `S` is uniformly close to `T0` while `S^n0` sits deep inside `U_m`
//! and still smears `A` across `B`. Nothing is trusted: the three
//! certificate inequalities
//!
//! ```text
//! mu{S != T0} < eps
//! mu(S^n0 J_j symdiff J_j) < 2^-2m   for every scale-m grid cell
//! mu(S^n0 A meet B) > delta_m mu(A) mu(B)
//! ```
//!
//! are checked exactly before a certificate is returned, and
//! [`verify_bundle`] re-derives all three from raw bitsets with `S^n0`
//! rebuilt by repeated composition, so a serialized certificate can be
//! audited bit-exactly by a separate process.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{dyadic, pow2_inv, rat, Rat};
use crate::perm::DyadicPermutation;
use crate::set::DyadicSet;
use crate::tower::rohlin_tower;

/// `delta_m = 2^-2m / 10`.
pub fn default_delta(m: u32) -> Rat {
    pow2_inv(2 * m) / rat(10, 1)
}

/// `gamma = 2^-2m`.
pub fn default_gamma(m: u32) -> Rat {
    pow2_inv(2 * m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationParams {
    /// Neighborhood index: the certificate targets `U_m`.
    pub m: u32,
    /// Closeness budget for `mu{S != T0}`.
    #[serde(with = "crate::exact::frac_string")]
    pub eps: Rat,
    /// Orbit-frequency tolerance: relative error, and one minus the
    /// required fraction of good starting cells.
    #[serde(with = "crate::exact::frac_string")]
    pub eta: Rat,
    /// Upper bound of the `n0` correlation search.
    pub horizon: u64,
    /// Fraction of tower columns wrapped with full period `N`.
    #[serde(with = "crate::exact::frac_string")]
    pub gamma: Rat,
    /// Intersection threshold coefficient.
    #[serde(with = "crate::exact::frac_string")]
    pub delta_m: Rat,
    /// Number of doubling steps of the block count before giving up.
    pub retry_cap: u32,
    /// Optional pre-check: reject `T0` whose mixing score on `(A, B)`
    /// is at or above this bound.
    #[serde(default, with = "opt_frac_string")]
    pub mixing_threshold: Option<Rat>,
}

mod opt_frac_string {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        v: &Option<Rat>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(r) => ser.serialize_some(&crate::exact::to_frac_string(r)),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Option<Rat>, D::Error> {
        let s = Option::<String>::deserialize(de)?;
        s.map(|s| crate::exact::parse_frac(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl PerturbationParams {
    pub fn new(m: u32, eps: Rat) -> Self {
        PerturbationParams {
            m,
            eps,
            eta: rat(1, 100),
            horizon: 4096,
            gamma: default_gamma(m),
            delta_m: default_delta(m),
            retry_cap: 8,
            mixing_threshold: Some(rat(1, 2)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps <= Rat::zero() || self.eta <= Rat::zero() {
            return Err(Error::Degenerate("eps and eta must be positive".into()));
        }
        if self.gamma <= Rat::zero() || self.gamma > pow2_inv(2 * self.m) {
            return Err(Error::Degenerate(format!(
                "gamma must lie in (0, 2^-2m], got {}",
                self.gamma
            )));
        }
        if self.delta_m <= Rat::zero() {
            return Err(Error::Degenerate("delta_m must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Degenerate("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// The three verified inequalities of a successful perturbation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhirlyCertificate {
    pub n0: u64,
    /// Tower height `N = n * n0`.
    pub big_n: u64,
    #[serde(with = "crate::exact::frac_string")]
    pub closeness: Rat,
    /// Worst `U_m` defect of `S^n0` over all scale-m grid cells.
    #[serde(with = "crate::exact::frac_string")]
    pub um_defect: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub bound_lhs: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub bound_rhs: Rat,
}

/// Construction-side bookkeeping, returned for inspection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationDiagnostics {
    /// Chosen block count `n`, so `N = n * n0`.
    pub block_count: u64,
    /// Whether the orbit-frequency gate was met at the chosen `n`.
    pub frequency_gate_met: bool,
    /// Fraction of starting cells passing the frequency test there.
    #[serde(with = "crate::exact::frac_string")]
    pub gate_fraction: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub tower_remainder: Rat,
    pub base_cells: u64,
    pub gamma_base_cells: u64,
    #[serde(default, with = "opt_frac_string")]
    pub mixing_score: Option<Rat>,
}

pub struct PerturbationOutcome {
    pub s: DyadicPermutation,
    pub certificate: WhirlyCertificate,
    pub diagnostics: PerturbationDiagnostics,
}

/// Everything needed to re-audit a certificate offline.
#[derive(Clone, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub t0: DyadicPermutation,
    pub s: DyadicPermutation,
    pub a: DyadicSet,
    pub b: DyadicSet,
    pub params: PerturbationParams,
    pub certificate: WhirlyCertificate,
}

/// Build `S` close to `T0` with a verified whirly certificate.
pub fn whirly_perturb(
    t0: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    params: &PerturbationParams,
) -> Result<PerturbationOutcome> {
    params.validate()?;
    let resolution = t0.resolution().max(a.resolution()).max(b.resolution());
    let t0 = t0.refine(resolution)?;
    let a = a.refine(resolution)?;
    let b = b.refine(resolution)?;
    let mu_a = a.measure();
    let mu_b = b.measure();
    if mu_a.is_zero() || mu_b.is_zero() {
        return Err(Error::Degenerate("perturbation needs positive sets".into()));
    }

    let mixing_score = match &params.mixing_threshold {
        Some(threshold) => {
            let probe = t0.mixing_score(64, &[(a.clone(), b.clone())])?;
            if &probe >= threshold {
                return Err(Error::NoMixing { lo: 1, hi: 64 });
            }
            Some(probe)
        }
        None => None,
    };

    // Step 1: exponents n0 >= ceil(10/eps) within the horizon where
    // T0^n0 A correlates with B above half the product measure. The
    // first qualifying exponent is tried first; later ones serve as
    // fallbacks when its tower arithmetic happens to be unlucky.
    let n0_min = ceil_to_u64(&(rat(10, 1) / params.eps.clone())).max(1);
    if n0_min > params.horizon {
        return Err(Error::Degenerate(format!(
            "horizon {} below the n0 floor {n0_min}",
            params.horizon
        )));
    }
    let half_product = mu_a.clone() * mu_b.clone() / rat(2, 1);
    let mut n0_candidates = Vec::new();
    let mut image = a.clone();
    for k in 1..=params.horizon {
        image = t0.push_forward(&image)?;
        if k >= n0_min && image.intersect(&b)?.measure() > half_product {
            n0_candidates.push(k);
            if n0_candidates.len() >= N0_CANDIDATE_CAP {
                break;
            }
        }
    }
    if n0_candidates.is_empty() {
        return Err(Error::NoMixing {
            lo: n0_min,
            hi: params.horizon,
        });
    }

    let mut last_failure = String::new();
    let mut any_gate_met = false;
    let mut any_feasible = false;
    for &n0 in &n0_candidates {
        let d = t0.power(n0 as i64).push_forward(&a)?.intersect(&b)?;

        // Steps 2-6 over the doubling block-count ladder. The frequency
        // gate selects the first block count whose orbit statistics meet
        // eta; when no feasible block count does (on coarse grids none
        // can), the ladder falls back to ascending order and the exact
        // certificate verification arbitrates.
        let eps_half = params.eps.clone() / rat(2, 1);
        let mut candidates: Vec<(u64, GateReport)> = Vec::new();
        let mut n_blocks = 2u64;
        for _ in 0..params.retry_cap {
            let height = n_blocks * n0;
            if height > (1u64 << resolution) {
                break;
            }
            let gate = frequency_gate(&t0, &d, params.m, n_blocks, &params.eta)?;
            candidates.push((n_blocks, gate));
            n_blocks *= 2;
        }
        any_feasible |= !candidates.is_empty();
        let gate_order: Vec<usize> = {
            let mut order: Vec<usize> = (0..candidates.len())
                .filter(|&i| candidates[i].1.met)
                .collect();
            order.extend((0..candidates.len()).filter(|&i| !candidates[i].1.met));
            order
        };

        for &idx in &gate_order {
            let (blocks, gate) = &candidates[idx];
            any_gate_met |= gate.met;
            match attempt(&t0, &a, &b, params, n0, *blocks, &eps_half, &mu_a, &mu_b) {
                Ok((s, certificate, tower_remainder, base_cells, gamma_base_cells)) => {
                    return Ok(PerturbationOutcome {
                        s,
                        certificate,
                        diagnostics: PerturbationDiagnostics {
                            block_count: *blocks,
                            frequency_gate_met: gate.met,
                            gate_fraction: gate.fraction.clone(),
                            tower_remainder,
                            base_cells,
                            gamma_base_cells,
                            mixing_score: mixing_score.clone(),
                        },
                    });
                }
                Err(e) => last_failure = format!("n0={n0} n={blocks}: {e}"),
            }
        }
    }
    if !any_feasible {
        Err(Error::FrequencyFailure(format!(
            "no block count fits a tower of height >= {} at resolution {resolution}",
            2 * n0_candidates[0]
        )))
    } else if any_gate_met {
        Err(Error::CertificateFailure(last_failure))
    } else {
        Err(Error::FrequencyFailure(format!(
            "gate unmet at every feasible block count and no attempt verified; last: {last_failure}"
        )))
    }
}

const N0_CANDIDATE_CAP: usize = 16;

struct GateReport {
    met: bool,
    fraction: Rat,
}

/// Fraction of starting cells whose length-`n` orbit frequencies of `D`
/// and of every scale-`m` grid cell fall within relative error `eta` of
/// the respective measures.
fn frequency_gate(
    t0: &DyadicPermutation,
    d: &DyadicSet,
    m: u32,
    n: u64,
    eta: &Rat,
) -> Result<GateReport> {
    let resolution = t0.resolution();
    let cells = 1usize << resolution;
    let mut tracked: Vec<DyadicSet> = vec![d.clone()];
    for j in 0..1usize << m {
        let width = resolution - m;
        tracked.push(DyadicSet::from_cells(
            resolution,
            (j << width)..((j + 1) << width),
        )?);
    }
    let mut good = vec![true; cells];
    let inv = t0.inverse();
    for set in &tracked {
        let mu = set.measure();
        if mu.is_zero() {
            continue;
        }
        // visit counts: cell c sees the set at step i iff c is in
        // T0^-i(set)
        let mut counts = vec![0u32; cells];
        let mut pulled = set.clone();
        for step in 0..n {
            if step > 0 {
                pulled = inv.push_forward(&pulled)?;
            }
            for c in pulled.iter_cells() {
                counts[c] += 1;
            }
        }
        let scale = rat(n as i64, 1);
        let lo = (Rat::one() - eta.clone()) * mu.clone() * scale.clone();
        let hi = (Rat::one() + eta.clone()) * mu * scale;
        for (c, flag) in good.iter_mut().enumerate() {
            let visits = rat(counts[c] as i64, 1);
            if visits < lo || visits > hi {
                *flag = false;
            }
        }
    }
    let passing = good.iter().filter(|&&g| g).count();
    let fraction = dyadic(passing as i64, resolution);
    let met = fraction >= Rat::one() - eta.clone();
    Ok(GateReport { met, fraction })
}

#[allow(clippy::too_many_arguments)]
fn attempt(
    t0: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    params: &PerturbationParams,
    n0: u64,
    n_blocks: u64,
    eps_half: &Rat,
    mu_a: &Rat,
    mu_b: &Rat,
) -> Result<(DyadicPermutation, WhirlyCertificate, Rat, u64, u64)> {
    let resolution = t0.resolution();
    let cells = 1usize << resolution;
    let height = n_blocks * n0;
    let height_u32 = u32::try_from(height)
        .map_err(|_| Error::Degenerate(format!("tower height {height} overflows")))?;
    let tower = rohlin_tower(t0, height_u32, eps_half)?;

    // gamma split: the first ceil(gamma |base|) base cells in index order
    let base_cells: Vec<usize> = tower.base.iter_cells().collect();
    let total_cols = base_cells.len();
    let gamma_cols = ceil_to_u64(&(params.gamma.clone() * rat(total_cols as i64, 1))) as usize;
    if gamma_cols == 0 || gamma_cols >= total_cols {
        return Err(Error::CertificateFailure(format!(
            "degenerate gamma split: {gamma_cols} of {total_cols} columns"
        )));
    }

    let mut s_map: Vec<u32> = t0.map().to_vec();
    // cell roles: 0 untouched, 1 gamma part, 2 period-n0 part
    let mut role = vec![0u8; cells];
    for (col, &base) in base_cells.iter().enumerate() {
        let is_gamma = col < gamma_cols;
        let mut cell = base;
        let mut block_start = base;
        for floor in 0..height {
            role[cell] = if is_gamma { 1 } else { 2 };
            if floor % n0 == 0 {
                block_start = cell;
            }
            if floor == height - 1 {
                s_map[cell] = if is_gamma {
                    base as u32
                } else {
                    block_start as u32
                };
            } else if !is_gamma && floor % n0 == n0 - 1 {
                s_map[cell] = block_start as u32;
            }
            cell = t0.apply(cell);
        }
    }
    for cell in tower.remainder.iter_cells() {
        s_map[cell] = cell as u32;
    }
    let s = DyadicPermutation::new(resolution, s_map)?;

    // structural check: S may differ from T0 only on block ceilings of
    // the period-n0 part, the gamma ceiling, and the remainder
    let mut allowed = tower.remainder.clone();
    let ceiling = tower.floor(height_u32 - 1)?;
    allowed = allowed.union(&ceiling)?;
    let rest_part = DyadicSet::from_cells(resolution, (0..cells).filter(|&c| role[c] == 2))?;
    for blk in 1..n_blocks {
        let blk_ceiling = tower.floor((blk * n0 - 1) as u32)?;
        allowed = allowed.union(&blk_ceiling.intersect(&rest_part)?)?;
    }
    let diff = DyadicSet::from_cells(
        resolution,
        (0..cells).filter(|&c| s.apply(c) != t0.apply(c)),
    )?;
    if !diff.is_subset_of(&allowed)? {
        return Err(Error::CertificateFailure(
            "perturbation leaked outside ceilings and remainder".into(),
        ));
    }

    // period check, cell by cell: S^n0 fixes the whole period-n0 part
    let s_n0 = s.power(n0 as i64);
    for (c, &r) in role.iter().enumerate() {
        if r == 2 && s_n0.apply(c) != c {
            return Err(Error::CertificateFailure(format!(
                "S^n0 moves cell {c} of the period-n0 part"
            )));
        }
    }

    // the three certificate inequalities, exact
    let closeness = s.uniform_dist(t0)?;
    if closeness >= params.eps {
        return Err(Error::CertificateFailure(format!(
            "closeness {closeness} >= eps {}",
            params.eps
        )));
    }
    let (_, um_defect) = s_n0.worst_grid_defect(params.m)?;
    if um_defect >= pow2_inv(2 * params.m) {
        return Err(Error::CertificateFailure(format!(
            "S^n0 outside U_{}: defect {um_defect}",
            params.m
        )));
    }
    let bound_lhs = s_n0.push_forward(a)?.intersect(b)?.measure();
    let bound_rhs = params.delta_m.clone() * mu_a.clone() * mu_b.clone();
    if bound_lhs <= bound_rhs {
        return Err(Error::CertificateFailure(format!(
            "intersection bound failed: {bound_lhs} <= {bound_rhs}"
        )));
    }

    let certificate = WhirlyCertificate {
        n0,
        big_n: height,
        closeness,
        um_defect,
        bound_lhs,
        bound_rhs,
    };
    Ok((
        s,
        certificate,
        tower.remainder_measure(),
        total_cols as u64,
        gamma_cols as u64,
    ))
}

fn ceil_to_u64(r: &Rat) -> u64 {
    let c: BigInt = r.ceil().to_integer();
    c.to_u64().unwrap_or(u64::MAX)
}

/// One violated certificate condition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Violation {
    pub inequality: String,
    pub detail: String,
}

/// Independent audit of a serialized certificate: every quantity is
/// recomputed from the raw permutations and bitsets, with `S^n0` rebuilt
/// by repeated composition rather than cycle arithmetic, then compared
/// bit-exactly against the stored values and thresholds.
pub fn verify_bundle(bundle: &CertificateBundle) -> Result<Vec<Violation>> {
    let mut violations = Vec::new();
    let cert = &bundle.certificate;
    let t0 = &bundle.t0;
    let s = &bundle.s;
    let resolution = s.resolution();
    if t0.resolution() != resolution
        || bundle.a.resolution() > resolution
        || bundle.b.resolution() > resolution
    {
        return Err(Error::Degenerate(
            "bundle resolutions are inconsistent".into(),
        ));
    }
    let a = bundle.a.refine(resolution)?;
    let b = bundle.b.refine(resolution)?;

    let closeness = s.uniform_dist(t0)?;
    if closeness != cert.closeness {
        violations.push(Violation {
            inequality: "closeness-recompute".into(),
            detail: format!("stored {} recomputed {}", cert.closeness, closeness),
        });
    }
    if closeness >= bundle.params.eps {
        violations.push(Violation {
            inequality: "closeness < eps".into(),
            detail: format!("{closeness} >= {}", bundle.params.eps),
        });
    }

    let mut s_n0 = DyadicPermutation::identity(resolution)?;
    for _ in 0..cert.n0 {
        s_n0 = s.compose(&s_n0)?;
    }
    let (_, um_defect) = s_n0.worst_grid_defect(bundle.params.m)?;
    if um_defect != cert.um_defect {
        violations.push(Violation {
            inequality: "um-defect-recompute".into(),
            detail: format!("stored {} recomputed {}", cert.um_defect, um_defect),
        });
    }
    if um_defect >= pow2_inv(2 * bundle.params.m) {
        violations.push(Violation {
            inequality: "um_defect < 2^-2m".into(),
            detail: format!("{um_defect} >= {}", pow2_inv(2 * bundle.params.m)),
        });
    }

    let lhs = s_n0.push_forward(&a)?.intersect(&b)?.measure();
    let rhs = bundle.params.delta_m.clone() * a.measure() * b.measure();
    if lhs != cert.bound_lhs {
        violations.push(Violation {
            inequality: "bound-lhs-recompute".into(),
            detail: format!("stored {} recomputed {}", cert.bound_lhs, lhs),
        });
    }
    if rhs != cert.bound_rhs {
        violations.push(Violation {
            inequality: "bound-rhs-recompute".into(),
            detail: format!("stored {} recomputed {}", cert.bound_rhs, rhs),
        });
    }
    if lhs <= rhs {
        violations.push(Violation {
            inequality: "bound_lhs > bound_rhs".into(),
            detail: format!("{lhs} <= {rhs}"),
        });
    }
    Ok(violations)
}

// -------- V_{k,m} membership and the generic scan ---------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VkmWitness {
    pub exponent: i64,
    #[serde(with = "crate::exact::frac_string")]
    pub grid_defect: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub intersection: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub threshold: Rat,
}

/// Smallest `|n| <= search_bound` (zero first, then positive before
/// negative) with `T^n` in `U_m` and
/// `mu(T^n A meet B) > delta_m mu(A) mu(B)`.
pub fn v_km_member(
    t: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    m: u32,
    delta_m: &Rat,
    search_bound: u64,
) -> Result<Option<VkmWitness>> {
    vkm_scan(t, a, b, m, delta_m, search_bound, true)
}

fn vkm_scan(
    t: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    m: u32,
    delta_m: &Rat,
    search_bound: u64,
    allow_zero: bool,
) -> Result<Option<VkmWitness>> {
    let mu_a = a.measure();
    let mu_b = b.measure();
    if mu_a.is_zero() || mu_b.is_zero() {
        return Err(Error::Degenerate("V_{k,m} needs positive sets".into()));
    }
    let threshold = delta_m.clone() * mu_a * mu_b;
    let um_threshold = pow2_inv(2 * m);
    let check = |p: &DyadicPermutation, exponent: i64| -> Result<Option<VkmWitness>> {
        let (_, defect) = p.worst_grid_defect(m)?;
        if defect >= um_threshold {
            return Ok(None);
        }
        let inter = p.push_forward(a)?.intersect(b)?.measure();
        if inter > threshold {
            Ok(Some(VkmWitness {
                exponent,
                grid_defect: defect,
                intersection: inter,
                threshold: threshold.clone(),
            }))
        } else {
            Ok(None)
        }
    };
    let id = DyadicPermutation::identity(t.resolution())?;
    if allow_zero {
        if let Some(w) = check(&id, 0)? {
            return Ok(Some(w));
        }
    }
    let inv = t.inverse();
    let mut pos = id.clone();
    let mut neg = id;
    for k in 1..=search_bound {
        pos = t.compose(&pos)?;
        neg = inv.compose(&neg)?;
        if let Some(w) = check(&pos, k as i64)? {
            return Ok(Some(w));
        }
        if let Some(w) = check(&neg, -(k as i64))? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// Families of automorphisms for the generic scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerSpec {
    Identity { resolution: u32 },
    Baker { resolution: u32 },
    Cycles { resolution: u32, count: u32 },
    Rotations { resolution: u32, count: u32 },
}

impl SamplerSpec {
    pub fn resolution(&self) -> u32 {
        match self {
            SamplerSpec::Identity { resolution }
            | SamplerSpec::Baker { resolution }
            | SamplerSpec::Cycles { resolution, .. }
            | SamplerSpec::Rotations { resolution, .. } => *resolution,
        }
    }

    /// `id:<n>`, `baker:<n>`, `rand:<n>:<count>`, `rot:<n>:<count>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let p = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad integer {s:?} in sampler {spec:?}")))
        };
        match parts.as_slice() {
            ["id", n] => Ok(SamplerSpec::Identity { resolution: p(n)? }),
            ["baker", n] => Ok(SamplerSpec::Baker { resolution: p(n)? }),
            ["rand", n, c] => Ok(SamplerSpec::Cycles {
                resolution: p(n)?,
                count: p(c)?,
            }),
            ["rot", n, c] => Ok(SamplerSpec::Rotations {
                resolution: p(n)?,
                count: p(c)?,
            }),
            _ => Err(Error::Parse(format!("unknown sampler spec {spec:?}"))),
        }
    }

    /// The deterministic member list; `seed` feeds the cycle sampler.
    pub fn members(&self, seed: u64) -> Result<Vec<(String, DyadicPermutation)>> {
        match self {
            SamplerSpec::Identity { resolution } => Ok(vec![(
                format!("id:{resolution}"),
                DyadicPermutation::identity(*resolution)?,
            )]),
            SamplerSpec::Baker { resolution } => Ok(vec![(
                format!("baker:{resolution}"),
                DyadicPermutation::baker(*resolution)?,
            )]),
            SamplerSpec::Cycles { resolution, count } => (0..*count)
                .map(|i| {
                    let s = seed.wrapping_add(i as u64);
                    Ok((
                        format!("rand:{resolution}:seed={s}"),
                        DyadicPermutation::random_cycle(*resolution, s)?,
                    ))
                })
                .collect(),
            SamplerSpec::Rotations { resolution, count } => (0..*count)
                .map(|i| {
                    let q = 2 * i as i64 + 3;
                    Ok((
                        format!("rot:1/{q}:{resolution}"),
                        DyadicPermutation::rotation_convergent(1, q, *resolution)?,
                    ))
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanRow {
    pub m: u32,
    pub attempts: u64,
    pub hits: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanTable {
    pub sampler: SamplerSpec,
    pub pair_count: u32,
    pub search_bound: u64,
    pub seed: u64,
    pub disjoint_pairs: bool,
    pub allow_zero: bool,
    pub rows: Vec<ScanRow>,
    /// hits / attempts over all of `m <= m_max`, exact.
    #[serde(with = "crate::exact::frac_string")]
    pub pass_rate: Rat,
}

/// Empirical pass-rate probe: how often a sampled family admits a
/// `V_{k,m}` witness on seeded random pairs. Deterministic given the
/// seed. `disjoint_pairs` draws `B` inside the complement of `A`
/// (overlap witnesses at `n = 0` are then impossible); `allow_zero`
/// admits the zero exponent.
pub fn generic_scan(
    sampler: &SamplerSpec,
    pair_count: u32,
    m_max: u32,
    search_bound: u64,
    seed: u64,
    disjoint_pairs: bool,
    allow_zero: bool,
) -> Result<ScanTable> {
    let resolution = sampler.resolution();
    if resolution < 2 {
        return Err(Error::Degenerate("scan needs resolution >= 2".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let half = 1usize << (resolution - 1);
    let pairs: Vec<(DyadicSet, DyadicSet)> = (0..pair_count)
        .map(|_| {
            let a = DyadicSet::random(resolution, half, &mut rng)?;
            let b = if disjoint_pairs {
                // a random half of the complement
                let pool: Vec<usize> = a.complement().iter_cells().collect();
                let mut picked = Vec::with_capacity(pool.len() / 2);
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                for i in 0..pool.len() / 2 {
                    let j = rng.random_range(i..pool.len());
                    idx.swap(i, j);
                    picked.push(pool[idx[i]]);
                }
                DyadicSet::from_cells(resolution, picked)?
            } else {
                DyadicSet::random(resolution, half, &mut rng)?
            };
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let members = sampler.members(seed)?;
    let mut rows = Vec::new();
    let mut total_attempts = 0u64;
    let mut total_hits = 0u64;
    for m in 1..=m_max {
        let delta = default_delta(m);
        let mut attempts = 0u64;
        let mut hits = 0u64;
        for (_, t) in &members {
            for (a, b) in &pairs {
                attempts += 1;
                if vkm_scan(t, a, b, m, &delta, search_bound, allow_zero)?.is_some() {
                    hits += 1;
                }
            }
        }
        total_attempts += attempts;
        total_hits += hits;
        rows.push(ScanRow { m, attempts, hits });
    }
    Ok(ScanTable {
        sampler: sampler.clone(),
        pair_count,
        search_bound,
        seed,
        disjoint_pairs,
        allow_zero,
        rows,
        pass_rate: if total_attempts == 0 {
            Rat::zero()
        } else {
            rat(total_hits as i64, total_attempts as i64)
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter_pair(resolution: u32) -> (DyadicSet, DyadicSet) {
        let a = DyadicSet::interval(resolution, &rat(0, 1), &rat(1, 4)).unwrap();
        let b = DyadicSet::interval(resolution, &rat(1, 2), &rat(3, 4)).unwrap();
        (a, b)
    }

    #[test]
    fn default_constants_match_printed_values() {
        // delta_2 = 1/160, gamma_2 = 1/16
        assert_eq!(default_delta(2), rat(1, 160));
        assert_eq!(default_gamma(2), rat(1, 16));
        assert_eq!(default_delta(1), rat(1, 40));
        assert_eq!(default_gamma(1), rat(1, 4));
    }

    #[test]
    fn perturb_full_space_pair() {
        let resolution = 10u32;
        let t0 = DyadicPermutation::baker(resolution).unwrap();
        let x = DyadicSet::full(resolution).unwrap();
        let params = PerturbationParams::new(1, rat(1, 8));
        let out = whirly_perturb(&t0, &x, &x, &params).unwrap();
        assert!(out.certificate.closeness < rat(1, 8));
        assert!(out.certificate.bound_lhs > out.certificate.bound_rhs);
        assert_eq!(
            out.certificate.big_n,
            out.diagnostics.block_count * out.certificate.n0
        );
    }

    #[test]
    fn perturb_disjoint_pair_and_verify_bundle() {
        let resolution = 12u32;
        let t0 = DyadicPermutation::baker(resolution).unwrap();
        let (a, b) = quarter_pair(resolution);
        let params = PerturbationParams::new(1, rat(1, 16));
        let out = whirly_perturb(&t0, &a, &b, &params).unwrap();
        assert!(out.certificate.bound_lhs > out.certificate.bound_rhs);
        let bundle = CertificateBundle {
            t0,
            s: out.s,
            a,
            b,
            params,
            certificate: out.certificate,
        };
        assert!(verify_bundle(&bundle).unwrap().is_empty());

        let json = serde_json::to_string(&bundle).unwrap();
        let back: CertificateBundle = serde_json::from_str(&json).unwrap();
        assert!(verify_bundle(&back).unwrap().is_empty());
    }

    #[test]
    fn tampered_bundle_names_the_violation() {
        let resolution = 10u32;
        let t0 = DyadicPermutation::baker(resolution).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = DyadicSet::random(resolution, 1 << (resolution - 1), &mut rng).unwrap();
        let b = DyadicSet::random(resolution, 1 << (resolution - 1), &mut rng).unwrap();
        let params = PerturbationParams::new(1, rat(1, 16));
        let out = whirly_perturb(&t0, &a, &b, &params).unwrap();
        let mut bundle = CertificateBundle {
            t0,
            s: out.s.clone(),
            a,
            b,
            params,
            certificate: out.certificate,
        };
        let mut map = out.s.map().to_vec();
        map.swap(0, 1);
        bundle.s = DyadicPermutation::new(resolution, map).unwrap();
        let violations = verify_bundle(&bundle).unwrap();
        assert!(!violations.is_empty());
        assert!(violations
            .iter()
            .any(|v| v.inequality.contains("closeness")));
    }

    #[test]
    fn vkm_zero_witness_from_overlap() {
        let t = DyadicPermutation::random_cycle(8, 2).unwrap();
        let a = DyadicSet::from_cells(8, 0..128).unwrap();
        let w = v_km_member(&t, &a, &a, 1, &default_delta(1), 4)
            .unwrap()
            .unwrap();
        assert_eq!(w.exponent, 0);
        assert_eq!(w.intersection, rat(1, 2));
    }

    #[test]
    fn vkm_rotation_has_no_small_witness() {
        // T^n in U_1 moves every cell less than a quarter turn, so T^n A
        // never reaches B for separated quarters
        let (a, b) = quarter_pair(10);
        let t = DyadicPermutation::rotation_convergent(1, 3, 10).unwrap();
        let w = v_km_member(&t, &a, &b, 1, &default_delta(1), 3).unwrap();
        assert!(w.is_none(), "unexpected witness {w:?}");
    }

    #[test]
    fn scan_identity_zero_on_disjoint_pairs() {
        let (a, b) = quarter_pair(6);
        let w = v_km_member(
            &DyadicPermutation::identity(6).unwrap(),
            &a,
            &b,
            1,
            &default_delta(1),
            8,
        )
        .unwrap();
        assert!(w.is_none());

        // the full scan with disjoint pairs and n = 0 excluded
        let table = generic_scan(
            &SamplerSpec::Identity { resolution: 6 },
            6,
            2,
            16,
            3,
            true,
            false,
        )
        .unwrap();
        assert_eq!(table.pass_rate, rat(0, 1));
    }

    #[test]
    fn scan_baselines_frozen() {
        // random-cycle sampler on overlapping half-measure pairs: the
        // zero exponent always qualifies, so the baseline is full marks
        let table = generic_scan(
            &SamplerSpec::Cycles {
                resolution: 14,
                count: 2,
            },
            20,
            2,
            32,
            7,
            false,
            true,
        )
        .unwrap();
        assert_eq!(table.pass_rate, rat(1, 1));
        for row in &table.rows {
            assert_eq!((row.hits, row.attempts), (40, 40), "m={}", row.m);
        }
    }

    #[test]
    fn scan_is_deterministic_and_orders_families() {
        let cycles = SamplerSpec::Cycles {
            resolution: 8,
            count: 2,
        };
        let t1 = generic_scan(&cycles, 4, 2, 64, 99, false, true).unwrap();
        let t2 = generic_scan(&cycles, 4, 2, 64, 99, false, true).unwrap();
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
        let rotations = SamplerSpec::Rotations {
            resolution: 8,
            count: 2,
        };
        let tr = generic_scan(&rotations, 4, 2, 64, 99, false, true).unwrap();
        assert!(
            tr.pass_rate <= t1.pass_rate,
            "rotations {} should not beat cycles {}",
            tr.pass_rate,
            t1.pass_rate
        );
    }

    #[test]
    fn sampler_spec_strings() {
        assert!(matches!(
            SamplerSpec::parse("rand:14:8").unwrap(),
            SamplerSpec::Cycles {
                resolution: 14,
                count: 8
            }
        ));
        assert!(SamplerSpec::parse("x:1").is_err());
    }
}
