//! Witness searches for the whirly and rigidity properties of a single
//! automorphism.
//!
//! A whirly witness for `(T, A, B, m)` is an exponent `n` with
//! `T^n` in `U_m` and `mu(T^n A meet B) > 0`; a rigidity witness is a
//! positive `n` with `T^n` in `U_m`. Scans go outward from zero,
//! positive exponent before negative on the same magnitude, so results
//! are reproducible; chunked scans over disjoint ranges merge to the
//! same answer.
//!
//! Modeling note: the full definitions quantify over every identity
//! neighborhood; at finite resolution only the `U_m` family is tested,
//! taken as cofinal. Absence of a witness within a bound is evidence,
//! never a certificate of the negative.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{pow2_inv, Rat};
use crate::perm::DyadicPermutation;
use crate::set::DyadicSet;

/// A verified whirly witness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhirlyWitness {
    pub exponent: i64,
    #[serde(with = "crate::exact::frac_string")]
    pub grid_defect: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub intersection: Rat,
}

/// A verified rigidity witness (`T^n` close to the identity in `U_m`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityWitness {
    pub exponent: u64,
    #[serde(with = "crate::exact::frac_string")]
    pub grid_defect: Rat,
}

fn qualify(
    power: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    m: u32,
    threshold: &Rat,
) -> Result<Option<(Rat, Rat)>> {
    let (_, defect) = power.worst_grid_defect(m)?;
    if &defect >= threshold {
        return Ok(None);
    }
    let inter = power.push_forward(a)?.intersect(b)?.measure();
    if inter.is_zero() {
        return Ok(None);
    }
    Ok(Some((defect, inter)))
}

/// Smallest-|n| witness with `|n| <= n_max`; positive sign wins ties.
/// `allow_zero` admits `n = 0` (the identity lies in every `U_m`).
pub fn whirly_witness(
    t: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    m: u32,
    n_max: u64,
    allow_zero: bool,
) -> Result<Option<WhirlyWitness>> {
    if a.measure().is_zero() || b.measure().is_zero() {
        return Err(Error::Degenerate(
            "whirly witness needs positive sets".into(),
        ));
    }
    let threshold = pow2_inv(2 * m);
    let id = DyadicPermutation::identity(t.resolution())?;
    if allow_zero {
        if let Some((defect, intersection)) = qualify(&id, a, b, m, &threshold)? {
            return Ok(Some(WhirlyWitness {
                exponent: 0,
                grid_defect: defect,
                intersection,
            }));
        }
    }
    let inv = t.inverse();
    let mut pos = id.clone();
    let mut neg = id;
    for k in 1..=n_max {
        pos = t.compose(&pos)?;
        neg = inv.compose(&neg)?;
        if let Some((defect, intersection)) = qualify(&pos, a, b, m, &threshold)? {
            return Ok(Some(WhirlyWitness {
                exponent: k as i64,
                grid_defect: defect,
                intersection,
            }));
        }
        if let Some((defect, intersection)) = qualify(&neg, a, b, m, &threshold)? {
            return Ok(Some(WhirlyWitness {
                exponent: -(k as i64),
                grid_defect: defect,
                intersection,
            }));
        }
    }
    Ok(None)
}

/// Chunked variant: `threads` disjoint exponent ranges scanned
/// concurrently, merged by range order so the result equals the
/// sequential scan for every thread count.
pub fn whirly_witness_chunked(
    t: &DyadicPermutation,
    a: &DyadicSet,
    b: &DyadicSet,
    m: u32,
    n_max: u64,
    allow_zero: bool,
    threads: usize,
) -> Result<Option<WhirlyWitness>> {
    if threads <= 1 || n_max < 64 {
        return whirly_witness(t, a, b, m, n_max, allow_zero);
    }
    if a.measure().is_zero() || b.measure().is_zero() {
        return Err(Error::Degenerate(
            "whirly witness needs positive sets".into(),
        ));
    }
    let threshold = pow2_inv(2 * m);
    if allow_zero {
        let id = DyadicPermutation::identity(t.resolution())?;
        if let Some((defect, intersection)) = qualify(&id, a, b, m, &threshold)? {
            return Ok(Some(WhirlyWitness {
                exponent: 0,
                grid_defect: defect,
                intersection,
            }));
        }
    }
    let chunk = n_max.div_ceil(threads as u64);
    let mut results: Vec<Result<Option<WhirlyWitness>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for i in 0..threads as u64 {
            let lo = 1 + i * chunk;
            let hi = (lo + chunk - 1).min(n_max);
            if lo > n_max {
                break;
            }
            let threshold = threshold.clone();
            handles.push(scope.spawn(move || -> Result<Option<WhirlyWitness>> {
                let mut pos = t.power((lo - 1) as i64);
                let mut neg = t.power(-((lo - 1) as i64));
                let inv = t.inverse();
                for k in lo..=hi {
                    pos = t.compose(&pos)?;
                    neg = inv.compose(&neg)?;
                    if let Some((defect, intersection)) = qualify(&pos, a, b, m, &threshold)? {
                        return Ok(Some(WhirlyWitness {
                            exponent: k as i64,
                            grid_defect: defect,
                            intersection,
                        }));
                    }
                    if let Some((defect, intersection)) = qualify(&neg, a, b, m, &threshold)? {
                        return Ok(Some(WhirlyWitness {
                            exponent: -(k as i64),
                            grid_defect: defect,
                            intersection,
                        }));
                    }
                }
                Ok(None)
            }));
        }
        for h in handles {
            results.push(h.join().expect("scan thread panicked"));
        }
    });
    for r in results {
        if let Some(w) = r? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// Smallest `n >= 1` with `T^n` in `U_m`; for finite-order elements this
/// is the order or a return time dividing it.
pub fn rigidity_witness(
    t: &DyadicPermutation,
    m: u32,
    n_max: u64,
) -> Result<Option<RigidityWitness>> {
    if n_max == 0 {
        return Err(Error::Degenerate("rigidity bound must be >= 1".into()));
    }
    let threshold = pow2_inv(2 * m);
    let mut pos = DyadicPermutation::identity(t.resolution())?;
    for k in 1..=n_max {
        pos = t.compose(&pos)?;
        let (_, defect) = pos.worst_grid_defect(m)?;
        if defect < threshold {
            return Ok(Some(RigidityWitness {
                exponent: k,
                grid_defect: defect,
            }));
        }
    }
    Ok(None)
}
