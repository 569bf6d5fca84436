//! IP-prefix construction, diagonal-product whirly probes, and the
//! skew-product simultaneous rigidity scan.
//!
//! An IP-prefix for `(T, U, A, B)` is a finite increasing sequence
//! `p_1 < ... < p_k` such that every nonempty subset sum `s` satisfies
//! `T^s in U` and `mu(T^s A meet B) > 0`. The inductive search keeps the
//! family `D_s = T^s A meet B` over current sums and admits `p` only
//! when every extended sum checks out; the returned prefix then carries
//! the full `2^k - 1` verification table, recomputed from scratch.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::exact::Rat;
use crate::perm::{DyadicPermutation, NeighborhoodSpec};
use crate::set::DyadicSet;

/// Cap on the number of cells of a product space.
pub const PRODUCT_CELL_CAP: u128 = 1 << 24;
pub const PRODUCT_ORDER_CAP: usize = 3;

/// A finite product of dyadic spaces, cells indexed in mixed radix with
/// the last factor fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpace {
    resolutions: Vec<u32>,
}

impl ProductSpace {
    pub fn new(resolutions: Vec<u32>) -> Result<Self> {
        if resolutions.is_empty() || resolutions.len() > PRODUCT_ORDER_CAP {
            return Err(Error::Degenerate(format!(
                "product order must be 1..={PRODUCT_ORDER_CAP}"
            )));
        }
        let mut cells: u128 = 1;
        for &r in &resolutions {
            crate::check_resolution(r)?;
            cells *= 1u128 << r;
        }
        if cells > PRODUCT_CELL_CAP {
            return Err(Error::ProductCap {
                cells,
                cap: PRODUCT_CELL_CAP,
            });
        }
        Ok(ProductSpace { resolutions })
    }

    pub fn power(resolution: u32, order: usize) -> Result<Self> {
        ProductSpace::new(vec![resolution; order])
    }

    pub fn order(&self) -> usize {
        self.resolutions.len()
    }

    pub fn cell_count(&self) -> usize {
        self.resolutions.iter().map(|&r| 1usize << r).product()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.order()];
        for i in (0..self.order().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (1usize << self.resolutions[i + 1]);
        }
        strides
    }
}

/// A subset of a product space.
#[derive(Clone, PartialEq, Eq)]
pub struct ProductSet {
    space: ProductSpace,
    bits: BitVec,
}

impl ProductSet {
    /// The box `A_1 x ... x A_d`.
    pub fn from_box(space: &ProductSpace, factors: &[DyadicSet]) -> Result<Self> {
        if factors.len() != space.order() {
            return Err(Error::Degenerate(format!(
                "{} factors for an order-{} product",
                factors.len(),
                space.order()
            )));
        }
        for (f, &r) in factors.iter().zip(&space.resolutions) {
            if f.resolution() != r {
                return Err(Error::Degenerate(
                    "factor resolution does not match the space".into(),
                ));
            }
        }
        let mut bits = BitVec::zeros(space.cell_count());
        let strides = space.strides();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((dim, base)) = stack.pop() {
            if dim == space.order() {
                bits.set(base);
                continue;
            }
            for c in factors[dim].iter_cells() {
                stack.push((dim + 1, base + c * strides[dim]));
            }
        }
        Ok(ProductSet {
            space: space.clone(),
            bits,
        })
    }

    pub fn measure(&self) -> Rat {
        let total = self.space.cell_count();
        Rat::new(self.bits.count().into(), total.into())
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty_set()
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::Degenerate("product spaces differ".into()));
        }
        Ok(ProductSet {
            space: self.space.clone(),
            bits: self.bits.intersect(&other.bits),
        })
    }

    /// Image under the diagonal action of `t` on every coordinate.
    pub fn diagonal_push_forward(&self, t: &DyadicPermutation) -> Result<Self> {
        for &r in &self.space.resolutions {
            if t.resolution() != r {
                return Err(Error::Degenerate(
                    "diagonal action needs matching resolutions".into(),
                ));
            }
        }
        let strides = self.space.strides();
        let order = self.space.order();
        let mut bits = BitVec::zeros(self.space.cell_count());
        for idx in self.bits.iter_ones() {
            let mut rest = idx;
            let mut image = 0usize;
            for &stride in strides.iter().take(order) {
                let coord = rest / stride;
                rest %= stride;
                image += t.apply(coord) * stride;
            }
            bits.set(image);
        }
        Ok(ProductSet {
            space: self.space.clone(),
            bits,
        })
    }
}

impl std::fmt::Debug for ProductSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ProductSet(order={}, cells={})",
            self.space.order(),
            self.bits.count()
        )
    }
}

// ---------------- IP prefixes ------------------------------------------------

/// One row of the exhaustive verification table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SumCheck {
    pub sum: u64,
    pub in_neighborhood: bool,
    #[serde(with = "crate::exact::frac_string")]
    pub defect: Rat,
    #[serde(with = "crate::exact::frac_string")]
    pub intersection: Rat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IPPrefix {
    pub generators: Vec<u64>,
    /// True when the requested length was reached.
    pub complete: bool,
    /// Diagnostics when the search stopped early.
    pub failure: Option<String>,
    /// All `2^k - 1` subset sums, re-verified from scratch.
    pub table: Vec<SumCheck>,
}

/// Inductive IP-prefix search: extend the generator list while every
/// new subset sum keeps `T^s` in the neighborhood and `T^s A` meeting
/// `B`; the final table re-verifies every sum before returning.
pub fn ip_prefix(
    t: &DyadicPermutation,
    spec: &NeighborhoodSpec,
    a: &DyadicSet,
    b: &DyadicSet,
    k: u32,
    search_bound: u64,
) -> Result<IPPrefix> {
    if k == 0 {
        return Err(Error::Degenerate("prefix length must be >= 1".into()));
    }
    if a.measure().is_zero() || b.measure().is_zero() {
        return Err(Error::Degenerate("IP prefix needs positive sets".into()));
    }
    let mut generators: Vec<u64> = Vec::new();
    let mut sums: Vec<u64> = Vec::new(); // current subset sums, any order
    let mut failure = None;
    'grow: while (generators.len() as u32) < k {
        let start = generators.last().map_or(1, |&g| g + 1);
        for p in start..=search_bound {
            if admits(t, spec, a, b, &sums, p)? {
                let mut extended: Vec<u64> = sums.iter().map(|&s| s + p).collect();
                extended.push(p);
                sums.extend(extended);
                generators.push(p);
                continue 'grow;
            }
        }
        failure = Some(format!(
            "no admissible generator in ({}, {search_bound}] at step {}",
            start - 1,
            generators.len() + 1
        ));
        break;
    }

    // exhaustive re-verification of every nonempty subset sum
    let mut table = Vec::new();
    let mut all_ok = true;
    for mask in 1u64..(1u64 << generators.len()) {
        let sum: u64 = generators
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &p)| p)
            .sum();
        let power = t.power(sum as i64);
        let membership = power.in_neighborhood(spec)?;
        let intersection = power.push_forward(a)?.intersect(b)?.measure();
        all_ok &= membership.member && !intersection.is_zero();
        table.push(SumCheck {
            sum,
            in_neighborhood: membership.member,
            defect: membership.defect,
            intersection,
        });
    }
    if !all_ok {
        return Err(Error::CertificateFailure(
            "IP verification table contradicts the inductive search".into(),
        ));
    }
    table.sort_by_key(|row| row.sum);
    Ok(IPPrefix {
        complete: generators.len() as u32 == k,
        generators,
        failure,
        table,
    })
}

fn admits(
    t: &DyadicPermutation,
    spec: &NeighborhoodSpec,
    a: &DyadicSet,
    b: &DyadicSet,
    sums: &[u64],
    p: u64,
) -> Result<bool> {
    let power = t.power(p as i64);
    if !power.in_neighborhood(spec)?.member {
        return Ok(false);
    }
    if power.push_forward(a)?.intersect(b)?.measure().is_zero() {
        return Ok(false);
    }
    for &s in sums {
        let combined = t.power((s + p) as i64);
        if !combined.in_neighborhood(spec)?.member {
            return Ok(false);
        }
        // D_s = T^s A meet B; the new sum needs T^p D_s to meet B
        let d_s = t.power(s as i64).push_forward(a)?.intersect(b)?;
        if power.push_forward(&d_s)?.intersect(b)?.measure().is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------- diagonal-product whirly probe ------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub pair: usize,
    pub witness: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection: Option<String>,
}

/// Run the whirly witness scan for the diagonal action of `T` on the
/// `d`-fold product against box pairs. The neighborhood lives on the
/// base space (the acting group is still generated by `T`); only the
/// intersection condition moves to the product.
pub fn whirly_all_orders_probe(
    t: &DyadicPermutation,
    order: usize,
    pairs: &[(Vec<DyadicSet>, Vec<DyadicSet>)],
    m: u32,
    n_max: u64,
    allow_zero: bool,
) -> Result<Vec<ProbeRow>> {
    let space = ProductSpace::power(t.resolution(), order)?;
    let threshold = crate::exact::pow2_inv(2 * m);
    let mut rows = Vec::new();
    for (pair_idx, (fa, fb)) in pairs.iter().enumerate() {
        let a = ProductSet::from_box(&space, fa)?;
        let b = ProductSet::from_box(&space, fb)?;
        if a.is_empty() || b.is_empty() {
            return Err(Error::Degenerate("probe needs positive boxes".into()));
        }
        let mut found = None;
        let check = |power: &DyadicPermutation, n: i64| -> Result<Option<(i64, Rat)>> {
            let (_, defect) = power.worst_grid_defect(m)?;
            if defect >= threshold {
                return Ok(None);
            }
            let inter = a.diagonal_push_forward(power)?.intersect(&b)?.measure();
            if inter.is_zero() {
                Ok(None)
            } else {
                Ok(Some((n, inter)))
            }
        };
        let id = DyadicPermutation::identity(t.resolution())?;
        if allow_zero {
            found = check(&id, 0)?;
        }
        if found.is_none() {
            let inv = t.inverse();
            let mut pos = id.clone();
            let mut neg = id;
            for n in 1..=n_max {
                pos = t.compose(&pos)?;
                neg = inv.compose(&neg)?;
                if let Some(hit) = check(&pos, n as i64)? {
                    found = Some(hit);
                    break;
                }
                if let Some(hit) = check(&neg, -(n as i64))? {
                    found = Some(hit);
                    break;
                }
            }
        }
        rows.push(ProbeRow {
            pair: pair_idx,
            witness: found.as_ref().map(|(n, _)| *n),
            intersection: found.map(|(_, r)| crate::exact::to_frac_string(&r)),
        });
    }
    Ok(rows)
}

// ---------------- skew-product rigidity --------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkewWitness {
    pub exponent: u64,
    #[serde(with = "crate::exact::frac_string")]
    pub grid_defect: Rat,
    /// `|n alpha|` as distance to the nearest integer, exact.
    #[serde(with = "crate::exact::frac_string")]
    pub circle_distance: Rat,
}

/// Smallest `n in [1, n_max]` with `T^n in U_m` and `|n alpha| < eps`
/// (distance to the nearest integer, exact rational arithmetic): a
/// simultaneous return time of the skew product of `T` with the circle
/// rotation by `alpha = p/q`.
pub fn skew_rigidity(
    t: &DyadicPermutation,
    alpha: (i64, i64),
    m: u32,
    eps: &Rat,
    n_max: u64,
) -> Result<Option<SkewWitness>> {
    let (p, q) = alpha;
    if q == 0 {
        return Err(Error::Degenerate("alpha with q = 0".into()));
    }
    if eps <= &Rat::zero() {
        return Err(Error::Degenerate("eps must be positive".into()));
    }
    let threshold = crate::exact::pow2_inv(2 * m);
    let q_abs = q.unsigned_abs();
    let p_mod = p.rem_euclid(q_abs as i64) as u64;
    let mut residue = 0u64; // n p mod q
    let mut power = DyadicPermutation::identity(t.resolution())?;
    for n in 1..=n_max {
        power = t.compose(&power)?;
        residue = (residue + p_mod) % q_abs;
        let circle = crate::exact::rat(residue.min(q_abs - residue) as i64, q_abs as i64);
        if &circle >= eps {
            continue;
        }
        let (_, defect) = power.worst_grid_defect(m)?;
        if defect < threshold {
            return Ok(Some(SkewWitness {
                exponent: n,
                grid_defect: defect,
                circle_distance: circle,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::whirly::whirly_witness;

    #[test]
    fn product_measure_is_multiplicative() {
        let space = ProductSpace::power(4, 2).unwrap();
        let a1 = DyadicSet::from_cells(4, 0..6).unwrap();
        let a2 = DyadicSet::from_cells(4, [1, 9, 10]).unwrap();
        let boxed = ProductSet::from_box(&space, &[a1.clone(), a2.clone()]).unwrap();
        assert_eq!(boxed.measure(), a1.measure() * a2.measure());
    }

    #[test]
    fn product_cap_enforced() {
        assert!(matches!(
            ProductSpace::new(vec![13, 13]),
            Err(Error::ProductCap { .. })
        ));
        assert!(ProductSpace::new(vec![1, 2, 3, 4]).is_err());
    }

    #[test]
    fn diagonal_action_preserves_product_measure() {
        let t = DyadicPermutation::random_cycle(4, 9).unwrap();
        let space = ProductSpace::power(4, 2).unwrap();
        let a = DyadicSet::from_cells(4, 0..7).unwrap();
        let b = DyadicSet::from_cells(4, 3..12).unwrap();
        let boxed = ProductSet::from_box(&space, &[a, b]).unwrap();
        let moved = boxed.diagonal_push_forward(&t).unwrap();
        assert_eq!(moved.measure(), boxed.measure());
    }

    #[test]
    fn order_one_probe_agrees_with_whirly_witness() {
        let t = DyadicPermutation::random_cycle(6, 11).unwrap();
        let a = DyadicSet::from_cells(6, 0..16).unwrap();
        let b = DyadicSet::from_cells(6, 40..56).unwrap();
        let rows =
            whirly_all_orders_probe(&t, 1, &[(vec![a.clone()], vec![b.clone()])], 1, 100, false)
                .unwrap();
        let direct = whirly_witness(&t, &a, &b, 1, 100, false).unwrap();
        assert_eq!(rows[0].witness, direct.map(|w| w.exponent));
    }

    #[test]
    fn rotation_products_have_no_witness_for_separated_boxes() {
        // Kronecker behavior: a rotation convergent moves boxes rigidly,
        // and U_1-admissible powers move them by less than a quarter
        let n = 8u32;
        let t = DyadicPermutation::rotation_convergent(1, 3, n).unwrap();
        let a = DyadicSet::interval(n, &rat(0, 1), &rat(1, 4)).unwrap();
        let b = DyadicSet::interval(n, &rat(1, 2), &rat(3, 4)).unwrap();
        let rows = whirly_all_orders_probe(
            &t,
            2,
            &[(vec![a.clone(), a], vec![b.clone(), b])],
            1,
            1 << n,
            false,
        )
        .unwrap();
        assert_eq!(rows[0].witness, None);
    }

    #[test]
    fn ip_prefix_of_rigid_shift() {
        // A = B = X: any rigidity return times form a prefix
        let t = DyadicPermutation::dyadic_shift(1, 4).unwrap(); // order 16
        let x = DyadicSet::full(4).unwrap();
        let prefix = ip_prefix(&t, &NeighborhoodSpec::grid(2), &x, &x, 3, 200).unwrap();
        assert!(prefix.complete);
        assert_eq!(prefix.table.len(), 7);
        // every generator is a multiple of the period
        for g in &prefix.generators {
            assert_eq!(g % 16, 0, "generator {g}");
        }
        for row in &prefix.table {
            assert!(row.in_neighborhood);
            assert!(row.intersection > rat(0, 1));
        }
    }

    #[test]
    fn ip_prefix_single_step_is_whirly_witness_with_positivity() {
        let t = DyadicPermutation::random_cycle(6, 2).unwrap();
        let a = DyadicSet::from_cells(6, 0..32).unwrap();
        let b = DyadicSet::from_cells(6, 16..48).unwrap();
        let prefix = ip_prefix(&t, &NeighborhoodSpec::grid(1), &a, &b, 1, 500).unwrap();
        if prefix.complete {
            let w = whirly_witness(&t, &a, &b, 1, 500, false).unwrap().unwrap();
            // the prefix generator cannot beat the two-sided scan, but
            // must be a positive witness itself
            assert!(prefix.generators[0] >= w.exponent.unsigned_abs());
            assert_eq!(prefix.table[0].sum, prefix.generators[0]);
        }
    }

    #[test]
    fn ip_prefix_partial_when_search_exhausted() {
        // the identity never meets disjoint sets, so no generator exists
        let t = DyadicPermutation::identity(4).unwrap();
        let a = DyadicSet::from_cells(4, 0..4).unwrap();
        let b = DyadicSet::from_cells(4, 8..12).unwrap();
        let prefix = ip_prefix(&t, &NeighborhoodSpec::grid(1), &a, &b, 2, 50).unwrap();
        assert!(!prefix.complete);
        assert!(prefix.generators.is_empty());
        assert!(prefix.failure.is_some());
    }

    #[test]
    fn skew_exact_period_case() {
        // T = Id: the classical |n alpha| < eps search
        let id = DyadicPermutation::identity(4).unwrap();
        let w = skew_rigidity(&id, (1, 3), 1, &rat(1, 10), 100)
            .unwrap()
            .unwrap();
        assert_eq!(w.exponent, 3);
        assert_eq!(w.circle_distance, rat(0, 1));
    }

    #[test]
    fn skew_simultaneous_return_is_lcm_like() {
        // shift of period 16 against alpha = 1/5 at a strict scale:
        // U_2 at resolution 4 admits only the exact identity, so the
        // witness is lcm(16, 5) = 80
        let t = DyadicPermutation::dyadic_shift(1, 4).unwrap();
        let w = skew_rigidity(&t, (1, 5), 2, &rat(1, 10), 200)
            .unwrap()
            .unwrap();
        assert_eq!(w.exponent, 80);
        assert_eq!(w.grid_defect, rat(0, 1));
        assert_eq!(w.circle_distance, rat(0, 1));
    }

    #[test]
    fn skew_depends_only_on_alpha_for_identity_base() {
        // cross-check against a standalone residue scan
        let id = DyadicPermutation::identity(5).unwrap();
        for (p, q, eps_num, eps_den) in [(3i64, 7i64, 1i64, 8i64), (5, 12, 1, 10), (2, 9, 1, 6)] {
            let eps = rat(eps_num, eps_den);
            let got = skew_rigidity(&id, (p, q), 2, &eps, 500).unwrap();
            // oracle: first n with min(np mod q, q - np mod q)/q < eps
            let mut oracle = None;
            for n in 1..=500u64 {
                let r = (n * p.unsigned_abs()) % q.unsigned_abs();
                let dist = rat(r.min(q.unsigned_abs() - r) as i64, q);
                if dist < eps {
                    oracle = Some(n);
                    break;
                }
            }
            assert_eq!(got.map(|w| w.exponent), oracle, "alpha = {p}/{q}");
        }
    }

    #[test]
    fn skew_convergent_denominators_cluster() {
        // every returned witness passes the eps tolerance by direct
        // computation; denominators of convergents of alpha recur
        let t = DyadicPermutation::dyadic_shift(1, 6).unwrap(); // period 64
        let alpha = (5i64, 8i64);
        for m in [1u32, 2] {
            if let Some(w) = skew_rigidity(&t, alpha, m, &rat(1, 16), 1 << 10).unwrap() {
                let r = (w.exponent * 5) % 8;
                assert_eq!(rat(r.min(8 - r) as i64, 8), w.circle_distance);
                assert!(w.circle_distance < rat(1, 16));
            }
        }
    }
}
