//! Measure-preserving automorphisms at finite resolution: bijections of
//! the `2^n` dyadic cells acting by piecewise translation.
//!
//! The identity-neighborhood systems live here too. `N(A, eps)` is the
//! set of `T` with `mu(A symdiff TA) < eps`; the dyadic-grid family
//! `U_m` asks `mu(T J Δ J) < 2^-2m` for every scale-`m` grid cell `J`,
//! with the worst offending cell reported exactly.

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{dyadic, Rat};
use crate::set::DyadicSet;
use crate::step::StepFunction;

#[derive(Clone, PartialEq, Eq)]
pub struct DyadicPermutation {
    resolution: u32,
    map: Vec<u32>,
}

impl DyadicPermutation {
    /// Validates that `map` is a bijection of `[0, 2^resolution)`.
    pub fn new(resolution: u32, map: Vec<u32>) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let n = 1usize << resolution;
        if map.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "map has {} entries, expected {n}",
                map.len()
            )));
        }
        let mut seen = vec![false; n];
        for (i, &img) in map.iter().enumerate() {
            let img = img as usize;
            if img >= n {
                return Err(Error::InvalidPermutation(format!(
                    "image {img} of cell {i} out of range"
                )));
            }
            if seen[img] {
                return Err(Error::InvalidPermutation(format!("image {img} repeated")));
            }
            seen[img] = true;
        }
        Ok(DyadicPermutation { resolution, map })
    }

    pub fn identity(resolution: u32) -> Result<Self> {
        crate::check_resolution(resolution)?;
        Ok(DyadicPermutation {
            resolution,
            map: (0..1u32 << resolution).collect(),
        })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn apply(&self, cell: usize) -> usize {
        self.map[cell] as usize
    }

    pub fn map(&self) -> &[u32] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i as u32 == v)
    }

    /// Block refinement: each cell splits in `2^(finer-n)` children that
    /// translate together with their parent.
    pub fn refine(&self, finer: u32) -> Result<Self> {
        if finer < self.resolution {
            return Err(Error::Degenerate(format!(
                "refine target {finer} below resolution {}",
                self.resolution
            )));
        }
        crate::check_resolution(finer)?;
        if finer == self.resolution {
            return Ok(self.clone());
        }
        let k = finer - self.resolution;
        let mut map = Vec::with_capacity(self.map.len() << k);
        for c in 0..self.map.len() {
            let base = self.map[c] << k;
            for child in 0..1u32 << k {
                map.push(base | child);
            }
        }
        Ok(DyadicPermutation {
            resolution: finer,
            map,
        })
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        let n = self.resolution.max(other.resolution);
        Ok((self.refine(n)?, other.refine(n)?))
    }

    /// `self . other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let (s, t) = self.aligned(other)?;
        let map = t.map.iter().map(|&c| s.map[c as usize]).collect();
        Ok(DyadicPermutation {
            resolution: s.resolution,
            map,
        })
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![0u32; self.map.len()];
        for (i, &img) in self.map.iter().enumerate() {
            map[img as usize] = i as u32;
        }
        DyadicPermutation {
            resolution: self.resolution,
            map,
        }
    }

    /// Cycle decomposition; each cycle is listed from its smallest cell,
    /// cycles ordered by that leader.
    pub fn cycles(&self) -> Vec<Vec<u32>> {
        let n = self.map.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut c = start;
            while !seen[c] {
                seen[c] = true;
                cyc.push(c as u32);
                c = self.map[c] as usize;
            }
            out.push(cyc);
        }
        out
    }

    /// `T^k` through the cycle decomposition: cost `O(2^n)` regardless
    /// of `|k|`.
    pub fn power(&self, k: i64) -> Self {
        if k == 0 {
            return DyadicPermutation {
                resolution: self.resolution,
                map: (0..self.map.len() as u32).collect(),
            };
        }
        let mut map = vec![0u32; self.map.len()];
        for cyc in self.cycles() {
            let len = cyc.len() as i64;
            let shift = k.rem_euclid(len) as usize;
            for (pos, &cell) in cyc.iter().enumerate() {
                map[cell as usize] = cyc[(pos + shift) % cyc.len()];
            }
        }
        DyadicPermutation {
            resolution: self.resolution,
            map,
        }
    }

    /// Image of a set; exact, measure-preserving.
    pub fn push_forward(&self, set: &DyadicSet) -> Result<DyadicSet> {
        let n = self.resolution.max(set.resolution());
        let t = self.refine(n)?;
        let s = set.refine(n)?;
        DyadicSet::from_cells(n, s.iter_cells().map(|c| t.map[c] as usize))
    }

    /// `mu{x : self(x) != other(x)}` — the uniform metric on the group.
    pub fn uniform_dist(&self, other: &Self) -> Result<Rat> {
        let (s, t) = self.aligned(other)?;
        let differ = s.map.iter().zip(&t.map).filter(|(a, b)| a != b).count();
        Ok(dyadic(differ as i64, s.resolution))
    }

    /// Koopman operator: `(U_T f)(x) = f(T^-1 x)`.
    pub fn koopman(&self, f: &StepFunction) -> Result<StepFunction> {
        let n = self.resolution.max(f.resolution());
        let t = self.refine(n)?;
        let f = f.refine(n)?;
        let mut values = vec![Rat::zero(); 1 << n];
        for (i, &img) in t.map.iter().enumerate() {
            values[img as usize] = f.values()[i].clone();
        }
        StepFunction::new(n, values)
    }

    /// Per-cell escape counts at grid scale `m`: entry `j` counts cells
    /// of `J_j` whose image leaves `J_j`. The exact defect of `J_j` is
    /// twice the count over `2^n`.
    pub fn grid_escape_counts(&self, m: u32) -> Result<Vec<u64>> {
        if m > self.resolution {
            return Err(Error::Precision {
                m,
                resolution: self.resolution,
            });
        }
        let shift = self.resolution - m;
        let mut counts = vec![0u64; 1 << m];
        for (i, &img) in self.map.iter().enumerate() {
            let block = i >> shift;
            if (img >> shift) as usize != block {
                counts[block] += 1;
            }
        }
        Ok(counts)
    }

    /// Worst grid cell at scale `m`: `(j, mu(T J_j symdiff J_j))`,
    /// smallest `j` on ties.
    pub fn worst_grid_defect(&self, m: u32) -> Result<(u32, Rat)> {
        let counts = self.grid_escape_counts(m)?;
        let (j, &c) = counts
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
            .expect("grid is nonempty");
        Ok((j as u32, dyadic(2 * c as i64, self.resolution)))
    }

    pub fn in_neighborhood(&self, spec: &NeighborhoodSpec) -> Result<Membership> {
        match spec {
            NeighborhoodSpec::SymmDiffBall { set, eps } => {
                if eps <= &Rat::zero() {
                    return Err(Error::Degenerate("eps must be positive".into()));
                }
                let image = self.push_forward(set)?;
                let defect = set.symdiff(&image)?.measure();
                Ok(Membership {
                    member: defect < *eps,
                    worst_cell: None,
                    defect,
                })
            }
            NeighborhoodSpec::DyadicGrid { m } => {
                let (j, defect) = self.worst_grid_defect(*m)?;
                Ok(Membership {
                    member: defect < crate::exact::pow2_inv(2 * m),
                    worst_cell: Some(j),
                    defect,
                })
            }
        }
    }

    /// Worst-pair correlation score over a power horizon; lower means
    /// more mixing-like. For each pair the best (smallest) normalized
    /// correlation defect over `1 <= k <= horizon` is taken, then the
    /// worst pair decides.
    pub fn mixing_score(&self, horizon: u64, pairs: &[(DyadicSet, DyadicSet)]) -> Result<Rat> {
        if pairs.is_empty() {
            return Err(Error::EmptyPairs);
        }
        if horizon == 0 {
            return Err(Error::Degenerate("horizon must be >= 1".into()));
        }
        let mut worst: Option<Rat> = None;
        for (a, b) in pairs {
            let prod = a.measure() * b.measure();
            if prod.is_zero() {
                return Err(Error::Degenerate("pair with null factor".into()));
            }
            let mut image = a.refine(self.resolution.max(a.resolution()))?;
            let mut best: Option<Rat> = None;
            for _ in 0..horizon {
                image = self.push_forward(&image)?;
                let corr = image.intersect(b)?.measure() - prod.clone();
                let corr = crate::exact::abs(&corr) / prod.clone();
                if best.as_ref().is_none_or(|b| corr < *b) {
                    best = Some(corr);
                }
            }
            let best = best.expect("horizon >= 1");
            if worst.as_ref().is_none_or(|w| best > *w) {
                worst = Some(best);
            }
        }
        Ok(worst.expect("pairs nonempty"))
    }

    // ---- named generators -------------------------------------------------

    /// Cell translation by `k` (mod `2^n`); `dyadic_shift(1, n)` is the
    /// adding machine on cell indices.
    pub fn dyadic_shift(k: i64, resolution: u32) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let n = 1i64 << resolution;
        let k = k.rem_euclid(n);
        Ok(DyadicPermutation {
            resolution,
            map: (0..n).map(|c| ((c + k) % n) as u32).collect(),
        })
    }

    /// Rotation by `p/q` snapped to the grid: a cell shift by
    /// `round(2^n p / q)` (ties round up). Irrational rotations are
    /// represented through their continued-fraction convergents.
    pub fn rotation_convergent(p: i64, q: i64, resolution: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::Degenerate("rotation with q = 0".into()));
        }
        crate::check_resolution(resolution)?;
        let (p, q) = if q < 0 {
            (-(p as i128), -(q as i128))
        } else {
            (p as i128, q as i128)
        };
        // round-half-up of p 2^n / q
        let r = ((p << resolution) * 2 + q).div_euclid(2 * q);
        Self::dyadic_shift(r as i64, resolution)
    }

    /// Deterministic mixing-like permutation: the full-period affine map
    /// `j -> a j + 1 (mod 2^n)` with a golden-ratio multiplier snapped
    /// to `5 (mod 8)`. A single `2^n`-cycle for every `n`, with fast
    /// correlation decay across hundreds of iterates — the workhorse
    /// source of weak-mixing-like behavior at the desk scale.
    pub fn baker(resolution: u32) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let size = 1u64 << resolution;
        let a = if resolution < 3 {
            1u64
        } else {
            // top `resolution` bits of 2^64 / phi, snapped down to 5 mod 8
            let mut a = (0x9E3779B97F4A7C15u64 >> (64 - resolution)).max(5);
            while a % 8 != 5 {
                a -= 1;
            }
            a
        };
        let map = (0..size)
            .map(|j| ((a.wrapping_mul(j).wrapping_add(1)) & (size - 1)) as u32)
            .collect();
        Ok(DyadicPermutation { resolution, map })
    }

    /// Uniformly random single `2^n`-cycle from a seeded ChaCha stream.
    pub fn random_cycle(resolution: u32, seed: u64) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let n = 1usize << resolution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<u32> = (0..n as u32).collect();
        // Fisher-Yates, spelled out so the byte stream alone fixes the result
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut map = vec![0u32; n];
        for i in 0..n {
            map[order[i] as usize] = order[(i + 1) % n];
        }
        Ok(DyadicPermutation { resolution, map })
    }

    /// Parse a generator spec: `id:<n>`, `shift:<k>:<n>`, `rot:<p>/<q>:<n>`,
    /// `baker:<n>`, `rand:<n>:seed=<s>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let parse_u32 = |s: &str| -> Result<u32> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad integer {s:?} in {spec:?}")))
        };
        match parts.as_slice() {
            ["id", n] => Self::identity(parse_u32(n)?),
            ["shift", k, n] => {
                let k: i64 = k
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad shift {k:?}")))?;
                Self::dyadic_shift(k, parse_u32(n)?)
            }
            ["rot", pq, n] => {
                let (p, q) = pq
                    .split_once('/')
                    .ok_or_else(|| Error::Parse(format!("rotation {pq:?} must be p/q")))?;
                let p: i64 = p
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad numerator {p:?}")))?;
                let q: i64 = q
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad denominator {q:?}")))?;
                Self::rotation_convergent(p, q, parse_u32(n)?)
            }
            ["baker", n] => Self::baker(parse_u32(n)?),
            ["rand", n, seed] => {
                let seed = seed
                    .strip_prefix("seed=")
                    .unwrap_or(seed)
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed in {spec:?}")))?;
                Self::random_cycle(parse_u32(n)?, seed)
            }
            _ => Err(Error::Parse(format!("unknown generator spec {spec:?}"))),
        }
    }
}

impl std::fmt::Debug for DyadicPermutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DyadicPermutation(n={})", self.resolution)
    }
}

#[derive(Serialize, Deserialize)]
struct PermWire {
    resolution: u32,
    map: Vec<u32>,
}

impl Serialize for DyadicPermutation {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        PermWire {
            resolution: self.resolution,
            map: self.map.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DyadicPermutation {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let w = PermWire::deserialize(de)?;
        DyadicPermutation::new(w.resolution, w.map).map_err(serde::de::Error::custom)
    }
}

/// An identity neighborhood to test membership against.
#[derive(Clone, Debug)]
pub enum NeighborhoodSpec {
    /// `N(A, eps) = {T : mu(A symdiff TA) < eps}`.
    SymmDiffBall { set: DyadicSet, eps: Rat },
    /// `U_m = {T : mu(T J_j symdiff J_j) < 2^-2m for every scale-m cell}`.
    DyadicGrid { m: u32 },
}

impl NeighborhoodSpec {
    pub fn grid(m: u32) -> Self {
        NeighborhoodSpec::DyadicGrid { m }
    }
}

/// Outcome of a neighborhood test, with the exact worst witness.
#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    /// Maximizing grid cell for `U_m` tests.
    pub worst_cell: Option<u32>,
    pub defect: Rat,
}

/// A finite stand-in for the closed subgroup generated by one or more
/// automorphisms: an enumerable family of labelled elements, closed
/// under inverse.
#[derive(Clone)]
pub enum GroupTruncation {
    /// Powers `T^k`, `|k| <= bound` (listing stops early at the order of
    /// `T` when that is smaller).
    Cyclic {
        generator: DyadicPermutation,
        bound: u64,
    },
    /// An explicit labelled list.
    Explicit {
        elements: Vec<(String, DyadicPermutation)>,
    },
}

pub const DEFAULT_POWER_BOUND: u64 = 1 << 12;

impl GroupTruncation {
    pub fn cyclic(generator: DyadicPermutation, bound: u64) -> Self {
        GroupTruncation::Cyclic { generator, bound }
    }

    /// Explicit list; inverses of listed elements are appended when
    /// missing so the truncation is inverse-closed.
    pub fn explicit(elements: Vec<(String, DyadicPermutation)>) -> Result<Self> {
        let mut all = elements;
        let snapshot = all.clone();
        for (label, p) in &snapshot {
            let inv = p.inverse();
            if !all.iter().any(|(_, q)| *q == inv) {
                all.push((format!("{label}^-1"), inv));
            }
        }
        Ok(GroupTruncation::Explicit { elements: all })
    }

    pub fn resolution(&self) -> u32 {
        match self {
            GroupTruncation::Cyclic { generator, .. } => generator.resolution(),
            GroupTruncation::Explicit { elements } => elements
                .iter()
                .map(|(_, p)| p.resolution())
                .max()
                .unwrap_or(0),
        }
    }

    /// Visit every element once (for the cyclic case: `Id`, then
    /// `T^k, T^-k` pairs up to the bound or the order of `T`).
    pub fn for_each(&self, mut visit: impl FnMut(&str, &DyadicPermutation)) {
        match self {
            GroupTruncation::Explicit { elements } => {
                for (label, p) in elements {
                    visit(label, p);
                }
            }
            GroupTruncation::Cyclic { generator, bound } => {
                let id = DyadicPermutation::identity(generator.resolution())
                    .expect("generator resolution already checked");
                visit("T^0", &id);
                let mut pos = id.clone();
                let mut neg = id;
                let inv = generator.inverse();
                for k in 1..=*bound {
                    pos = generator.compose(&pos).expect("equal resolutions");
                    if pos.is_identity() {
                        // full period reached; everything beyond repeats
                        return;
                    }
                    neg = inv.compose(&neg).expect("equal resolutions");
                    visit(&format!("T^{k}"), &pos);
                    visit(&format!("T^-{k}"), &neg);
                }
            }
        }
    }

    /// The sublist of elements lying in `U_m`, with exact defects.
    /// Labels keep their enumeration order.
    pub fn grid_members(&self, m: u32) -> Result<Vec<(String, DyadicPermutation, Rat)>> {
        if m > self.resolution() {
            return Err(Error::Precision {
                m,
                resolution: self.resolution(),
            });
        }
        let threshold = crate::exact::pow2_inv(2 * m);
        let mut out = Vec::new();
        let mut err = None;
        self.for_each(|label, p| {
            if err.is_some() {
                return;
            }
            match p.worst_grid_defect(m) {
                Ok((_, defect)) => {
                    if defect < threshold {
                        out.push((label.to_string(), p.clone(), defect));
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    fn assert_identity(p: &DyadicPermutation) {
        assert!(p.is_identity(), "expected identity");
    }

    #[test]
    fn group_inverse_and_power_laws() {
        let t = DyadicPermutation::random_cycle(4, 7).unwrap();
        assert_identity(&t.compose(&t.inverse()).unwrap());
        assert_identity(&t.power(0));
        assert_eq!(t.power(-3), t.power(3).inverse());

        // power via cycles against a composition oracle
        let mut acc = DyadicPermutation::identity(4).unwrap();
        for k in 1..=20i64 {
            acc = t.compose(&acc).unwrap();
            assert_eq!(t.power(k), acc, "power mismatch at k={k}");
        }
        // power(T, a+b) = power(T,a) . power(T,b)
        for (a, b) in [(3i64, 5i64), (-2, 9), (-7, -4), (16, 16)] {
            assert_eq!(
                t.power(a + b),
                t.power(a).compose(&t.power(b)).unwrap(),
                "additivity at ({a},{b})"
            );
        }
    }

    #[test]
    fn full_cycle_power_wraps() {
        let t = DyadicPermutation::dyadic_shift(1, 4).unwrap();
        assert_identity(&t.power(16));
        assert_eq!(t.cycles().len(), 1);
        assert_eq!(t.cycles()[0].len(), 16);
    }

    #[test]
    fn push_forward_basics() {
        let id = DyadicPermutation::identity(3).unwrap();
        let a = DyadicSet::from_cells(3, [1, 5]).unwrap();
        assert_eq!(id.push_forward(&a).unwrap(), a);

        let s = DyadicPermutation::dyadic_shift(1, 2).unwrap();
        let c3 = DyadicSet::from_cells(2, [3]).unwrap();
        assert_eq!(
            s.push_forward(&c3).unwrap(),
            DyadicSet::from_cells(2, [0]).unwrap()
        );
    }

    #[test]
    fn push_forward_preserves_measure_exhaustive_n3() {
        let t = DyadicPermutation::random_cycle(3, 99).unwrap();
        for mask in 0..256usize {
            let a = DyadicSet::from_cells(3, (0..8).filter(|i| mask >> i & 1 == 1)).unwrap();
            let ta = t.push_forward(&a).unwrap();
            assert_eq!(ta.measure(), a.measure());
        }
    }

    #[test]
    fn push_forward_is_boolean_homomorphism() {
        let t = DyadicPermutation::random_cycle(4, 3).unwrap();
        let a = DyadicSet::from_cells(4, [0, 3, 9]).unwrap();
        let b = DyadicSet::from_cells(4, [3, 4, 12, 15]).unwrap();
        assert_eq!(
            t.push_forward(&a.union(&b).unwrap()).unwrap(),
            t.push_forward(&a)
                .unwrap()
                .union(&t.push_forward(&b).unwrap())
                .unwrap()
        );
        assert_eq!(
            t.push_forward(&a.complement()).unwrap(),
            t.push_forward(&a).unwrap().complement()
        );
    }

    #[test]
    fn uniform_dist_cases() {
        let t = DyadicPermutation::random_cycle(4, 5).unwrap();
        assert_eq!(t.uniform_dist(&t).unwrap(), rat(0, 1));

        let mut map: Vec<u32> = (0..8).collect();
        map.swap(2, 6);
        let swap = DyadicPermutation::new(3, map).unwrap();
        let id = DyadicPermutation::identity(3).unwrap();
        assert_eq!(id.uniform_dist(&swap).unwrap(), rat(2, 8));

        // triangle inequality on a few triples
        let a = DyadicPermutation::random_cycle(4, 1).unwrap();
        let b = DyadicPermutation::random_cycle(4, 2).unwrap();
        let c = DyadicPermutation::random_cycle(4, 3).unwrap();
        assert!(
            a.uniform_dist(&c).unwrap()
                <= a.uniform_dist(&b).unwrap() + b.uniform_dist(&c).unwrap()
        );
    }

    #[test]
    fn grid_membership_for_shifts() {
        // shift by 2^-n cells: every J at scale m >= 1 loses one cell,
        // defect 2/2^n (at m = 0 the single grid cell is all of X)
        for n in 4..=8u32 {
            for m in 1..=3u32 {
                let t = DyadicPermutation::dyadic_shift(1, n).unwrap();
                let rep = t.in_neighborhood(&NeighborhoodSpec::grid(m)).unwrap();
                assert_eq!(rep.defect, dyadic(2, n));
                assert_eq!(rep.member, dyadic(2, n) < crate::exact::pow2_inv(2 * m));
            }
        }
        // identity is in every U_m
        let id = DyadicPermutation::identity(6).unwrap();
        for m in 0..=6 {
            assert!(
                id.in_neighborhood(&NeighborhoodSpec::grid(m))
                    .unwrap()
                    .member
            );
        }
    }

    #[test]
    fn symmdiff_ball_matches_cell_count() {
        // A = [0, 1/2), T = shift by one cell: mu(A symdiff TA) = 2 * 2^-n
        let n = 6;
        let a = DyadicSet::interval(n, &rat(0, 1), &rat(1, 2)).unwrap();
        let t = DyadicPermutation::dyadic_shift(1, n).unwrap();
        let rep = t
            .in_neighborhood(&NeighborhoodSpec::SymmDiffBall {
                set: a,
                eps: rat(1, 10),
            })
            .unwrap();
        assert_eq!(rep.defect, dyadic(2, n));
        assert!(rep.member);
    }

    #[test]
    fn precision_error_below_grid_scale() {
        let t = DyadicPermutation::identity(2).unwrap();
        assert!(matches!(
            t.in_neighborhood(&NeighborhoodSpec::grid(5)),
            Err(Error::Precision { .. })
        ));
    }

    #[test]
    fn koopman_isometry_and_multiplicativity() {
        let t = DyadicPermutation::random_cycle(4, 21).unwrap();
        let s = DyadicPermutation::random_cycle(4, 22).unwrap();
        let f = StepFunction::new(4, (0..16).map(|i| rat(i - 7, 3)).collect()).unwrap();
        let tf = t.koopman(&f).unwrap();
        assert_eq!(tf.l2_norm_sq(), f.l2_norm_sq());
        assert_eq!(tf.linf_norm(), f.linf_norm());
        let id = DyadicPermutation::identity(4).unwrap();
        assert_eq!(id.koopman(&f).unwrap(), f);
        // U_{S.T} = U_S U_T
        let st = s.compose(&t).unwrap();
        assert_eq!(
            st.koopman(&f).unwrap(),
            s.koopman(&t.koopman(&f).unwrap()).unwrap()
        );
    }

    #[test]
    fn grid_defect_subadditive_across_scales() {
        // per grid cell at scale m: defect(S.T, j) <= sum over the two
        // child cells of defect(S) + defect(T) at scale m+1
        let s = DyadicPermutation::random_cycle(5, 31).unwrap();
        let t = DyadicPermutation::random_cycle(5, 32).unwrap();
        let st = s.compose(&t).unwrap();
        for m in 0..=3u32 {
            let coarse = st.grid_escape_counts(m).unwrap();
            let fine_s = s.grid_escape_counts(m + 1).unwrap();
            let fine_t = t.grid_escape_counts(m + 1).unwrap();
            for (j, &c) in coarse.iter().enumerate() {
                let bound: u64 =
                    fine_s[2 * j] + fine_s[2 * j + 1] + fine_t[2 * j] + fine_t[2 * j + 1];
                assert!(c <= bound, "m={m} j={j}: {c} > {bound}");
            }
        }
    }

    #[test]
    fn grid_membership_symmetric_under_inverse() {
        for seed in 0..4u64 {
            let t = DyadicPermutation::random_cycle(5, seed).unwrap();
            for m in 1..=2u32 {
                let a = t.in_neighborhood(&NeighborhoodSpec::grid(m)).unwrap();
                let b = t
                    .inverse()
                    .in_neighborhood(&NeighborhoodSpec::grid(m))
                    .unwrap();
                assert_eq!(a.member, b.member);
                assert_eq!(a.defect, b.defect);
            }
        }
    }

    #[test]
    fn generators_basics() {
        assert!(DyadicPermutation::dyadic_shift(0, 3).unwrap().is_identity());
        let t = DyadicPermutation::dyadic_shift(1, 3).unwrap();
        let cycles = t.cycles();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0], (0..8).collect::<Vec<u32>>());

        assert!(matches!(
            DyadicPermutation::rotation_convergent(1, 0, 4),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rotation_snaps_to_nearest_cell() {
        // 2^6 / 3 = 21.33 -> 21
        let r = DyadicPermutation::rotation_convergent(1, 3, 6).unwrap();
        assert_eq!(r, DyadicPermutation::dyadic_shift(21, 6).unwrap());
        // defect of J under shift by 21 at scale 0: min(21, 64-21) vs
        // full window 64: 21 cells escape J=[0,1)? scale 0 J is all of X
        let counts = r.grid_escape_counts(1).unwrap();
        // each half loses exactly 21 cells
        assert_eq!(counts, vec![21, 21]);
        // round-half-up: 2^4 * 1/2 = 8 exactly, no tie here; 2^3*3/16=1.5 -> 2
        let r = DyadicPermutation::rotation_convergent(3, 16, 3).unwrap();
        assert_eq!(r, DyadicPermutation::dyadic_shift(2, 3).unwrap());
    }

    #[test]
    fn baker_is_single_full_cycle() {
        for n in [3u32, 8, 12] {
            let b = DyadicPermutation::baker(n).unwrap();
            let cycles = b.cycles();
            assert_eq!(cycles.len(), 1, "baker({n}) must be one cycle");
            assert_eq!(cycles[0].len(), 1 << n);
        }
    }

    #[test]
    fn random_cycle_is_full_cycle_and_seeded() {
        let a = DyadicPermutation::random_cycle(6, 9).unwrap();
        let b = DyadicPermutation::random_cycle(6, 9).unwrap();
        let c = DyadicPermutation::random_cycle(6, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.cycles().len(), 1);
    }

    #[test]
    fn mixing_score_identity_never_mixes() {
        let a = DyadicSet::interval(3, &rat(0, 1), &rat(1, 2)).unwrap();
        let id = DyadicPermutation::identity(3).unwrap();
        let score = id.mixing_score(4, &[(a.clone(), a)]).unwrap();
        assert!(score >= rat(1, 1));
    }

    #[test]
    fn mixing_score_baker_beats_rotation() {
        let n = 12u32;
        let pairs: Vec<(DyadicSet, DyadicSet)> = vec![
            (
                DyadicSet::interval(n, &rat(0, 1), &rat(1, 2)).unwrap(),
                DyadicSet::interval(n, &rat(1, 4), &rat(3, 4)).unwrap(),
            ),
            (
                DyadicSet::interval(n, &rat(0, 1), &rat(1, 4)).unwrap(),
                DyadicSet::interval(n, &rat(1, 2), &rat(3, 4)).unwrap(),
            ),
        ];
        let baker = DyadicPermutation::baker(n).unwrap();
        let rot = DyadicPermutation::rotation_convergent(1, 3, n).unwrap();
        let sb = baker.mixing_score(64, &pairs).unwrap();
        let sr = rot.mixing_score(64, &pairs).unwrap();
        assert!(sb < sr, "baker {sb} !< rotation {sr}");
    }

    #[test]
    fn full_cycle_random_permutation_scores_low() {
        let n = 12u32;
        let t = DyadicPermutation::random_cycle(n, 4242).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let pairs: Vec<(DyadicSet, DyadicSet)> = (0..3)
            .map(|_| {
                (
                    DyadicSet::random(n, 1 << (n - 1), &mut rng).unwrap(),
                    DyadicSet::random(n, 1 << (n - 1), &mut rng).unwrap(),
                )
            })
            .collect();
        let score = t.mixing_score(1 << 10, &pairs).unwrap();
        assert!(score < rat(1, 2), "score {score}");
    }

    #[test]
    fn spec_strings() {
        assert_eq!(
            DyadicPermutation::from_spec("shift:1:5").unwrap(),
            DyadicPermutation::dyadic_shift(1, 5).unwrap()
        );
        assert_eq!(
            DyadicPermutation::from_spec("rot:1/3:6").unwrap(),
            DyadicPermutation::rotation_convergent(1, 3, 6).unwrap()
        );
        assert_eq!(
            DyadicPermutation::from_spec("rand:5:seed=7").unwrap(),
            DyadicPermutation::random_cycle(5, 7).unwrap()
        );
        assert!(DyadicPermutation::from_spec("nope:1").is_err());
    }

    #[test]
    fn cyclic_truncation_stops_at_order() {
        let t = DyadicPermutation::dyadic_shift(1, 3).unwrap(); // order 8
        let g = GroupTruncation::cyclic(t, 100);
        let mut count = 0;
        g.for_each(|_, _| count += 1);
        assert_eq!(count, 15); // Id plus T^{+-1..7}; T^8 = Id stops the walk

        let members = g.grid_members(1).unwrap();
        // U_1 at resolution 3: defect 2k/8 < 1/4 needs k = 0
        assert_eq!(members.len(), 1);
        assert_eq!(members[0].0, "T^0");
    }

    #[test]
    fn wire_round_trip() {
        let t = DyadicPermutation::random_cycle(4, 12).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: DyadicPermutation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(
            serde_json::from_str::<DyadicPermutation>(r#"{"resolution":2,"map":[0,0,1,2]}"#)
                .is_err()
        );
    }
}
