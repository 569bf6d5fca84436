//! The dyadic measure algebra: subsets of the `2^n` half-open cells of
//! `[0,1)` with exact measure `|cells| / 2^n`.
//!
//! Binary operations refine both operands to the finer resolution first,
//! mirroring the identification of a set across partitions of the measure
//! algebra. All results are exact.

use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::exact::{dyadic, Rat};

/// A set in the dyadic measure algebra at a fixed resolution.
#[derive(Clone, PartialEq, Eq)]
pub struct DyadicSet {
    resolution: u32,
    cells: BitVec,
}

/// Boolean-algebra operations on pairs of sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOp {
    Union,
    Intersect,
    Minus,
    Symdiff,
}

impl DyadicSet {
    pub fn empty(resolution: u32) -> Result<Self> {
        crate::check_resolution(resolution)?;
        Ok(DyadicSet {
            resolution,
            cells: BitVec::zeros(1 << resolution),
        })
    }

    pub fn full(resolution: u32) -> Result<Self> {
        crate::check_resolution(resolution)?;
        Ok(DyadicSet {
            resolution,
            cells: BitVec::ones(1 << resolution),
        })
    }

    pub fn from_cells(resolution: u32, idx: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = DyadicSet::empty(resolution)?;
        let n = 1usize << resolution;
        for i in idx {
            if i >= n {
                return Err(Error::Parse(format!(
                    "cell {i} out of range at resolution {resolution}"
                )));
            }
            s.cells.set(i);
        }
        Ok(s)
    }

    /// The dyadic interval `[a, b)`; both endpoints must be multiples of
    /// `2^-resolution`.
    pub fn interval(resolution: u32, a: &Rat, b: &Rat) -> Result<Self> {
        let lo = cell_of(a, resolution)?;
        let hi = cell_of(b, resolution)?;
        if lo > hi {
            return Err(Error::Parse("interval endpoints out of order".to_string()));
        }
        DyadicSet::from_cells(resolution, lo..hi)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.cells.count()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty_set()
    }

    pub fn contains_cell(&self, i: usize) -> bool {
        self.cells.get(i)
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter_ones()
    }

    /// Exact measure `|cells| / 2^n`.
    pub fn measure(&self) -> Rat {
        dyadic(BigInt::from(self.cell_count()), self.resolution)
    }

    /// Re-express the set at a finer resolution; measure is unchanged,
    /// each cell splits into `2^(n'-n)` children.
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
        let mut out = BitVec::zeros(1 << finer);
        for c in self.cells.iter_ones() {
            for child in (c << k)..((c + 1) << k) {
                out.set(child);
            }
        }
        Ok(DyadicSet {
            resolution: finer,
            cells: out,
        })
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        let n = self.resolution.max(other.resolution);
        Ok((self.refine(n)?, other.refine(n)?))
    }

    pub fn apply(&self, other: &Self, op: SetOp) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        let cells = match op {
            SetOp::Union => a.cells.union(&b.cells),
            SetOp::Intersect => a.cells.intersect(&b.cells),
            SetOp::Minus => a.cells.minus(&b.cells),
            SetOp::Symdiff => a.cells.symdiff(&b.cells),
        };
        Ok(DyadicSet {
            resolution: a.resolution,
            cells,
        })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.apply(other, SetOp::Union)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.apply(other, SetOp::Intersect)
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.apply(other, SetOp::Minus)
    }

    pub fn symdiff(&self, other: &Self) -> Result<Self> {
        self.apply(other, SetOp::Symdiff)
    }

    pub fn complement(&self) -> Self {
        DyadicSet {
            resolution: self.resolution,
            cells: self.cells.complement(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        let (a, b) = self.aligned(other)?;
        Ok(a.cells.is_subset(&b.cells))
    }

    pub fn is_disjoint_from(&self, other: &Self) -> Result<bool> {
        let (a, b) = self.aligned(other)?;
        Ok(a.cells.is_disjoint(&b.cells))
    }

    /// Uniformly random set with exactly `cells` cells (reservoir-free:
    /// a seeded Fisher-Yates prefix).
    pub fn random(resolution: u32, cells: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let n = 1usize << resolution;
        if cells > n {
            return Err(Error::Degenerate(format!("{cells} cells > {n}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..cells {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        DyadicSet::from_cells(resolution, idx[..cells].iter().copied())
    }

    /// Parse an interval list such as `[0,1/4)u[1/2,5/8)` (`u`, `U` or
    /// `∪` join the pieces) or a raw `hex:<resolution>:<bitmap>` spec.
    pub fn parse(spec: &str, resolution: u32) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("hex:") {
            let (res, hexmap) = rest
                .split_once(':')
                .ok_or_else(|| Error::Parse("hex spec needs hex:<res>:<bitmap>".into()))?;
            let res: u32 = res
                .parse()
                .map_err(|_| Error::Parse(format!("bad resolution {res:?}")))?;
            return DyadicSet::from_hex(res, hexmap);
        }
        if spec == "full" {
            return DyadicSet::full(resolution);
        }
        if spec == "empty" {
            return DyadicSet::empty(resolution);
        }
        let mut acc = DyadicSet::empty(resolution)?;
        for piece in spec.split(['u', 'U', '∪']) {
            let piece = piece.trim();
            let inner = piece
                .strip_prefix('[')
                .and_then(|p| p.strip_suffix(')'))
                .ok_or_else(|| Error::Parse(format!("interval {piece:?} must look like [a,b)")))?;
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("interval {piece:?} missing comma")))?;
            let a = crate::exact::parse_frac(a)?;
            let b = crate::exact::parse_frac(b)?;
            acc = acc.union(&DyadicSet::interval(resolution, &a, &b)?)?;
        }
        Ok(acc)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.cells.to_bytes())
    }

    pub fn from_hex(resolution: u32, s: &str) -> Result<Self> {
        crate::check_resolution(resolution)?;
        let bytes = hex::decode(s).map_err(|e| Error::Parse(format!("bad hex bitmap: {e}")))?;
        let cells = BitVec::from_bytes(1 << resolution, &bytes)
            .ok_or_else(|| Error::Parse("bitmap length/padding mismatch".into()))?;
        Ok(DyadicSet { resolution, cells })
    }
}

fn cell_of(x: &Rat, resolution: u32) -> Result<usize> {
    let scaled = x * Rat::new(BigInt::one() << resolution, BigInt::one());
    if !scaled.is_integer() {
        return Err(Error::Parse(format!(
            "{x} is not a multiple of 2^-{resolution}"
        )));
    }
    let v: BigInt = scaled.to_integer();
    let (sign, digits) = v.to_u64_digits();
    if sign == num_bigint::Sign::Minus {
        return Err(Error::Parse(format!("negative endpoint {x}")));
    }
    let v = match digits.len() {
        0 => 0u64,
        1 => digits[0],
        _ => return Err(Error::Parse(format!("endpoint {x} out of range"))),
    };
    if v > (1u64 << resolution) {
        return Err(Error::Parse(format!("endpoint {x} beyond [0,1]")));
    }
    Ok(v as usize)
}

impl std::fmt::Debug for DyadicSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "DyadicSet(n={}, cells={}/{})",
            self.resolution,
            self.cell_count(),
            1usize << self.resolution
        )
    }
}

#[derive(Serialize, Deserialize)]
struct SetWire {
    resolution: u32,
    bitmap: String,
}

impl Serialize for DyadicSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        SetWire {
            resolution: self.resolution,
            bitmap: self.to_hex(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DyadicSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let w = SetWire::deserialize(de)?;
        DyadicSet::from_hex(w.resolution, &w.bitmap).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    #[test]
    fn identities() {
        let a = DyadicSet::from_cells(3, [0, 1]).unwrap();
        let empty = DyadicSet::empty(3).unwrap();
        assert_eq!(empty.union(&a).unwrap(), a);
        assert!(a.intersect(&a.complement()).unwrap().is_empty());
        assert_eq!(a.complement().complement(), a);
    }

    #[test]
    fn symdiff_forced() {
        let a = DyadicSet::from_cells(3, [0, 1]).unwrap();
        let b = DyadicSet::from_cells(3, [1, 2]).unwrap();
        let d = a.symdiff(&b).unwrap();
        assert_eq!(d, DyadicSet::from_cells(3, [0, 2]).unwrap());
        assert_eq!(d.measure(), rat(1, 4));
    }

    #[test]
    fn measures() {
        assert_eq!(DyadicSet::full(3).unwrap().measure(), rat(1, 1));
        assert_eq!(DyadicSet::empty(5).unwrap().measure(), rat(0, 1));
        let s = DyadicSet::from_cells(3, [0, 1, 2]).unwrap();
        assert_eq!(s.measure(), rat(3, 8));
    }

    #[test]
    fn refine_splits_cells() {
        let s = DyadicSet::from_cells(1, [0]).unwrap();
        let r = s.refine(2).unwrap();
        assert_eq!(r, DyadicSet::from_cells(2, [0, 1]).unwrap());
        assert_eq!(r.measure(), rat(1, 2));
        assert_eq!(s.refine(1).unwrap(), s);
    }

    #[test]
    fn refine_preserves_measure_exhaustive() {
        for n in 0..=4u32 {
            let total = 1usize << n;
            for mask in 0..(1usize << total) {
                let s =
                    DyadicSet::from_cells(n, (0..total).filter(|i| mask >> i & 1 == 1)).unwrap();
                assert_eq!(s.refine(n + 2).unwrap().measure(), s.measure());
            }
        }
    }

    #[test]
    fn de_morgan_and_additivity_exhaustive_n3() {
        let total = 8usize;
        let sets: Vec<DyadicSet> = (0..256usize)
            .map(|mask| {
                DyadicSet::from_cells(3, (0..total).filter(|i| mask >> i & 1 == 1)).unwrap()
            })
            .collect();
        for a in &sets {
            for b in &sets {
                let lhs = a.union(b).unwrap().complement();
                let rhs = a.complement().intersect(&b.complement()).unwrap();
                assert_eq!(lhs, rhs);
                let lhs = a.intersect(b).unwrap().complement();
                let rhs = a.complement().union(&b.complement()).unwrap();
                assert_eq!(lhs, rhs);
                let add = a.union(b).unwrap().measure() + a.intersect(b).unwrap().measure();
                assert_eq!(add, a.measure() + b.measure());
            }
        }
    }

    #[test]
    fn interval_parsing() {
        let s = DyadicSet::parse("[0,1/4)u[1/2,5/8)", 3).unwrap();
        assert_eq!(s, DyadicSet::from_cells(3, [0, 1, 4]).unwrap());
        assert!(DyadicSet::parse("[0,1/3)", 3).is_err());
        let hexed = format!("hex:3:{}", s.to_hex());
        assert_eq!(DyadicSet::parse(&hexed, 0).unwrap(), s);
    }

    #[test]
    fn wire_round_trip() {
        let s = DyadicSet::from_cells(5, [0, 7, 31]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: DyadicSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn resolution_cap_enforced() {
        assert!(matches!(
            DyadicSet::empty(40),
            Err(Error::ResolutionCap { .. })
        ));
    }
}
