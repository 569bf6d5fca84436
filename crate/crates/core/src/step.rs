//! Step functions: constant on dyadic cells, exact rational values.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{dyadic, Rat};
use crate::set::DyadicSet;

#[derive(Clone, PartialEq, Eq)]
pub struct StepFunction {
    resolution: u32,
    values: Vec<Rat>,
}

impl StepFunction {
    pub fn new(resolution: u32, values: Vec<Rat>) -> Result<Self> {
        crate::check_resolution(resolution)?;
        if values.len() != 1usize << resolution {
            return Err(Error::Degenerate(format!(
                "expected {} values at resolution {resolution}, got {}",
                1usize << resolution,
                values.len()
            )));
        }
        Ok(StepFunction { resolution, values })
    }

    pub fn constant(resolution: u32, c: Rat) -> Result<Self> {
        crate::check_resolution(resolution)?;
        Ok(StepFunction {
            resolution,
            values: vec![c; 1 << resolution],
        })
    }

    pub fn indicator(set: &DyadicSet) -> Self {
        let n = set.resolution();
        let values = (0..1usize << n)
            .map(|i| {
                if set.contains_cell(i) {
                    Rat::from_integer(1.into())
                } else {
                    Rat::zero()
                }
            })
            .collect();
        StepFunction {
            resolution: n,
            values,
        }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> &Rat {
        &self.values[cell]
    }

    /// Exact integral: the mean of the cell values.
    pub fn integral(&self) -> Rat {
        let sum: Rat = self.values.iter().sum();
        sum * dyadic(1, self.resolution)
    }

    /// Exact `||f||_inf`.
    pub fn linf_norm(&self) -> Rat {
        self.values
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rat::zero)
    }

    /// Exact `||f||_2^2` (mean of squares; the square root is usually
    /// irrational, so the squared norm is the exact quantity).
    pub fn l2_norm_sq(&self) -> Rat {
        let sum: Rat = self.values.iter().map(|v| v * v).sum();
        sum * dyadic(1, self.resolution)
    }

    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        let n = self.resolution.max(other.resolution);
        Ok((self.refine(n)?, other.refine(n)?))
    }

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
        let mut values = Vec::with_capacity(1 << finer);
        for v in &self.values {
            for _ in 0..1usize << k {
                values.push(v.clone());
            }
        }
        Ok(StepFunction {
            resolution: finer,
            values,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        Ok(StepFunction {
            resolution: a.resolution,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.aligned(other)?;
        Ok(StepFunction {
            resolution: a.resolution,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
        })
    }

    pub fn scale(&self, c: &Rat) -> Self {
        StepFunction {
            resolution: self.resolution,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn linf_dist(&self, other: &Self) -> Result<Rat> {
        Ok(self.sub(other)?.linf_norm())
    }

    pub fn l2_dist_sq(&self, other: &Self) -> Result<Rat> {
        Ok(self.sub(other)?.l2_norm_sq())
    }

    /// Truncate to `[-bound, bound]` cellwise.
    pub fn clamp(&self, bound: &Rat) -> Self {
        let neg = -bound.clone();
        StepFunction {
            resolution: self.resolution,
            values: self
                .values
                .iter()
                .map(|v| {
                    if v > bound {
                        bound.clone()
                    } else if v < &neg {
                        neg.clone()
                    } else {
                        v.clone()
                    }
                })
                .collect(),
        }
    }

    /// Conditional expectation onto the coarser partition at resolution
    /// `coarse`: on each coarse cell the result is the average of `f`
    /// over its children. Preserves the integral and contracts both
    /// norms.
    pub fn cond_expect(&self, coarse: u32) -> Result<Self> {
        if coarse > self.resolution {
            return Err(Error::Degenerate(format!(
                "conditioning resolution {coarse} above {}",
                self.resolution
            )));
        }
        let k = self.resolution - coarse;
        let block = 1usize << k;
        let inv = dyadic(1, k);
        let mut values = Vec::with_capacity(1 << self.resolution);
        for chunk in self.values.chunks(block) {
            let mean: Rat = chunk.iter().sum::<Rat>() * inv.clone();
            for _ in 0..block {
                values.push(mean.clone());
            }
        }
        Ok(StepFunction {
            resolution: self.resolution,
            values,
        })
    }
}

impl std::fmt::Debug for StepFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StepFunction(n={}, ...)", self.resolution)
    }
}

#[derive(Serialize, Deserialize)]
struct StepWire {
    resolution: u32,
    values: Vec<String>,
}

impl Serialize for StepFunction {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        StepWire {
            resolution: self.resolution,
            values: self
                .values
                .iter()
                .map(crate::exact::to_frac_string)
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let w = StepWire::deserialize(de)?;
        let values = w
            .values
            .iter()
            .map(|s| crate::exact::parse_frac(s))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        StepFunction::new(w.resolution, values).map_err(serde::de::Error::custom)
    }
}
