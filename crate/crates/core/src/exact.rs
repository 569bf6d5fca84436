//! Exact rational scalars and their wire format.
//!
//! Every measure, norm and threshold in the library is a [`Rat`]. On the
//! wire rationals travel as reduced `"p/q"` strings so certificates
//! round-trip losslessly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

/// `k / 2^n` as an exact rational.
pub fn dyadic(k: impl Into<BigInt>, n: u32) -> Rat {
    Rat::new(k.into(), BigInt::one() << n)
}

/// `2^-e` as an exact rational.
pub fn pow2_inv(e: u32) -> Rat {
    dyadic(1, e)
}

pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(p.into(), q.into())
}

/// Render as a reduced `"p/q"` string (always with the slash, so the
/// format is uniform: `"0/1"`, `"3/8"`, `"-5/1"`).
pub fn to_frac_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parse `"p/q"` or a bare integer `"p"`.
pub fn parse_frac(s: &str) -> Result<Rat> {
    let s = s.trim();
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p, q),
        None => (s, "1"),
    };
    let p: BigInt = p
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad numerator in {s:?}")))?;
    let q: BigInt = q
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad denominator in {s:?}")))?;
    if q.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Rat::new(p, q))
}

/// Distance from `r` to the nearest integer, exact.
pub fn dist_to_integer(r: &Rat) -> Rat {
    let fl = r.floor();
    let frac = r - &fl;
    let other = Rat::one() - &frac;
    if frac <= other {
        frac
    } else {
        other
    }
}

/// Serde adapter: a [`Rat`] as a `"p/q"` string field.
pub mod frac_string {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&to_frac_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Rat, D::Error> {
        let s = String::deserialize(de)?;
        parse_frac(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rat>` fields.
pub mod frac_string_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rat], ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(to_frac_string))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<Rat>, D::Error> {
        let strings = Vec::<String>::deserialize(de)?;
        strings
            .iter()
            .map(|s| parse_frac(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Absolute value helper (`num_traits::Signed` is not in every caller's scope).
pub fn abs(r: &Rat) -> Rat {
    r.abs()
}
