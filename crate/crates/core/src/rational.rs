//! Exact rational arithmetic helpers.
//!
//! All probabilities in this crate are carried as [`Rational`]
//! (arbitrary-precision, always reduced, positive denominator). Floats only
//! appear in training code and in logged constants.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

pub type Rational = num_rational::BigRational;

/// `n / d` as a reduced rational. Panics if `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn from_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

/// Natural logarithm of a positive rational, evaluated in floating point.
///
/// Computed as `ln(num) - ln(den)` on the big integers so values whose
/// numerator or denominator overflow f64 still come out right.
pub fn ln(r: &Rational) -> f64 {
    assert!(r.is_positive(), "ln of non-positive rational");
    ln_bigint(r.numer()) - ln_bigint(r.denom())
}

fn ln_bigint(n: &BigInt) -> f64 {
    if let Some(v) = n.to_f64() {
        if v.is_finite() {
            return v.ln();
        }
    }
    // Scale down by a power of two until the mantissa fits.
    let bits = n.bits();
    let shift = bits.saturating_sub(64);
    let scaled = (n >> shift).to_f64().expect("scaled bigint fits f64");
    scaled.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Parses "3/4", "3", or a decimal like "0.25" into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty rational".into());
    }
    if let Some((n, d)) = s.split_once('/') {
        let numer: BigInt = n.trim().parse().map_err(|_| format!("bad numerator {n:?}"))?;
        let denom: BigInt = d.trim().parse().map_err(|_| format!("bad denominator {d:?}"))?;
        if denom.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(Rational::new(numer, denom));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int_part = if int.is_empty() { "0" } else { int };
        let numer: BigInt = format!("{int_part}{frac}")
            .parse()
            .map_err(|_| format!("bad decimal {s:?}"))?;
        let denom = BigInt::from(10u32).pow(frac.len() as u32);
        return Ok(Rational::new(numer, denom));
    }
    let numer: BigInt = s.parse().map_err(|_| format!("bad integer {s:?}"))?;
    Ok(Rational::from_integer(numer))
}

/// Serializes a rational as a `[numerator, denominator]` pair of JSON
/// integers (arbitrary precision).
pub struct RatPair<'a>(pub &'a Rational);

impl Serialize for RatPair<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&big_number(self.0.numer()))?;
        seq.serialize_element(&big_number(self.0.denom()))?;
        seq.end()
    }
}

fn big_number(n: &BigInt) -> serde_json::Number {
    serde_json::Number::from_string_unchecked(n.to_string())
}
