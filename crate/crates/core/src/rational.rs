//! Exact rational scalars and the extended non-negative domain.
//!
//! All verification arithmetic in this crate goes through [`Rational`];
//! floating point is confined to the advisory solver and oracles.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational, always reduced, denominator > 0.
pub type Rational = BigRational;

/// Shorthand constructor for small rationals. Panics on zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// 2^-k as an exact rational.
pub fn pow2_neg(k: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << k)
}

#[derive(Debug, Error, PartialEq)]
pub enum RationalError {
    #[error("malformed rational `{0}`: expected `<int>` or `<num>/<den>`")]
    Malformed(String),
    #[error("denominator must be positive in `{0}`")]
    NonPositiveDenominator(String),
    #[error("non-finite float {0} cannot be rationalized")]
    NonFinite(f64),
}

/// Parses `n` or `n/d` with `d > 0`. Whitespace around the tokens is not accepted;
/// callers tokenize first.
pub fn parse_rational(s: &str) -> Result<Rational, RationalError> {
    let mk_err = || RationalError::Malformed(s.to_string());
    match s.split_once('/') {
        None => {
            let n: BigInt = s.parse().map_err(|_| mk_err())?;
            Ok(Rational::from_integer(n))
        }
        Some((num, den)) => {
            let n: BigInt = num.parse().map_err(|_| mk_err())?;
            let d: BigInt = den.parse().map_err(|_| mk_err())?;
            if d <= BigInt::zero() {
                return Err(RationalError::NonPositiveDenominator(s.to_string()));
            }
            Ok(Rational::new(n, d))
        }
    }
}

/// Canonical `num/den` rendering, reduced, denominator always printed.
pub fn format_exact(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Display-only decimal rendering, 12 significant digits.
pub fn format_approx(r: &Rational) -> String {
    let x = to_f64(r);
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        // trim trailing zeros but keep at least one digit after the point
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{:.11e}", x)
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::INFINITY)
}

/// Largest rational with denominator dividing 2^bits that is <= r.
pub fn dyadic_floor(r: &Rational, bits: u32) -> Rational {
    let scaled = (r.numer() << bits).div_floor(r.denom());
    Rational::new(scaled, BigInt::one() << bits)
}

/// Smallest rational with denominator dividing 2^bits that is >= r.
pub fn dyadic_ceil(r: &Rational, bits: u32) -> Rational {
    let scaled = (r.numer() << bits).div_ceil(r.denom());
    Rational::new(scaled, BigInt::one() << bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundDir {
    Down,
    Up,
}

/// Converts a finite non-negative float to a rational with denominator <= 2^bits,
/// guaranteed on the requested side of the float, clamped at zero.
pub fn rationalize_f64(x: f64, dir: RoundDir, bits: u32) -> Result<Rational, RationalError> {
    if !x.is_finite() {
        return Err(RationalError::NonFinite(x));
    }
    let exact = Rational::from_float(x).ok_or(RationalError::NonFinite(x))?;
    let rounded = match dir {
        RoundDir::Down => dyadic_floor(&exact, bits),
        RoundDir::Up => dyadic_ceil(&exact, bits),
    };
    if rounded.is_negative() {
        Ok(Rational::zero())
    } else {
        Ok(rounded)
    }
}

/// Non-negative rational extended with the absorbing infinity of least solutions.
///
/// Arithmetic conventions: `a + inf = inf`, `0 * inf = 0`, `a * inf = inf` for `a > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtRational {
    Finite(Rational),
    Infinity,
}

impl ExtRational {
    pub fn zero() -> Self {
        ExtRational::Finite(Rational::zero())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtRational::Finite(_))
    }
}

impl From<Rational> for ExtRational {
    fn from(r: Rational) -> Self {
        ExtRational::Finite(r)
    }
}

impl PartialOrd for ExtRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(match (self, other) {
            (ExtRational::Infinity, ExtRational::Infinity) => Ordering::Equal,
            (ExtRational::Infinity, ExtRational::Finite(_)) => Ordering::Greater,
            (ExtRational::Finite(_), ExtRational::Infinity) => Ordering::Less,
            (ExtRational::Finite(a), ExtRational::Finite(b)) => a.cmp(b),
        })
    }
}

impl Add for ExtRational {
    type Output = ExtRational;
    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtRational::Finite(a), ExtRational::Finite(b)) => ExtRational::Finite(a + b),
            _ => ExtRational::Infinity,
        }
    }
}

impl Mul for ExtRational {
    type Output = ExtRational;
    fn mul(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtRational::Finite(a), ExtRational::Finite(b)) => ExtRational::Finite(a * b),
            (ExtRational::Finite(a), ExtRational::Infinity)
            | (ExtRational::Infinity, ExtRational::Finite(a)) => {
                if a.is_zero() {
                    ExtRational::zero()
                } else {
                    ExtRational::Infinity
                }
            }
            (ExtRational::Infinity, ExtRational::Infinity) => ExtRational::Infinity,
        }
    }
}

impl fmt::Display for ExtRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRational::Finite(r) => write!(f, "{}", format_exact(r)),
            ExtRational::Infinity => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_roundtrip() {
        let r = parse_rational("45/14").unwrap();
        assert_eq!(r, rat(45, 14));
        assert_eq!(format_exact(&r), "45/14");
        assert_eq!(parse_rational("7").unwrap(), rat_int(7));
        assert_eq!(parse_rational("-3/6").unwrap(), rat(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1/-2").is_err());
        assert!(parse_rational("a/b").is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(rat(2, 4), rat(1, 2));
        assert_eq!(format_exact(&Rational::zero()), "0/1");
        assert_eq!(rat(3, -6), rat(-1, 2));
    }

    #[test]
    fn dyadic_rounding_brackets() {
        let r = rat(1, 3);
        let lo = dyadic_floor(&r, 8);
        let hi = dyadic_ceil(&r, 8);
        assert!(lo <= r && r <= hi);
        assert_eq!(lo, rat(85, 256));
        assert_eq!(hi, rat(86, 256));
        // exact dyadic value is preserved in both directions
        let half = rat(1, 2);
        assert_eq!(dyadic_floor(&half, 4), half);
        assert_eq!(dyadic_ceil(&half, 4), half);
    }

    #[test]
    fn rationalize_sides() {
        let x = 0.5857864376269049_f64;
        let lo = rationalize_f64(x, RoundDir::Down, 20).unwrap();
        let hi = rationalize_f64(x, RoundDir::Up, 20).unwrap();
        assert!(to_f64(&lo) <= x && x <= to_f64(&hi));
        assert!(lo > rat(58578, 100000));
        assert!(hi <= rat(5857865, 10000000) + pow2_neg(20));
        assert_eq!(rationalize_f64(0.5, RoundDir::Down, 2).unwrap(), rat(1, 2));
        assert_eq!(rationalize_f64(0.0, RoundDir::Up, 8).unwrap(), Rational::zero());
        assert!(rationalize_f64(f64::NAN, RoundDir::Down, 8).is_err());
        assert!(rationalize_f64(f64::INFINITY, RoundDir::Up, 8).is_err());
    }

    #[test]
    fn ext_rational_conventions() {
        let fin = |n, d| ExtRational::Finite(rat(n, d));
        assert_eq!(fin(1, 2) + ExtRational::Infinity, ExtRational::Infinity);
        assert_eq!(fin(0, 1) * ExtRational::Infinity, ExtRational::zero());
        assert_eq!(fin(3, 1) * ExtRational::Infinity, ExtRational::Infinity);
        assert!(fin(1000, 1) < ExtRational::Infinity);
    }
}
