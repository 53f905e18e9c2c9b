//! Arithmetic modes.
//!
//! Every structure in the crate is generic over [`Scalar`], which is
//! implemented for exact big rationals ([`Rational`]) and for `f64`.
//! The exact mode verifies identities with zero residual; the float mode
//! verifies them up to [`Scalar::TOLERANCE`].

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational numbers backed by arbitrary-precision integers.
pub type Rational = BigRational;

/// Numeric field used for measures, kernels and cylinder tables.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Signed + Send + Sync + for<'a> std::ops::AddAssign<&'a Self> + 'static
{
    /// `true` for exact arithmetic.
    const EXACT: bool;
    /// Absolute tolerance used for invariant checks (0 in exact mode).
    const TOLERANCE: f64;
    /// Short mode name used in reports.
    const MODE: &'static str;

    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rational(q: &Rational) -> Self;
    fn to_f64(&self) -> f64;

    /// Parses `"2/5"`, `"0.4"`, `"-3"` or `"1e-3"`. Decimals are read
    /// exactly in rational mode.
    fn parse(s: &str) -> Result<Self>;

    /// Zero test at the given absolute tolerance; exact types ignore `tol`.
    fn approx_zero(&self, tol: f64) -> bool;

    fn is_negligible(&self) -> bool {
        self.approx_zero(Self::TOLERANCE)
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).is_negligible()
    }

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const TOLERANCE: f64 = 0.0;
    const MODE: &'static str = "exact";

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        // ToPrimitive on big rationals can lose everything for huge
        // numerators; fall back to a scaled division.
        match ToPrimitive::to_f64(self) {
            Some(v) if v.is_finite() => v,
            _ => {
                let n = self.numer().to_f64().unwrap_or(f64::NAN);
                let d = self.denom().to_f64().unwrap_or(f64::NAN);
                n / d
            }
        }
    }

    fn parse(s: &str) -> Result<Self> {
        parse_rational(s)
    }

    fn approx_zero(&self, _tol: f64) -> bool {
        self.is_zero()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const TOLERANCE: f64 = 1e-12;
    const MODE: &'static str = "float";

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_rational(q: &Rational) -> Self {
        Scalar::to_f64(q)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| Error::Parse(s.to_string()))?;
            let d: f64 = d.trim().parse().map_err(|_| Error::Parse(s.to_string()))?;
            if d == 0.0 {
                return Err(Error::Parse(s.to_string()));
            }
            return Ok(n / d);
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse(s.to_string()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse(s.to_string()))
        }
    }

    fn approx_zero(&self, tol: f64) -> bool {
        self.abs() <= tol
    }
}

/// Exact parse of fractions, integers and decimal literals (with optional
/// exponent).
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }

    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = t[pos + 1..].parse().map_err(|_| bad())?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
    if neg {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Sum of a slice of scalars.
pub fn sum<S: Scalar>(xs: &[S]) -> S {
    let mut acc = S::zero();
    for x in xs {
        acc += x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn parses_fractions_and_decimals_exactly() {
        assert_eq!(parse_rational("2/5").unwrap(), q(2, 5));
        assert_eq!(parse_rational("0.4").unwrap(), q(2, 5));
        assert_eq!(parse_rational(" -0.125 ").unwrap(), q(-1, 8));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(parse_rational("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse_rational("2.5E1").unwrap(), q(25, 1));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "abc", "1/0", "1.2.3", "--1", "."] {
            assert!(parse_rational(s).is_err(), "{s}");
        }
        assert!(<f64 as Scalar>::parse("1/0").is_err());
        assert!(<f64 as Scalar>::parse("nan").is_err());
    }

    #[test]
    fn float_parse_accepts_fractions() {
        assert_eq!(<f64 as Scalar>::parse("3/10").unwrap(), 0.3);
        assert_eq!(<f64 as Scalar>::parse("0.25").unwrap(), 0.25);
    }

    #[test]
    fn tolerance_semantics() {
        assert!(1e-13f64.is_negligible());
        assert!(!1e-11f64.is_negligible());
        assert!(!q(1, 1_000_000_000).is_negligible());
        assert!(Rational::zero().is_negligible());
    }
}
