//! Rational exponents and the sign-preserving real power they induce.
//!
//! A degree such as `5/3` applied to a negative base is taken as the real
//! odd root raised to the numerator, so `(-8)^(5/3) = -32`. Exponents with
//! an even denominator are only defined for nonnegative bases.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub struct Exponent(Ratio<i64>);

impl Exponent {
    pub const ZERO: Exponent = Exponent(Ratio::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::Parse("exponent denominator is zero".into()));
        }
        Ok(Exponent(Ratio::new(numer, denom)))
    }

    pub fn integer(value: i64) -> Self {
        Exponent(Ratio::from_integer(value))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn value(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }

    pub fn is_integer(&self) -> bool {
        self.denom() == 1
    }

    /// True when both numerator and denominator are odd, the class of
    /// degrees for which `x^e` is an odd function on the whole real line.
    pub fn is_odd_rational(&self) -> bool {
        self.numer() % 2 != 0 && self.denom() % 2 != 0
    }

    pub fn minus_one(&self) -> Self {
        Exponent(self.0 - 1)
    }

    pub fn plus_one(&self) -> Self {
        Exponent(self.0 + 1)
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn from_f64(value: f64) -> Result<Self> {
        let approx = Ratio::<i64>::approximate_float(value)
            .ok_or_else(|| Error::Parse(format!("exponent {value} is not representable")))?;
        let back = *approx.numer() as f64 / *approx.denom() as f64;
        if (back - value).abs() > 1e-12 * value.abs().max(1.0) || *approx.denom() > 1_000_000 {
            return Err(Error::Parse(format!(
                "exponent {value} is not a simple rational; write it as \"p/q\""
            )));
        }
        Ok(Exponent(approx))
    }

    /// Real power `x^e` with the odd-root convention for negative bases.
    #[inline]
    pub fn pow(&self, x: f64) -> f64 {
        signed_pow(x, *self)
    }
}

impl std::ops::Add for Exponent {
    type Output = Exponent;
    fn add(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 + rhs.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent numerator in {s:?}")))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent denominator in {s:?}")))?;
            Exponent::new(n, d)
        } else if let Ok(i) = s.parse::<i64>() {
            Ok(Exponent::integer(i))
        } else {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent {s:?}")))?;
            Exponent::from_f64(v)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Int(i64),
    Float(f64),
    Text(String),
}

impl TryFrom<ExponentRepr> for Exponent {
    type Error = Error;

    fn try_from(repr: ExponentRepr) -> Result<Self> {
        match repr {
            ExponentRepr::Int(i) => Ok(Exponent::integer(i)),
            ExponentRepr::Float(v) => Exponent::from_f64(v),
            ExponentRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Exponent> for ExponentRepr {
    fn from(e: Exponent) -> Self {
        if e.is_integer() {
            ExponentRepr::Int(e.numer())
        } else {
            ExponentRepr::Text(e.to_string())
        }
    }
}

/// Sign-preserving real power. Returns NaN for a negative base under an
/// even-denominator exponent.
#[inline]
pub fn signed_pow(x: f64, e: Exponent) -> f64 {
    let (n, d) = (e.numer(), e.denom());
    if d == 1 {
        if n == 0 {
            return 1.0;
        }
        if let Ok(k) = i32::try_from(n) {
            return x.powi(k);
        }
    }
    if x >= 0.0 {
        return x.powf(e.value());
    }
    if d % 2 == 0 {
        return f64::NAN;
    }
    let magnitude = (-x).powf(e.value());
    if n % 2 == 0 {
        magnitude
    } else {
        -magnitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_root_of_negative_base() {
        let e = Exponent::new(5, 3).unwrap();
        assert!((signed_pow(-8.0, e) + 32.0).abs() < 1e-12);
        let e = Exponent::new(8, 3).unwrap();
        assert!((signed_pow(-8.0, e) - 256.0).abs() < 1e-9);
    }

    #[test]
    fn even_denominator_negative_is_nan() {
        let e = Exponent::new(3, 2).unwrap();
        assert!(signed_pow(-1.0, e).is_nan());
        assert_eq!(signed_pow(4.0, e), 8.0);
    }

    #[test]
    fn integer_powers_match_powi() {
        for x in [-2.5, -1.0, 0.0, 0.3, 7.0] {
            assert_eq!(signed_pow(x, Exponent::integer(3)), x.powi(3));
            assert_eq!(signed_pow(x, Exponent::ZERO), 1.0);
        }
    }

    #[test]
    fn parses_and_serializes() {
        let e: Exponent = serde_json::from_str("\"5/3\"").unwrap();
        assert_eq!(e, Exponent::new(5, 3).unwrap());
        let e: Exponent = serde_json::from_str("3").unwrap();
        assert_eq!(serde_json::to_string(&e).unwrap(), "3");
        let e: Exponent = serde_json::from_str("2.5").unwrap();
        assert_eq!(e.to_string(), "5/2");
        assert!("1/0".parse::<Exponent>().is_err());
        assert!(e.minus_one().value() == 1.5);
    }
}
