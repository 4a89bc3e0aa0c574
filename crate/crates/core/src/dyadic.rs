//! Dyadic rationals `m * 2^e`.
//!
//! Certified enclosures are reported with dyadic endpoints: addition,
//! subtraction and halving are exact, and the string form `m*2^e` is
//! canonical, which keeps certificate files byte-reproducible.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rat::Rat;

/// A dyadic rational `mantissa * 2^exponent`, normalized so the mantissa is
/// odd (or zero, in which case the exponent is zero).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: BigInt,
    exponent: i64,
}

impl Dyadic {
    pub fn new(mantissa: BigInt, exponent: i64) -> Self {
        let mut d = Dyadic { mantissa, exponent };
        d.normalize();
        d
    }

    pub fn zero() -> Self {
        Dyadic { mantissa: BigInt::zero(), exponent: 0 }
    }

    pub fn from_int(n: i64) -> Self {
        Dyadic::new(BigInt::from(n), 0)
    }

    /// 2^e.
    pub fn pow2(e: i64) -> Self {
        Dyadic { mantissa: BigInt::one(), exponent: e }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    fn normalize(&mut self) {
        if self.mantissa.is_zero() {
            self.exponent = 0;
            return;
        }
        while self.mantissa.is_even() {
            self.mantissa >>= 1;
            self.exponent += 1;
        }
    }

    /// Largest dyadic with denominator `2^precision` that is `<= x`.
    pub fn floor_of_rat(x: &Rat, precision: u32) -> Self {
        let scaled = x.numer() << precision as usize;
        let q = scaled.div_floor(x.denom());
        Dyadic::new(q, -(precision as i64))
    }

    /// Smallest dyadic with denominator `2^precision` that is `>= x`.
    pub fn ceil_of_rat(x: &Rat, precision: u32) -> Self {
        let scaled = x.numer() << precision as usize;
        let q = scaled.div_ceil(x.denom());
        Dyadic::new(q, -(precision as i64))
    }

    pub fn to_rat(&self) -> Rat {
        Rat::from_bigints(self.mantissa.clone(), BigInt::one()).unwrap()
            * Rat::pow2(self.exponent)
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    /// Exact sum; dyadics are closed under addition.
    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let e = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - e) as usize;
        let b = &other.mantissa << (other.exponent - e) as usize;
        Dyadic::new(a + b, e)
    }

    pub fn sub(&self, other: &Dyadic) -> Dyadic {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic { mantissa: -&self.mantissa, exponent: self.exponent }
    }

    /// Exact halving.
    pub fn half(&self) -> Dyadic {
        if self.is_zero() {
            return Dyadic::zero();
        }
        Dyadic { mantissa: self.mantissa.clone(), exponent: self.exponent - 1 }
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rat().to_f64()
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exponent.min(other.exponent);
        let a = &self.mantissa << (self.exponent - e) as usize;
        let b = &other.mantissa << (other.exponent - e) as usize;
        a.cmp(&b)
    }
}

/// Canonical form `m*2^e`, e.g. `13*2^-5`. Plain integers print as `m*2^0`.
impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mantissa, self.exponent)
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Dyadic {
    type Err = ParseDyadicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, e) = s.split_once("*2^").ok_or_else(|| ParseDyadicError(s.to_string()))?;
        let mantissa = BigInt::from_str(m).map_err(|_| ParseDyadicError(s.to_string()))?;
        let exponent = i64::from_str(e).map_err(|_| ParseDyadicError(s.to_string()))?;
        let d = Dyadic::new(mantissa.clone(), exponent);
        // Only normalized forms are accepted, so parsing is the inverse of Display.
        if d.mantissa != mantissa || d.exponent != exponent {
            return Err(ParseDyadicError(s.to_string()));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid dyadic literal `{0}` (expected normalized `m*2^e`)")]
pub struct ParseDyadicError(pub String);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let d = Dyadic::new(BigInt::from(8), -5);
        assert_eq!(d.to_string(), "1*2^-2");
        assert_eq!(Dyadic::new(BigInt::zero(), 7).to_string(), "0*2^0");
    }

    #[test]
    fn rounding_brackets_value() {
        let x = Rat::new(1, 3);
        let lo = Dyadic::floor_of_rat(&x, 8);
        let hi = Dyadic::ceil_of_rat(&x, 8);
        assert!(lo.to_rat() <= x && x <= hi.to_rat());
        assert_eq!(&hi.to_rat() - &lo.to_rat(), Rat::pow2(-8));
        // Exactly representable values round to themselves.
        let y = Rat::new(3, 8);
        assert_eq!(Dyadic::floor_of_rat(&y, 8), Dyadic::ceil_of_rat(&y, 8));
    }

    #[test]
    fn arithmetic_and_order() {
        let a = Dyadic::new(BigInt::from(3), -2); // 3/4
        let b = Dyadic::new(BigInt::from(1), -1); // 1/2
        assert_eq!(a.add(&b).to_rat(), Rat::new(5, 4));
        assert_eq!(a.sub(&b).to_rat(), Rat::new(1, 4));
        assert!(b < a);
        assert_eq!(a.half().to_rat(), Rat::new(3, 8));
    }

    #[test]
    fn display_parse_round_trip() {
        for s in ["0*2^0", "1*2^-2", "-13*2^7", "5*2^0"] {
            let d: Dyadic = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("4*2^-2".parse::<Dyadic>().is_err()); // not normalized
        assert!("1/2".parse::<Dyadic>().is_err());
    }
}
