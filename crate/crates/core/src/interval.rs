//! Exact rational interval arithmetic and certified logarithms.
//!
//! All enclosure computation in this crate is done on [`RatInterval`] values
//! whose endpoints are exact rationals: sums, products and scalings introduce
//! no rounding at all. The only irrational ingredient anywhere is the
//! logarithm, which is enclosed by an argument-reduced series
//! (`ln x = k ln 2 + 2 atanh z`) with a rigorous truncation bound. Results
//! are rounded outward to dyadic endpoints only at the public boundary
//! ([`CertifiedReal`]).

use std::collections::HashMap;
use std::fmt;

use crate::dyadic::Dyadic;
use crate::rat::Rat;

/// Closed interval with exact rational endpoints, `lo <= hi`.
#[derive(Clone, PartialEq, Eq)]
pub struct RatInterval {
    lo: Rat,
    hi: Rat,
}

impl RatInterval {
    pub fn new(lo: Rat, hi: Rat) -> Self {
        assert!(lo <= hi, "interval endpoints out of order");
        RatInterval { lo, hi }
    }

    pub fn point(x: Rat) -> Self {
        RatInterval { lo: x.clone(), hi: x }
    }

    pub fn zero() -> Self {
        RatInterval::point(Rat::zero())
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rat) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn add(&self, other: &Self) -> Self {
        RatInterval { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi }
    }

    pub fn sub(&self, other: &Self) -> Self {
        RatInterval { lo: &self.lo - &other.hi, hi: &self.hi - &other.lo }
    }

    pub fn neg(&self) -> Self {
        RatInterval { lo: -&self.hi, hi: -&self.lo }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let c = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        RatInterval { lo, hi }
    }

    /// Multiplication by an exact scalar.
    pub fn scale(&self, s: &Rat) -> Self {
        if s.is_negative() {
            RatInterval { lo: &self.hi * s, hi: &self.lo * s }
        } else {
            RatInterval { lo: &self.lo * s, hi: &self.hi * s }
        }
    }

    /// Division by an interval that does not contain zero.
    pub fn div(&self, other: &Self) -> Self {
        assert!(
            other.lo.is_negative() == other.hi.is_negative() && !other.lo.is_zero() && !other.hi.is_zero(),
            "interval division requires a sign-definite divisor"
        );
        let c = [
            &self.lo / &other.lo,
            &self.lo / &other.hi,
            &self.hi / &other.lo,
            &self.hi / &other.hi,
        ];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        RatInterval { lo, hi }
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl fmt::Debug for RatInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Compares `x` against `2^k`.
fn cmp_pow2(x: &Rat, k: i64) -> std::cmp::Ordering {
    x.cmp(&Rat::pow2(k))
}

/// `k` such that `x / 2^k` lies in `[1, 2)`, for `x > 0`.
fn floor_log2(x: &Rat) -> i64 {
    let nbits = x.numer().bits() as i64;
    let dbits = x.denom().bits() as i64;
    let mut k = nbits - dbits;
    while cmp_pow2(x, k) == std::cmp::Ordering::Less {
        k -= 1;
    }
    while cmp_pow2(x, k + 1) != std::cmp::Ordering::Less {
        k += 1;
    }
    k
}

/// Encloses `atanh(z)` for exact `0 <= z < 1` by the odd power series with
/// `terms` leading terms plus a geometric tail bound.
fn atanh_enclosure(z: &Rat, terms: usize) -> RatInterval {
    if z.is_zero() {
        return RatInterval::zero();
    }
    let z2 = z * z;
    let mut power = z.clone(); // z^(2j+1)
    let mut sum = Rat::zero();
    for j in 0..terms {
        sum += &(&power / &Rat::from_int(2 * j as i64 + 1));
        power *= &z2;
    }
    // Remaining terms are positive and bounded by a geometric series:
    // sum_{j>=J} z^(2j+1)/(2j+1) <= z^(2J+1) / ((2J+1) (1 - z^2)).
    let tail = &power / &(&Rat::from_int(2 * terms as i64 + 1) * &(Rat::one() - z2));
    RatInterval { lo: sum.clone(), hi: sum + tail }
}

/// Encloses `ln 2 = 2 atanh(1/3)`.
fn ln2_enclosure(terms: usize) -> RatInterval {
    atanh_enclosure(&Rat::new(1, 3), terms).scale(&Rat::from_int(2))
}

fn log2_enclosure_terms(x: &Rat, terms: usize) -> RatInterval {
    let k = floor_log2(x);
    let m = x * &Rat::pow2(-k); // in [1, 2)
    // ln m = 2 atanh((m-1)/(m+1)), argument in [0, 1/3).
    let z = &(&m - &Rat::one()) / &(&m + &Rat::one());
    let ln_m = atanh_enclosure(&z, terms).scale(&Rat::from_int(2));
    let ln2 = ln2_enclosure(terms);
    RatInterval::point(Rat::from_int(k)).add(&ln_m.div(&ln2))
}

/// Encloses `log2(x)` for exact rational `x > 0` to width at most `target`.
///
/// Refinement doubles the series depth; the tail shrinks by at least 1/9 per
/// extra term, so this terminates for any positive target.
pub fn log2_enclosure(x: &Rat, target: &Rat) -> RatInterval {
    assert!(!x.is_negative() && !x.is_zero(), "log2 of a nonpositive rational");
    assert!(!target.is_negative() && !target.is_zero(), "nonpositive target width");
    if x.is_one() {
        return RatInterval::zero();
    }
    let mut terms = 8;
    loop {
        let enc = log2_enclosure_terms(x, terms);
        if &enc.width() <= target {
            return enc;
        }
        terms *= 2;
        assert!(terms <= 1 << 24, "log2 enclosure failed to converge");
    }
}

/// Memoizes `log2` enclosures at a fixed target width. Probability values
/// repeat heavily across entropy terms of the same law, so this pays off.
pub struct Log2Cache {
    target: Rat,
    map: HashMap<Rat, RatInterval>,
}

impl Log2Cache {
    pub fn new(target: Rat) -> Self {
        Log2Cache { target, map: HashMap::new() }
    }

    pub fn log2(&mut self, x: &Rat) -> RatInterval {
        if let Some(enc) = self.map.get(x) {
            return enc.clone();
        }
        let enc = log2_enclosure(x, &self.target);
        self.map.insert(x.clone(), enc.clone());
        enc
    }
}

/// A certified enclosure of a real number: the exact value is guaranteed to
/// lie in `[lower, upper]`, both ends dyadic.
#[derive(Clone, PartialEq, Eq)]
pub struct CertifiedReal {
    lower: Dyadic,
    upper: Dyadic,
}

impl CertifiedReal {
    pub fn new(lower: Dyadic, upper: Dyadic) -> Self {
        assert!(lower <= upper, "certified enclosure out of order");
        CertifiedReal { lower, upper }
    }

    pub fn exact(d: Dyadic) -> Self {
        CertifiedReal { lower: d.clone(), upper: d }
    }

    pub fn exact_zero() -> Self {
        CertifiedReal::exact(Dyadic::zero())
    }

    /// Rounds rational endpoints outward to the dyadic grid `2^-precision`,
    /// growing the width by at most `2^-(precision-1)`.
    pub fn from_rat_interval(iv: &RatInterval, precision: u32) -> Self {
        CertifiedReal {
            lower: Dyadic::floor_of_rat(iv.lo(), precision),
            upper: Dyadic::ceil_of_rat(iv.hi(), precision),
        }
    }

    pub fn lower(&self) -> &Dyadic {
        &self.lower
    }

    pub fn upper(&self) -> &Dyadic {
        &self.upper
    }

    pub fn width(&self) -> Dyadic {
        self.upper.sub(&self.lower)
    }

    pub fn midpoint(&self) -> Dyadic {
        self.lower.add(&self.upper).half()
    }

    pub fn contains_rat(&self, x: &Rat) -> bool {
        &self.lower.to_rat() <= x && x <= &self.upper.to_rat()
    }

    pub fn contains_zero(&self) -> bool {
        (self.lower.is_negative() || self.lower.is_zero()) && !self.upper.is_negative()
    }

    pub fn add(&self, other: &Self) -> Self {
        CertifiedReal {
            lower: self.lower.add(&other.lower),
            upper: self.upper.add(&other.upper),
        }
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }

    pub fn to_rat_interval(&self) -> RatInterval {
        RatInterval::new(self.lower.to_rat(), self.upper.to_rat())
    }
}

impl fmt::Display for CertifiedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

impl fmt::Debug for CertifiedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn floor_log2_brackets() {
        for (x, k) in [
            (rat(1, 1), 0),
            (rat(2, 1), 1),
            (rat(3, 1), 1),
            (rat(1, 2), -1),
            (rat(1, 3), -2),
            (rat(7, 3), 1),
            (rat(1024, 1), 10),
            (rat(1, 1024), -10),
        ] {
            assert_eq!(floor_log2(&x), k, "x = {x}");
        }
    }

    #[test]
    fn log2_exact_powers() {
        for e in [-5i64, -1, 0, 1, 7] {
            let enc = log2_enclosure(&Rat::pow2(e), &rat(1, 1 << 20));
            assert!(enc.contains(&Rat::from_int(e)));
            // Powers of two reduce to m = 1 and the enclosure is exact.
            assert!(enc.width().is_zero());
        }
    }

    #[test]
    fn log2_three_matches_f64() {
        let enc = log2_enclosure(&rat(3, 1), &Rat::pow2(-40));
        let f = 3f64.log2();
        assert!(enc.lo().to_f64() <= f && f <= enc.hi().to_f64());
        assert!(enc.width() <= Rat::pow2(-40));
    }

    #[test]
    fn log2_monotone_samples() {
        let t = Rat::pow2(-30);
        let a = log2_enclosure(&rat(1, 3), &t);
        let b = log2_enclosure(&rat(1, 2), &t);
        assert!(a.hi() < b.lo());
    }

    #[test]
    fn interval_ops() {
        let a = RatInterval::new(rat(-1, 2), rat(1, 3));
        let b = RatInterval::new(rat(2, 1), rat(3, 1));
        let p = a.mul(&b);
        assert_eq!(p.lo(), &rat(-3, 2));
        assert_eq!(p.hi(), &rat(1, 1));
        let q = a.div(&b);
        assert_eq!(q.lo(), &rat(-1, 4));
        assert_eq!(q.hi(), &rat(1, 6));
    }

    #[test]
    fn certified_real_rounding() {
        let iv = RatInterval::new(rat(1, 3), rat(2, 3));
        let c = CertifiedReal::from_rat_interval(&iv, 10);
        assert!(c.contains_rat(&rat(1, 3)));
        assert!(c.contains_rat(&rat(2, 3)));
        assert!(c.width().to_rat() <= iv.width() + Rat::pow2(-9));
    }
}
