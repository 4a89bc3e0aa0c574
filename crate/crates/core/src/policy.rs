//! Causal input policies and rational grid nets over them.
//!
//! A policy at horizon `n` assigns, for every step `t` and every history
//! `(x^{t-1}, y^{t-1})`, a distribution over the binary input. With binary
//! inputs each history carries one free coordinate — the probability of
//! input 1 — so a policy is a point in `[0,1]^d` with
//! `d = sum_{t=1..n} 4^{t-1}`.
//!
//! Histories are packed as integers with the earliest bit most significant,
//! and the flat coordinate order is `(t, x-history, y-history)` ascending.
//! That order is fixed: grid enumeration, argmax tie-breaking and the
//! interchange format all depend on it.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::One;

use crate::rat::Rat;

/// Number of free policy coordinates at horizon `n` (binary alphabets).
pub fn dimension(n: u32) -> u128 {
    assert!(n >= 1 && n <= 32, "horizon out of supported range");
    let mut d: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..n {
        d += pow;
        pow *= 4;
    }
    d
}

/// Offset of step `t`'s coordinate block within the flat vector.
fn step_offset(t: u32) -> u128 {
    if t == 1 { 0 } else { dimension(t - 1) }
}

/// Flat index of the coordinate for history `(x^{t-1}, y^{t-1})`.
///
/// `hx` and `hy` pack the history bits with the earliest bit most
/// significant; both lie in `[0, 2^{t-1})`.
pub fn flat_index(t: u32, hx: u64, hy: u64) -> u128 {
    debug_assert!(t >= 1);
    debug_assert!(hx < (1 << (t - 1)) && hy < (1 << (t - 1)));
    step_offset(t) + ((hx as u128) << (t - 1)) + hy as u128
}

/// Inverse of [`flat_index`].
pub fn unflatten(mut index: u128) -> (u32, u64, u64) {
    let mut t = 1u32;
    loop {
        let block = 1u128 << (2 * (t - 1));
        if index < block {
            let hx = (index >> (t - 1)) as u64;
            let hy = (index & ((1 << (t - 1)) - 1)) as u64;
            return (t, hx, hy);
        }
        index -= block;
        t += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("coordinate vector has {found} entries, horizon {horizon} needs {expected}")]
    WrongLength { horizon: u32, expected: u128, found: usize },
    #[error("coordinate {index} is {value}, outside [0, 1]")]
    CoordinateOutOfRange { index: usize, value: Rat },
    #[error("policies have different dimensions ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
}

/// A total causal input policy, stored as its flat free-coordinate vector.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CausalPolicy {
    horizon: u32,
    coords: Vec<Rat>,
}

impl CausalPolicy {
    pub fn from_coords(horizon: u32, coords: Vec<Rat>) -> Result<Self, PolicyError> {
        let expected = dimension(horizon);
        if coords.len() as u128 != expected {
            return Err(PolicyError::WrongLength { horizon, expected, found: coords.len() });
        }
        for (index, value) in coords.iter().enumerate() {
            if !value.is_probability() {
                return Err(PolicyError::CoordinateOutOfRange { index, value: value.clone() });
            }
        }
        Ok(CausalPolicy { horizon, coords })
    }

    /// The policy that plays a fair coin after every history.
    pub fn uniform(horizon: u32) -> Self {
        let d = dimension(horizon) as usize;
        CausalPolicy { horizon, coords: vec![Rat::new(1, 2); d] }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn coords(&self) -> &[Rat] {
        &self.coords
    }

    /// `P(x_t = x | x-history hx, y-history hy)`.
    pub fn prob(&self, t: u32, hx: u64, hy: u64, x: usize) -> Rat {
        let theta = &self.coords[flat_index(t, hx, hy) as usize];
        if x == 1 { theta.clone() } else { Rat::one() - theta.clone() }
    }

    pub fn coordinates(&self) -> PolicyCoordinates {
        PolicyCoordinates { horizon: self.horizon, theta: self.coords.clone() }
    }
}

/// The flat coordinate view of a policy; [`flat_index`]/[`unflatten`] are the
/// index bijection between positions and `(t, history)` pairs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PolicyCoordinates {
    pub horizon: u32,
    pub theta: Vec<Rat>,
}

impl PolicyCoordinates {
    pub fn to_policy(&self) -> Result<CausalPolicy, PolicyError> {
        CausalPolicy::from_coords(self.horizon, self.theta.clone())
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }
}

/// Exact `l1` distance between coordinate vectors.
pub fn l1_distance(a: &PolicyCoordinates, b: &PolicyCoordinates) -> Result<Rat, PolicyError> {
    if a.theta.len() != b.theta.len() {
        return Err(PolicyError::DimensionMismatch { a: a.theta.len(), b: b.theta.len() });
    }
    let mut sum = Rat::zero();
    for (x, y) in a.theta.iter().zip(&b.theta) {
        sum += &(x - y).abs();
    }
    Ok(sum)
}

/// A rational grid over the policy space: every free coordinate ranges over
/// `{0, 1/M, ..., 1}`. The grid covers the space to `l1` radius
/// `eta = d / M` (per coordinate the nearest grid value is within `1/(2M)`).
#[derive(Clone, Debug)]
pub struct GridNet {
    horizon: u32,
    resolution: u64,
    dimension: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grid of {} policies exceeds the budget of {budget}", self.required_display())]
pub struct GridBudgetError {
    /// `(M+1)^d`, exact unless `exact` is false, in which case the true count
    /// is even larger and this is a lower bound.
    pub required: BigUint,
    pub exact: bool,
    pub budget: u64,
}

impl GridBudgetError {
    fn required_display(&self) -> String {
        if self.exact {
            self.required.to_string()
        } else {
            format!("more than {}", self.required)
        }
    }
}

/// Number of grid policies `(M+1)^d`. Exact up to a million bits; beyond
/// that the count is saturated and flagged, since no budget can reach it.
pub fn grid_count(horizon: u32, resolution: u64) -> (BigUint, bool) {
    let d = dimension(horizon);
    let base = BigUint::from(resolution + 1);
    let mut count = BigUint::one();
    let mut i: u128 = 0;
    while i < d {
        count *= &base;
        i += 1;
        if count.bits() > 1 << 20 {
            return (count, false);
        }
    }
    (count, true)
}

impl GridNet {
    /// Builds the net after checking its size against `budget`.
    pub fn new(horizon: u32, resolution: u64, budget: u64) -> Result<Self, GridBudgetError> {
        assert!(resolution >= 1, "grid resolution must be at least 1");
        let (required, exact) = grid_count(horizon, resolution);
        if required > BigUint::from(budget) {
            return Err(GridBudgetError { required, exact, budget });
        }
        Ok(GridNet { horizon, resolution, dimension: dimension(horizon) })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    pub fn dimension(&self) -> u128 {
        self.dimension
    }

    /// Guaranteed `l1` covering radius `d / M`.
    pub fn eta(&self) -> Rat {
        Rat::from(self.dimension as u64) / Rat::from(self.resolution)
    }

    pub fn len(&self) -> u64 {
        let mut count: u64 = 1;
        for _ in 0..self.dimension {
            count = count.checked_mul(self.resolution + 1).expect("checked against budget");
        }
        count
    }

    /// Decodes the `index`-th grid policy in lexicographic coordinate order:
    /// coordinate 0 is the most significant base-`M+1` digit.
    pub fn coords_at(&self, index: u64) -> Vec<Rat> {
        let d = self.dimension as usize;
        let base = (self.resolution + 1) as u128;
        let mut rem = index as u128;
        let mut digits = vec![0u64; d];
        for i in (0..d).rev() {
            digits[i] = (rem % base) as u64;
            rem /= base;
        }
        debug_assert_eq!(rem, 0, "index out of range");
        digits
            .into_iter()
            .map(|digit| Rat::from(digit) / Rat::from(self.resolution))
            .collect()
    }

    pub fn policy_at(&self, index: u64) -> CausalPolicy {
        CausalPolicy { horizon: self.horizon, coords: self.coords_at(index) }
    }

    /// Streams all grid policies in deterministic lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = CausalPolicy> + '_ {
        (0..self.len()).map(move |i| self.policy_at(i))
    }
}

fn history_bits(t: u32, h: u64) -> String {
    if t == 1 {
        return "-".to_string();
    }
    (0..t - 1).map(|i| if (h >> (t - 2 - i)) & 1 == 1 { '1' } else { '0' }).collect()
}

fn parse_history_bits(t: u32, s: &str) -> Option<u64> {
    if t == 1 {
        return if s == "-" { Some(0) } else { None };
    }
    if s.len() != (t - 1) as usize {
        return None;
    }
    let mut h = 0u64;
    for c in s.chars() {
        h = (h << 1) | match c {
            '0' => 0,
            '1' => 1,
            _ => return None,
        };
    }
    Some(h)
}

/// Writes the policy interchange format: a header with the horizon, then one
/// line `t <x-history> <y-history> <coordinate>` per history.
pub fn write_policy(policy: &CausalPolicy) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "policyv1 {}", policy.horizon());
    for (i, theta) in policy.coords().iter().enumerate() {
        let (t, hx, hy) = unflatten(i as u128);
        let _ = writeln!(out, "{t} {} {} {theta}", history_bits(t, hx), history_bits(t, hy));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct PolicyParseError {
    pub line: usize,
    pub reason: String,
}

pub fn parse_policy(text: &str) -> Result<CausalPolicy, PolicyParseError> {
    let mut lines = text.lines().enumerate();
    let horizon: u32 = loop {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| PolicyParseError { line: 1, reason: "empty policy file".into() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rest = line.strip_prefix("policyv1").ok_or_else(|| PolicyParseError {
            line: idx + 1,
            reason: "expected header `policyv1 <horizon>`".into(),
        })?;
        break rest.trim().parse().map_err(|_| PolicyParseError {
            line: idx + 1,
            reason: "invalid horizon in header".into(),
        })?;
    };
    if horizon < 1 || horizon > 32 {
        return Err(PolicyParseError { line: 1, reason: format!("horizon {horizon} out of range") });
    }
    let d = dimension(horizon) as usize;
    let mut coords: Vec<Option<Rat>> = vec![None; d];
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(PolicyParseError { line: lineno, reason: "expected `t xhist yhist coord`".into() });
        }
        let t: u32 = toks[0]
            .parse()
            .map_err(|_| PolicyParseError { line: lineno, reason: "invalid step".into() })?;
        if t < 1 || t > horizon {
            return Err(PolicyParseError { line: lineno, reason: format!("step {t} out of range") });
        }
        let hx = parse_history_bits(t, toks[1])
            .ok_or_else(|| PolicyParseError { line: lineno, reason: "invalid x-history".into() })?;
        let hy = parse_history_bits(t, toks[2])
            .ok_or_else(|| PolicyParseError { line: lineno, reason: "invalid y-history".into() })?;
        let theta: Rat = toks[3]
            .parse()
            .map_err(|_| PolicyParseError { line: lineno, reason: "invalid coordinate".into() })?;
        let i = flat_index(t, hx, hy) as usize;
        if coords[i].is_some() {
            return Err(PolicyParseError { line: lineno, reason: "duplicate history".into() });
        }
        coords[i] = Some(theta);
    }
    let mut dense = Vec::with_capacity(d);
    for (i, c) in coords.into_iter().enumerate() {
        match c {
            Some(r) => dense.push(r),
            None => {
                let (t, hx, hy) = unflatten(i as u128);
                return Err(PolicyParseError {
                    line: 0,
                    reason: format!(
                        "missing coordinate for step {t}, histories {} / {}",
                        history_bits(t, hx),
                        history_bits(t, hy)
                    ),
                });
            }
        }
    }
    CausalPolicy::from_coords(horizon, dense)
        .map_err(|e| PolicyParseError { line: 0, reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_values() {
        assert_eq!(dimension(1), 1);
        assert_eq!(dimension(2), 5);
        assert_eq!(dimension(3), 21);
    }

    #[test]
    fn index_bijection() {
        for i in 0..dimension(4) {
            let (t, hx, hy) = unflatten(i);
            assert_eq!(flat_index(t, hx, hy), i);
        }
    }

    #[test]
    fn uniform_policy_coords() {
        let p = CausalPolicy::uniform(2);
        assert_eq!(p.coords().len(), 5);
        assert!(p.coords().iter().all(|c| c == &Rat::new(1, 2)));
        assert_eq!(p.prob(2, 1, 0, 0), Rat::new(1, 2));
    }

    #[test]
    fn grid_enumeration_small() {
        let net = GridNet::new(1, 2, 100).unwrap();
        let values: Vec<Rat> = net.iter().map(|p| p.coords()[0].clone()).collect();
        assert_eq!(values, vec![Rat::zero(), Rat::new(1, 2), Rat::one()]);
        let net = GridNet::new(1, 1, 100).unwrap();
        assert_eq!(net.len(), 2);
        let net = GridNet::new(2, 1, 100).unwrap();
        assert_eq!(net.len(), 32);
    }

    #[test]
    fn grid_budget_reports_exact_count() {
        let err = GridNet::new(2, 2, 100).unwrap_err();
        assert_eq!(err.required, BigUint::from(243u32)); // 3^5
        assert_eq!(err.budget, 100);
    }

    #[test]
    fn grid_enumeration_deterministic() {
        let net = GridNet::new(2, 1, 100).unwrap();
        let a: Vec<CausalPolicy> = net.iter().collect();
        let b: Vec<CausalPolicy> = net.iter().collect();
        assert_eq!(a, b);
        // Lexicographic: first policy is all zeros, last is all ones.
        assert!(a[0].coords().iter().all(Rat::is_zero));
        assert!(a[31].coords().iter().all(Rat::is_one));
    }

    #[test]
    fn l1_examples() {
        let a = CausalPolicy::uniform(1).coordinates();
        let mut one = a.clone();
        one.theta[0] = Rat::one();
        assert_eq!(l1_distance(&a, &a).unwrap(), Rat::zero());
        assert_eq!(l1_distance(&a, &one).unwrap(), Rat::new(1, 2));
        let z = PolicyCoordinates { horizon: 2, theta: vec![Rat::zero(); 5] };
        let o = PolicyCoordinates { horizon: 2, theta: vec![Rat::one(); 5] };
        assert_eq!(l1_distance(&z, &o).unwrap(), Rat::from_int(5));
        assert!(l1_distance(&a, &z).is_err());
    }

    #[test]
    fn coordinate_round_trip() {
        let p = CausalPolicy::uniform(3);
        assert_eq!(p.coordinates().to_policy().unwrap(), p);
    }

    #[test]
    fn interchange_round_trip() {
        let net = GridNet::new(2, 2, 1000).unwrap();
        let p = net.policy_at(97);
        let text = write_policy(&p);
        assert_eq!(parse_policy(&text).unwrap(), p);
    }

    #[test]
    fn interchange_missing_coordinate() {
        let p = CausalPolicy::uniform(2);
        let text = write_policy(&p);
        let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(parse_policy(&truncated).is_err());
    }

    #[test]
    fn out_of_range_coordinate_rejected() {
        let err = CausalPolicy::from_coords(1, vec![Rat::new(3, 2)]).unwrap_err();
        assert!(matches!(err, PolicyError::CoordinateOutOfRange { index: 0, .. }));
    }
}
