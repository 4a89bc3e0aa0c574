//! Exact induced joint laws `P(x^n, y^n, s^{n+1})`.
//!
//! The law of a (channel, policy, horizon) triple is unrolled as the product
//! of the initial distribution, the per-step policy factors and the channel
//! kernel. Only trajectories with positive probability are stored. The state
//! path past `s_1` is determined by the deterministic update, so entries are
//! keyed by `(s_1, x-bits, y-bits)` and the path is recomputed on demand.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use num_bigint::BigUint;

use crate::channel::UnifilarChannel;
use crate::policy::CausalPolicy;
use crate::rat::Rat;

/// A random variable of the unrolled process. Times are 1-based; `X_t` and
/// `Y_t` exist for `t <= n`, `S_t` for `t <= n + 1`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum Var {
    X(u32),
    Y(u32),
    S(u32),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(t) => write!(f, "X{t}"),
            Var::Y(t) => write!(f, "Y{t}"),
            Var::S(t) => write!(f, "S{t}"),
        }
    }
}

/// Trajectory key: initial state plus input/output bit strings. Bit for time
/// `t` sits at position `n - t` (earliest step most significant).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct TrajKey {
    pub s1: u32,
    pub x: u64,
    pub y: u64,
}

impl TrajKey {
    pub fn x_bit(&self, n: u32, t: u32) -> usize {
        ((self.x >> (n - t)) & 1) as usize
    }

    pub fn y_bit(&self, n: u32, t: u32) -> usize {
        ((self.y >> (n - t)) & 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LawError {
    #[error("policy horizon {policy} does not match requested horizon {horizon}")]
    HorizonMismatch { policy: u32, horizon: u32 },
    #[error("laws have different shapes (horizon {a_n}/{b_n}, states {a_s}/{b_s})")]
    ShapeMismatch { a_n: u32, b_n: u32, a_s: usize, b_s: usize },
    #[error("unknown variable {0} for this law")]
    UnknownVariable(Var),
    #[error("empty variable set")]
    EmptyVariableSet,
    #[error("duplicate variable {0}")]
    DuplicateVariable(Var),
}

/// Exact joint law of `(X^n, Y^n, S^{n+1})` under a channel and a policy.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct JointLaw {
    horizon: u32,
    num_states: usize,
    entries: BTreeMap<TrajKey, Rat>,
}

impl JointLaw {
    /// Unrolls the exact induced law. Zero-probability branches are pruned,
    /// so every stored trajectory is support-consistent by construction.
    pub fn induced(
        channel: &UnifilarChannel,
        policy: &CausalPolicy,
        horizon: u32,
    ) -> Result<Self, LawError> {
        if policy.horizon() != horizon {
            return Err(LawError::HorizonMismatch { policy: policy.horizon(), horizon });
        }
        assert!(horizon >= 1 && horizon <= 32, "horizon out of supported range");
        let mut entries = BTreeMap::new();
        for (s1, pi) in channel.initial().iter().enumerate() {
            if pi.is_zero() {
                continue;
            }
            unroll(channel, policy, horizon, 1, s1 as u32, s1, 0, 0, pi.clone(), &mut entries);
        }
        Ok(JointLaw { horizon, num_states: channel.num_states(), entries })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn entries(&self) -> &BTreeMap<TrajKey, Rat> {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> Rat {
        self.entries.values().fold(Rat::zero(), |acc, p| acc + p.clone())
    }

    pub fn prob(&self, key: &TrajKey) -> Rat {
        self.entries.get(key).cloned().unwrap_or_else(Rat::zero)
    }

    /// Recomputes the full state path `s_1 .. s_{n+1}` of a trajectory.
    pub fn state_path(&self, channel: &UnifilarChannel, key: &TrajKey) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.horizon as usize + 1);
        let mut s = key.s1 as usize;
        path.push(s);
        for t in 1..=self.horizon {
            s = channel.next_state(s, key.x_bit(self.horizon, t), key.y_bit(self.horizon, t));
            path.push(s);
        }
        path
    }

    fn check_vars(&self, vars: &[Var]) -> Result<(), LawError> {
        if vars.is_empty() {
            return Err(LawError::EmptyVariableSet);
        }
        for (i, v) in vars.iter().enumerate() {
            let ok = match v {
                Var::X(t) | Var::Y(t) => *t >= 1 && *t <= self.horizon,
                Var::S(t) => *t >= 1 && *t <= self.horizon + 1,
            };
            if !ok {
                return Err(LawError::UnknownVariable(*v));
            }
            if vars[..i].contains(v) {
                return Err(LawError::DuplicateVariable(*v));
            }
        }
        Ok(())
    }

    /// Exact marginal over a nonempty set of variables.
    pub fn marginal(&self, channel: &UnifilarChannel, vars: &[Var]) -> Result<Marginal, LawError> {
        self.check_vars(vars)?;
        let needs_states = vars.iter().any(|v| matches!(v, Var::S(_)));
        // Assignments store one byte per variable; plenty for this crate's
        // desk-scale channels.
        assert!(!needs_states || self.num_states <= 256, "too many states for marginals");
        let mut entries: BTreeMap<Vec<u8>, Rat> = BTreeMap::new();
        for (key, p) in &self.entries {
            let path = if needs_states { self.state_path(channel, key) } else { Vec::new() };
            let assignment: Vec<u8> = vars
                .iter()
                .map(|v| match v {
                    Var::X(t) => key.x_bit(self.horizon, *t) as u8,
                    Var::Y(t) => key.y_bit(self.horizon, *t) as u8,
                    Var::S(t) => path[(*t - 1) as usize] as u8,
                })
                .collect();
            match entries.get_mut(&assignment) {
                Some(acc) => *acc += p,
                None => {
                    entries.insert(assignment, p.clone());
                }
            }
        }
        Ok(Marginal { vars: vars.to_vec(), entries })
    }

    /// Exact `l1` distance over the union of supports.
    pub fn l1_distance(&self, other: &JointLaw) -> Result<Rat, LawError> {
        if self.horizon != other.horizon || self.num_states != other.num_states {
            return Err(LawError::ShapeMismatch {
                a_n: self.horizon,
                b_n: other.horizon,
                a_s: self.num_states,
                b_s: other.num_states,
            });
        }
        let mut sum = Rat::zero();
        for (key, p) in &self.entries {
            sum += &(p - &other.prob(key)).abs();
        }
        for (key, q) in &other.entries {
            if !self.entries.contains_key(key) {
                sum += q;
            }
        }
        Ok(sum)
    }

    /// Debug dump: one trajectory per line, `s1 x-bits y-bits mass`.
    pub fn dump_lines(&self) -> String {
        let n = self.horizon;
        let mut out = String::new();
        for (key, p) in &self.entries {
            let xs: String = (1..=n).map(|t| char::from(b'0' + key.x_bit(n, t) as u8)).collect();
            let ys: String = (1..=n).map(|t| char::from(b'0' + key.y_bit(n, t) as u8)).collect();
            let _ = writeln!(out, "{} {xs} {ys} {p}", key.s1);
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn unroll(
    channel: &UnifilarChannel,
    policy: &CausalPolicy,
    n: u32,
    t: u32,
    s1: u32,
    state: usize,
    hx: u64,
    hy: u64,
    mass: Rat,
    entries: &mut BTreeMap<TrajKey, Rat>,
) {
    if t > n {
        let key = TrajKey { s1, x: hx, y: hy };
        match entries.get_mut(&key) {
            Some(acc) => *acc += &mass,
            None => {
                entries.insert(key, mass);
            }
        }
        return;
    }
    for x in 0..2usize {
        let p_pol = policy.prob(t, hx, hy, x);
        if p_pol.is_zero() {
            continue;
        }
        for y in 0..2usize {
            let p_ch = channel.prob(state, x, y);
            if p_ch.is_zero() {
                continue;
            }
            let next = channel.next_state(state, x, y);
            let m = &(&mass * &p_pol) * p_ch;
            unroll(
                channel,
                policy,
                n,
                t + 1,
                s1,
                next,
                (hx << 1) | x as u64,
                (hy << 1) | y as u64,
                m,
                entries,
            );
        }
    }
}

/// An exact marginal distribution over a named variable subset.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Marginal {
    vars: Vec<Var>,
    entries: BTreeMap<Vec<u8>, Rat>,
}

impl Marginal {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn entries(&self) -> &BTreeMap<Vec<u8>, Rat> {
        &self.entries
    }

    pub fn total(&self) -> Rat {
        self.entries.values().fold(Rat::zero(), |acc, p| acc + p.clone())
    }

    pub fn prob(&self, assignment: &[u8]) -> Rat {
        self.entries.get(assignment).cloned().unwrap_or_else(Rat::zero)
    }

    /// The probability values, for entropy computation.
    pub fn probs(&self) -> Vec<Rat> {
        self.entries.values().cloned().collect()
    }
}

/// The explicit law-vs-coordinates Lipschitz constant
/// `|X|^n |Y|^n |S|^{n+1} n` for binary alphabets.
pub fn lipschitz_constant(num_states: usize, n: u32) -> BigUint {
    let s = BigUint::from(num_states);
    let mut l = BigUint::from(1u32) << (2 * n as usize); // |X|^n |Y|^n = 4^n
    l *= s.pow(n + 1);
    l *= BigUint::from(n);
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DelayedActivationSpec, FamilyVariant};

    fn family(delay: u32, variant: FamilyVariant) -> UnifilarChannel {
        DelayedActivationSpec::new(delay, variant).unwrap().channel()
    }

    #[test]
    fn delay_phase_forces_zero_output() {
        let c = family(1, FamilyVariant::Good);
        let p = CausalPolicy::uniform(1);
        let law = JointLaw::induced(&c, &p, 1).unwrap();
        assert!(law.total().is_one());
        for (key, _) in law.entries() {
            assert_eq!(key.y_bit(1, 1), 0);
            assert_eq!(law.state_path(&c, key), vec![0, 1]);
        }
        // P(x = 1, y = 0) equals the policy mass on input 1.
        let m = law.marginal(&c, &[Var::X(1)]).unwrap();
        assert_eq!(m.prob(&[1]), Rat::new(1, 2));
        let y = law.marginal(&c, &[Var::Y(1)]).unwrap();
        assert!(y.prob(&[0]).is_one());
    }

    #[test]
    fn identity_channel_uniform_law() {
        let c = UnifilarChannel::noiseless_identity();
        let p = CausalPolicy::uniform(1);
        let law = JointLaw::induced(&c, &p, 1).unwrap();
        assert_eq!(law.support_len(), 2);
        assert_eq!(law.prob(&TrajKey { s1: 0, x: 0, y: 0 }), Rat::new(1, 2));
        assert_eq!(law.prob(&TrajKey { s1: 0, x: 1, y: 1 }), Rat::new(1, 2));
    }

    #[test]
    fn bad_family_output_is_fair_coin_when_active() {
        let c = family(1, FamilyVariant::Bad);
        let p = CausalPolicy::uniform(3);
        let law = JointLaw::induced(&c, &p, 3).unwrap();
        assert!(law.total().is_one());
        let m = law.marginal(&c, &[Var::Y(3)]).unwrap();
        assert_eq!(m.prob(&[1]), Rat::new(1, 2));
    }

    #[test]
    fn marginal_over_everything_matches_law() {
        let c = family(1, FamilyVariant::Bad);
        let p = CausalPolicy::uniform(2);
        let law = JointLaw::induced(&c, &p, 2).unwrap();
        let vars = [Var::X(1), Var::X(2), Var::Y(1), Var::Y(2), Var::S(1), Var::S(2), Var::S(3)];
        let m = law.marginal(&c, &vars).unwrap();
        assert_eq!(m.entries().len(), law.support_len());
        assert!(m.total().is_one());
    }

    #[test]
    fn marginal_errors() {
        let c = family(1, FamilyVariant::Good);
        let p = CausalPolicy::uniform(1);
        let law = JointLaw::induced(&c, &p, 1).unwrap();
        assert!(matches!(
            law.marginal(&c, &[Var::X(2)]),
            Err(LawError::UnknownVariable(Var::X(2)))
        ));
        assert!(matches!(law.marginal(&c, &[]), Err(LawError::EmptyVariableSet)));
        assert!(matches!(
            law.marginal(&c, &[Var::Y(1), Var::Y(1)]),
            Err(LawError::DuplicateVariable(Var::Y(1)))
        ));
    }

    #[test]
    fn l1_distance_examples() {
        let c = UnifilarChannel::noiseless_identity();
        let uniform = JointLaw::induced(&c, &CausalPolicy::uniform(1), 1).unwrap();
        assert!(uniform.l1_distance(&uniform).unwrap().is_zero());
        let det0 = CausalPolicy::from_coords(1, vec![Rat::zero()]).unwrap();
        let law0 = JointLaw::induced(&c, &det0, 1).unwrap();
        assert_eq!(uniform.l1_distance(&law0).unwrap(), Rat::one());
        // Any two laws are within total variation 2.
        let det1 = CausalPolicy::from_coords(1, vec![Rat::one()]).unwrap();
        let law1 = JointLaw::induced(&c, &det1, 1).unwrap();
        assert!(law0.l1_distance(&law1).unwrap() <= Rat::from_int(2));
    }

    #[test]
    fn lipschitz_constant_values() {
        assert_eq!(lipschitz_constant(3, 1), BigUint::from(36u32));
        assert_eq!(lipschitz_constant(4, 2), BigUint::from(2048u32));
        assert_eq!(lipschitz_constant(1, 1), BigUint::from(4u32));
        assert_eq!(lipschitz_constant(3, 2), BigUint::from(864u32));
    }

    #[test]
    fn dump_round_trips_masses() {
        let c = family(1, FamilyVariant::Good);
        let p = CausalPolicy::uniform(2);
        let law = JointLaw::induced(&c, &p, 2).unwrap();
        let dump = law.dump_lines();
        assert_eq!(dump.lines().count(), law.support_len());
        assert!(dump.lines().all(|l| l.split_whitespace().count() == 4));
    }
}
