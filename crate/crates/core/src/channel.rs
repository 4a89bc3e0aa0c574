//! Rational unifilar finite-state channels over binary alphabets.
//!
//! A channel is a finite state set, a deterministic state update
//! `(s, x, y) -> s'`, an exact-rational output kernel `P(y | x, s)` and a
//! rational initial state distribution. State labels are normalized to
//! `0..num_states`; the delayed-activation family uses the last index for its
//! absorbing active state.

use std::fmt;

use crate::rat::Rat;

/// Output kernel table `P(y | x, s)`, stored row-major in `(s, x, y)` order.
///
/// Input and output alphabets are binary throughout this crate, but the table
/// carries its alphabet sizes so downstream information measures stay generic
/// in the alphabet cardinalities.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KernelTable {
    num_states: usize,
    num_inputs: usize,
    num_outputs: usize,
    probs: Vec<Rat>,
}

impl KernelTable {
    pub fn new_binary(num_states: usize, probs: Vec<Rat>) -> Self {
        assert_eq!(probs.len(), num_states * 4);
        KernelTable { num_states, num_inputs: 2, num_outputs: 2, probs }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn prob(&self, state: usize, input: usize, output: usize) -> &Rat {
        &self.probs[(state * self.num_inputs + input) * self.num_outputs + output]
    }
}

/// A validated rational unifilar finite-state channel.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UnifilarChannel {
    kernel: KernelTable,
    update: Vec<usize>, // (s, x, y) -> s', row-major like the kernel
    initial: Vec<Rat>,
}

impl UnifilarChannel {
    pub fn num_states(&self) -> usize {
        self.kernel.num_states()
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    /// `P(y | x, s)`.
    pub fn prob(&self, state: usize, input: usize, output: usize) -> &Rat {
        self.kernel.prob(state, input, output)
    }

    /// Deterministic update `f(s, x, y)`.
    pub fn next_state(&self, state: usize, input: usize, output: usize) -> usize {
        self.update[(state * 2 + input) * 2 + output]
    }

    pub fn initial(&self) -> &[Rat] {
        &self.initial
    }

    /// The full kernel `W(y, s' | x, s) = P(y|x,s) [s' = f(s,x,y)]`.
    pub fn full_kernel(&self, state: usize, input: usize, output: usize, next: usize) -> Rat {
        if self.next_state(state, input, output) == next {
            self.prob(state, input, output).clone()
        } else {
            Rat::zero()
        }
    }

    /// Single-state noiseless channel: `P(y|x) = [y = x]`.
    pub fn noiseless_identity() -> Self {
        let one = Rat::one();
        let zero = Rat::zero();
        RawChannel {
            num_states: 1,
            initial: vec![one.clone()],
            kernel: vec![
                ((0, 0, 0), one.clone()),
                ((0, 0, 1), zero.clone()),
                ((0, 1, 0), zero),
                ((0, 1, 1), one),
            ],
            update: vec![((0, 0, 0), 0), ((0, 0, 1), 0), ((0, 1, 0), 0), ((0, 1, 1), 0)],
        }
        .validate()
        .expect("identity channel is valid")
    }

    /// Single-state memoryless binary symmetric channel with the given
    /// crossover probability.
    pub fn binary_symmetric(crossover: &Rat) -> Self {
        assert!(crossover.is_probability());
        let keep = Rat::one() - crossover.clone();
        RawChannel {
            num_states: 1,
            initial: vec![Rat::one()],
            kernel: vec![
                ((0, 0, 0), keep.clone()),
                ((0, 0, 1), crossover.clone()),
                ((0, 1, 0), crossover.clone()),
                ((0, 1, 1), keep),
            ],
            update: vec![((0, 0, 0), 0), ((0, 0, 1), 0), ((0, 1, 0), 0), ((0, 1, 1), 0)],
        }
        .validate()
        .expect("binary symmetric channel is valid")
    }
}

/// An unvalidated channel description, as produced by parsers.
///
/// Kernel entries omitted here are taken to be zero; update entries are
/// required for every `(s, x, y)` triple.
#[derive(Clone, Default)]
pub struct RawChannel {
    pub num_states: usize,
    pub initial: Vec<Rat>,
    pub kernel: Vec<((usize, usize, usize), Rat)>,
    pub update: Vec<((usize, usize, usize), usize)>,
}

impl RawChannel {
    /// Checks every class invariant and returns the channel, or the full list
    /// of violations.
    pub fn validate(self) -> Result<UnifilarChannel, ValidationReport> {
        let k = self.num_states;
        let mut violations = Vec::new();
        if k == 0 {
            violations.push(Violation::NoStates);
            return Err(ValidationReport { violations });
        }

        let mut kernel = vec![None::<Rat>; k * 4];
        for ((s, x, y), p) in &self.kernel {
            if *s >= k || *x >= 2 || *y >= 2 {
                violations.push(Violation::IndexOutOfRange { state: *s, input: *x, output: *y });
                continue;
            }
            let slot = &mut kernel[(*s * 2 + *x) * 2 + *y];
            if slot.is_some() {
                violations.push(Violation::DuplicateKernelEntry { state: *s, input: *x, output: *y });
            }
            *slot = Some(p.clone());
        }
        let kernel: Vec<Rat> =
            kernel.into_iter().map(|p| p.unwrap_or_else(Rat::zero)).collect();

        for (i, p) in kernel.iter().enumerate() {
            if !p.is_probability() {
                let (s, rest) = (i / 4, i % 4);
                violations.push(Violation::ProbabilityOutOfRange {
                    state: s,
                    input: rest / 2,
                    output: rest % 2,
                    value: p.clone(),
                });
            }
        }

        // Row sums must be exactly 1 for every (s, x).
        for s in 0..k {
            for x in 0..2 {
                let sum = &kernel[(s * 2 + x) * 2] + &kernel[(s * 2 + x) * 2 + 1];
                if !sum.is_one() {
                    violations.push(Violation::NonStochasticRow { state: s, input: x, sum });
                }
            }
        }

        let mut update = vec![None::<usize>; k * 4];
        for ((s, x, y), s2) in &self.update {
            if *s >= k || *x >= 2 || *y >= 2 || *s2 >= k {
                violations.push(Violation::IndexOutOfRange { state: *s, input: *x, output: *y });
                continue;
            }
            let slot = &mut update[(*s * 2 + *x) * 2 + *y];
            if let Some(prev) = slot {
                if *prev != *s2 {
                    violations.push(Violation::ConflictingUpdate { state: *s, input: *x, output: *y });
                }
            }
            *slot = Some(*s2);
        }
        let mut update_dense = Vec::with_capacity(k * 4);
        for (i, slot) in update.into_iter().enumerate() {
            match slot {
                Some(s2) => update_dense.push(s2),
                None => {
                    let (s, rest) = (i / 4, i % 4);
                    violations.push(Violation::PartialUpdate { state: s, input: rest / 2, output: rest % 2 });
                    update_dense.push(0);
                }
            }
        }

        if self.initial.len() != k {
            violations.push(Violation::InitialLengthMismatch { expected: k, found: self.initial.len() });
        } else {
            for (s, p) in self.initial.iter().enumerate() {
                if !p.is_probability() {
                    violations.push(Violation::InitialProbabilityOutOfRange { state: s, value: p.clone() });
                }
            }
            let sum = self.initial.iter().fold(Rat::zero(), |acc, p| acc + p.clone());
            if !sum.is_one() {
                violations.push(Violation::InitialSumNotOne { sum });
            }
        }

        if violations.is_empty() {
            Ok(UnifilarChannel {
                kernel: KernelTable::new_binary(k, kernel),
                update: update_dense,
                initial: self.initial,
            })
        } else {
            Err(ValidationReport { violations })
        }
    }
}

#[derive(Clone, PartialEq, Eq, thiserror::Error, Debug)]
pub enum Violation {
    #[error("channel has no states")]
    NoStates,
    #[error("kernel row (state {state}, input {input}) sums to {sum}, not 1")]
    NonStochasticRow { state: usize, input: usize, sum: Rat },
    #[error("kernel entry (state {state}, input {input}, output {output}) is {value}, outside [0, 1]")]
    ProbabilityOutOfRange { state: usize, input: usize, output: usize, value: Rat },
    #[error("initial distribution sums to {sum}, not 1")]
    InitialSumNotOne { sum: Rat },
    #[error("initial entry for state {state} is {value}, outside [0, 1]")]
    InitialProbabilityOutOfRange { state: usize, value: Rat },
    #[error("initial distribution has {found} entries, channel has {expected} states")]
    InitialLengthMismatch { expected: usize, found: usize },
    #[error("update map is missing (state {state}, input {input}, output {output})")]
    PartialUpdate { state: usize, input: usize, output: usize },
    #[error("conflicting update entries for (state {state}, input {input}, output {output})")]
    ConflictingUpdate { state: usize, input: usize, output: usize },
    #[error("duplicate kernel entry for (state {state}, input {input}, output {output})")]
    DuplicateKernelEntry { state: usize, input: usize, output: usize },
    #[error("index (state {state}, input {input}, output {output}) out of range")]
    IndexOutOfRange { state: usize, input: usize, output: usize },
}

/// Every invariant violation found in a candidate channel.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid channel ({} violations):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Which output kernel the delayed-activation family uses once active:
/// `Good` is noiseless (`y = x`), `Bad` is a fair coin regardless of input.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FamilyVariant {
    Good,
    Bad,
}

impl FamilyVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyVariant::Good => "good",
            FamilyVariant::Bad => "bad",
        }
    }
}

impl fmt::Display for FamilyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FamilyVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "good" => Ok(FamilyVariant::Good),
            "bad" => Ok(FamilyVariant::Bad),
            other => Err(format!("unknown family variant `{other}` (expected `good` or `bad`)")),
        }
    }
}

/// Parameters of the delayed-activation family: the channel outputs 0
/// deterministically for `delay + 1` steps, then absorbs into an active state
/// whose kernel depends on the variant.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DelayedActivationSpec {
    pub delay: u32,
    pub variant: FamilyVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("delayed-activation delay must be at least 1, got {0}")]
pub struct InvalidDelay(pub u32);

impl DelayedActivationSpec {
    pub fn new(delay: u32, variant: FamilyVariant) -> Result<Self, InvalidDelay> {
        if delay < 1 {
            return Err(InvalidDelay(delay));
        }
        Ok(DelayedActivationSpec { delay, variant })
    }

    /// Index of the absorbing active state inside the generated channel.
    pub fn active_state(&self) -> usize {
        self.delay as usize + 1
    }

    /// Builds the channel: states `{0, .., delay}` plus the active state,
    /// initial mass 1 at state 0, counting update, output 0 during the delay.
    pub fn channel(&self) -> UnifilarChannel {
        let n = self.delay as usize;
        let k = n + 2;
        let star = n + 1;
        let mut kernel = Vec::new();
        let mut update = Vec::new();
        for s in 0..k {
            let next = if s < n { s + 1 } else { star };
            for x in 0..2 {
                for y in 0..2 {
                    update.push(((s, x, y), next));
                    let p = if s <= n {
                        // Delay phase: output 0 regardless of input.
                        if y == 0 { Rat::one() } else { Rat::zero() }
                    } else {
                        match self.variant {
                            FamilyVariant::Good => {
                                if y == x { Rat::one() } else { Rat::zero() }
                            }
                            FamilyVariant::Bad => Rat::new(1, 2),
                        }
                    };
                    kernel.push(((s, x, y), p));
                }
            }
        }
        let mut initial = vec![Rat::zero(); k];
        initial[0] = Rat::one();
        RawChannel { num_states: k, initial, kernel, update }
            .validate()
            .expect("delayed-activation channel is valid by construction")
    }

    /// Exact normalized finite-horizon value `a_n` of this channel.
    ///
    /// The bad variant carries no information at any horizon. The good
    /// variant is silent through the delay and then noiseless, contributing
    /// one bit per active step.
    pub fn normalized_value(&self, n: u32) -> Rat {
        assert!(n >= 1, "horizon must be at least 1");
        match self.variant {
            FamilyVariant::Bad => Rat::zero(),
            FamilyVariant::Good => {
                let boundary = self.delay as i64 + 1;
                if (n as i64) <= boundary {
                    Rat::zero()
                } else {
                    Rat::new(n as i64 - boundary, n as i64)
                }
            }
        }
    }

    /// Exact unnormalized finite-horizon value `n * a_n`.
    pub fn unnormalized_value(&self, n: u32) -> Rat {
        self.normalized_value(n) * Rat::from_int(n as i64)
    }

    /// Exact feedback capacity: 1 for the good variant, 0 for the bad one.
    pub fn capacity(&self) -> Rat {
        match self.variant {
            FamilyVariant::Good => Rat::one(),
            FamilyVariant::Bad => Rat::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(delay: u32, variant: FamilyVariant) -> DelayedActivationSpec {
        DelayedActivationSpec::new(delay, variant).unwrap()
    }

    #[test]
    fn family_shape() {
        let good = family(1, FamilyVariant::Good).channel();
        assert_eq!(good.num_states(), 3);
        // Delay phase outputs 0 regardless of input.
        assert!(good.prob(0, 1, 0).is_one());
        let bad = family(1, FamilyVariant::Bad).channel();
        assert_eq!(bad.prob(2, 0, 1), &Rat::new(1, 2));
        // State delay reaches the absorbing state and stays there.
        let g2 = family(2, FamilyVariant::Good).channel();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(g2.next_state(2, x, y), 3);
                assert_eq!(g2.next_state(3, x, y), 3);
            }
        }
    }

    #[test]
    fn delay_zero_rejected() {
        assert_eq!(
            DelayedActivationSpec::new(0, FamilyVariant::Good),
            Err(InvalidDelay(0))
        );
    }

    #[test]
    fn row_sum_violation_reported() {
        let mut raw = RawChannel {
            num_states: 1,
            initial: vec![Rat::one()],
            kernel: vec![((0, 0, 0), Rat::new(1, 2)), ((0, 0, 1), Rat::new(1, 3))],
            update: vec![((0, 0, 0), 0), ((0, 0, 1), 0), ((0, 1, 0), 0), ((0, 1, 1), 0)],
        };
        raw.kernel.push(((0, 1, 0), Rat::one()));
        raw.kernel.push(((0, 1, 1), Rat::zero()));
        let report = raw.validate().unwrap_err();
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::NonStochasticRow { state: 0, input: 0, .. }
        )));
    }

    #[test]
    fn partial_update_reported() {
        let raw = RawChannel {
            num_states: 1,
            initial: vec![Rat::one()],
            kernel: vec![
                ((0, 0, 0), Rat::one()),
                ((0, 1, 1), Rat::one()),
            ],
            update: vec![((0, 0, 0), 0), ((0, 0, 1), 0), ((0, 1, 0), 0)],
        };
        let report = raw.validate().unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PartialUpdate { state: 0, input: 1, output: 1 })));
    }

    #[test]
    fn identity_channel_valid() {
        let c = UnifilarChannel::noiseless_identity();
        assert_eq!(c.num_states(), 1);
        assert!(c.prob(0, 0, 0).is_one());
        assert!(c.prob(0, 1, 0).is_zero());
    }

    #[test]
    fn closed_form_values() {
        let g1 = family(1, FamilyVariant::Good);
        assert_eq!(g1.normalized_value(2), Rat::zero());
        assert_eq!(g1.normalized_value(4), Rat::new(1, 2));
        let b2 = family(2, FamilyVariant::Bad);
        assert_eq!(b2.normalized_value(7), Rat::zero());
        assert_eq!(family(5, FamilyVariant::Good).capacity(), Rat::one());
        assert_eq!(family(1, FamilyVariant::Bad).capacity(), Rat::zero());
    }

    #[test]
    fn closed_form_limit() {
        let g1 = family(1, FamilyVariant::Good);
        let a = g1.normalized_value(1000);
        assert_eq!(a, Rat::new(499, 500));
        assert!(Rat::one() - a < Rat::new(1, 100));
    }

    #[test]
    fn closed_form_monotone_and_below_one() {
        for delay in 1..=3u32 {
            let spec = family(delay, FamilyVariant::Good);
            let mut prev = Rat::zero();
            for n in 1..=60 {
                let a = spec.normalized_value(n);
                assert!(a >= prev);
                assert!(a < Rat::one());
                prev = a;
            }
        }
    }

    #[test]
    fn full_kernel_is_stochastic() {
        let c = family(2, FamilyVariant::Bad).channel();
        for s in 0..c.num_states() {
            for x in 0..2 {
                let mut sum = Rat::zero();
                for y in 0..2 {
                    for s2 in 0..c.num_states() {
                        sum += &c.full_kernel(s, x, y, s2);
                    }
                }
                assert!(sum.is_one());
            }
        }
    }
}
