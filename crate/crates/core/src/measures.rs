//! Certified information measures on exact laws.
//!
//! Entropies, conditional mutual informations and directed information are
//! computed as exact rational expressions in which the only irrational
//! ingredient is `log2` of a rational; those are enclosed by the certified
//! series in [`crate::interval`]. Results are reported in bits.
//!
//! Precision budgeting: a requested final width `2^-m` is split as
//! `2^-(m+1)` of series error (divided equally across additive terms) plus
//! `2^-(m+1)` of outward dyadic rounding at the boundary.

use std::collections::BTreeMap;
use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::channel::UnifilarChannel;
use crate::interval::{log2_enclosure, CertifiedReal, RatInterval};
use crate::law::{JointLaw, LawError, Var};
use crate::policy::CausalPolicy;
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeasuresError {
    #[error("distribution sums to {sum}, not 1")]
    NotNormalized { sum: Rat },
    #[error("distribution entry {value} is outside [0, 1]")]
    EntryOutOfRange { value: Rat },
    #[error("delta is {0}, outside the required range")]
    DeltaOutOfRange(Rat),
    #[error("alphabet must have at least one symbol")]
    EmptyAlphabet,
    #[error("variable {0} appears in more than one group")]
    OverlappingGroups(Var),
    #[error("the U and V groups must be nonempty")]
    EmptyGroup,
    #[error("step {t} is not within horizon {n}")]
    StepOutOfRange { t: u32, n: u32 },
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Turns `2^-m` into the internal series budget `2^-(m+1)` and the dyadic
/// rounding precision `m + 2`.
fn budgets(precision_exp: u32) -> (Rat, u32) {
    (Rat::pow2(-(precision_exp as i64) - 1), precision_exp + 2)
}

/// Encloses `H(P) = -sum p log2 p` to interval width at most `budget`,
/// assuming entries are valid probabilities (checked by callers).
fn entropy_interval(probs: &[Rat], budget: &Rat) -> RatInterval {
    // Group equal values: laws built from coarse grids repeat probabilities
    // heavily, and one log enclosure then covers the whole group.
    let mut groups: BTreeMap<&Rat, u64> = BTreeMap::new();
    for p in probs {
        if p.is_zero() || p.is_one() {
            continue; // 0 log 0 := 0, and log 1 = 0
        }
        *groups.entry(p).or_insert(0) += 1;
    }
    if groups.is_empty() {
        return RatInterval::zero();
    }
    let per_term = budget / &Rat::from(groups.len() as u64);
    let mut sum = RatInterval::zero();
    for (p, count) in groups {
        let weight = &Rat::from(count) * p;
        // -p log2 p = p log2(1/p); requested log width keeps the weighted
        // term within its share of the budget.
        let log_width = &per_term / &weight;
        let term = log2_enclosure(&p.recip(), &log_width).scale(&weight);
        sum = sum.add(&term);
    }
    sum
}

fn check_distribution(probs: &[Rat]) -> Result<(), MeasuresError> {
    let mut sum = Rat::zero();
    for p in probs {
        if !p.is_probability() {
            return Err(MeasuresError::EntryOutOfRange { value: p.clone() });
        }
        sum += p;
    }
    if !sum.is_one() {
        return Err(MeasuresError::NotNormalized { sum });
    }
    Ok(())
}

/// Certified enclosure of the Shannon entropy (bits) of an exact
/// distribution, to width at most `2^-precision_exp`.
pub fn entropy(probs: &[Rat], precision_exp: u32) -> Result<CertifiedReal, MeasuresError> {
    check_distribution(probs)?;
    let (budget, round) = budgets(precision_exp);
    Ok(CertifiedReal::from_rat_interval(&entropy_interval(probs, &budget), round))
}

/// Certified enclosure of the binary entropy `h2(delta)`.
pub fn binary_entropy(delta: &Rat, precision_exp: u32) -> Result<CertifiedReal, MeasuresError> {
    if !delta.is_probability() {
        return Err(MeasuresError::DeltaOutOfRange(delta.clone()));
    }
    entropy(&[delta.clone(), Rat::one() - delta.clone()], precision_exp)
}

fn binary_entropy_interval(delta: &Rat, budget: &Rat) -> RatInterval {
    entropy_interval(&[delta.clone(), Rat::one() - delta.clone()], budget)
}

/// Entropy-continuity bound `delta log2(|A|-1) + h2(delta)` for distributions
/// on an alphabet of size `|A|` at `l1` distance at most `delta <= 1/2`.
///
/// For a one-symbol alphabet all distributions coincide, so the bound is
/// exactly zero.
fn fannes_interval(
    alphabet_size: &BigUint,
    delta: &Rat,
    budget: &Rat,
) -> Result<RatInterval, MeasuresError> {
    if alphabet_size.is_zero() {
        return Err(MeasuresError::EmptyAlphabet);
    }
    if delta.is_negative() || delta > &Rat::new(1, 2) {
        return Err(MeasuresError::DeltaOutOfRange(delta.clone()));
    }
    if alphabet_size.is_one() || delta.is_zero() {
        return Ok(RatInterval::zero());
    }
    let half = budget.clone() * Rat::new(1, 2);
    let m = alphabet_size - BigUint::one();
    let log_term = if m.is_one() {
        RatInterval::zero()
    } else {
        let width = &half / delta;
        log2_enclosure(&Rat::from_biguint(m), &width).scale(delta)
    };
    Ok(log_term.add(&binary_entropy_interval(delta, &half)))
}

/// Certified Fannes–Audenaert bound as a [`CertifiedReal`].
pub fn fannes_bound(
    alphabet_size: &BigUint,
    delta: &Rat,
    precision_exp: u32,
) -> Result<CertifiedReal, MeasuresError> {
    let (budget, round) = budgets(precision_exp);
    let iv = fannes_interval(alphabet_size, delta, &budget)?;
    Ok(CertifiedReal::from_rat_interval(&iv, round))
}

/// A named entropy-continuity modulus evaluation, kept alongside certified
/// values so their radius arithmetic can be re-checked later.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ContinuityModulus {
    pub delta: Rat,
    pub alphabet_size: BigUint,
    pub bound: CertifiedReal,
}

/// Evaluates [`fannes_bound`] and records its inputs.
pub fn fannes_modulus(
    alphabet_size: BigUint,
    delta: Rat,
    precision_exp: u32,
) -> Result<ContinuityModulus, MeasuresError> {
    let bound = fannes_bound(&alphabet_size, &delta, precision_exp)?;
    Ok(ContinuityModulus { delta, alphabet_size, bound })
}

/// Sum of Fannes bounds over the four entropy terms of the conditional
/// mutual information identity, for the given joint alphabet sizes.
pub(crate) fn fannes_sum_interval(
    sizes: &[BigUint],
    delta: &Rat,
    budget: &Rat,
) -> Result<RatInterval, MeasuresError> {
    let per = budget / &Rat::from(sizes.len() as u64);
    let mut sum = RatInterval::zero();
    for size in sizes {
        sum = sum.add(&fannes_interval(size, delta, &per)?);
    }
    Ok(sum)
}

/// Per-step continuity modulus `omega_t(delta)` for the step-`t` conditional
/// mutual information `I(X_t; Y_t | Y^{t-1})` under an `l1` perturbation
/// `delta` of the joint law: the sum of the four Fannes bounds on the
/// entropies of `(X_t, Y^{t-1})`, `(Y_t, Y^{t-1})`, `Y^{t-1}` and
/// `(X_t, Y_t, Y^{t-1})`, with binary alphabets. Monotone in `delta`, and an
/// upper bound only.
pub fn cmi_modulus(
    t: u32,
    n: u32,
    delta: &Rat,
    precision_exp: u32,
) -> Result<CertifiedReal, MeasuresError> {
    if t < 1 || t > n {
        return Err(MeasuresError::StepOutOfRange { t, n });
    }
    let sizes = [
        BigUint::one() << t,       // X_t x Y^{t-1}
        BigUint::one() << t,       // Y_t x Y^{t-1}
        BigUint::one() << (t - 1), // Y^{t-1}
        BigUint::one() << (t + 1), // X_t x Y_t x Y^{t-1}
    ];
    let (budget, round) = budgets(precision_exp);
    let iv = fannes_sum_interval(&sizes, delta, &budget)?;
    Ok(CertifiedReal::from_rat_interval(&iv, round))
}

fn entropy_of_vars(
    law: &JointLaw,
    channel: &UnifilarChannel,
    vars: &[Var],
    budget: &Rat,
    memo: &mut HashMap<Vec<Var>, RatInterval>,
) -> Result<RatInterval, MeasuresError> {
    if vars.is_empty() {
        return Ok(RatInterval::zero());
    }
    let key: Vec<Var> = vars.to_vec();
    if let Some(iv) = memo.get(&key) {
        return Ok(iv.clone());
    }
    let marginal = law.marginal(channel, vars)?;
    let iv = entropy_interval(&marginal.probs(), budget);
    memo.insert(key, iv.clone());
    Ok(iv)
}

fn cmi_interval(
    law: &JointLaw,
    channel: &UnifilarChannel,
    u: &[Var],
    v: &[Var],
    w: &[Var],
    per_entropy_budget: &Rat,
    memo: &mut HashMap<Vec<Var>, RatInterval>,
) -> Result<RatInterval, MeasuresError> {
    if u.is_empty() || v.is_empty() {
        return Err(MeasuresError::EmptyGroup);
    }
    for var in u.iter().chain(v) {
        if v.contains(var) && u.contains(var) {
            return Err(MeasuresError::OverlappingGroups(*var));
        }
        if w.contains(var) {
            return Err(MeasuresError::OverlappingGroups(*var));
        }
    }
    let mut sorted = |a: &[Var], b: &[Var]| -> Vec<Var> {
        let mut vs: Vec<Var> = a.iter().chain(b).copied().collect();
        vs.sort();
        vs
    };
    let uw = sorted(u, w);
    let vw = sorted(v, w);
    let uvw = sorted(&sorted(u, v), w);
    // I(U; V | W) = H(U,W) + H(V,W) - H(W) - H(U,V,W)
    let h_uw = entropy_of_vars(law, channel, &uw, per_entropy_budget, memo)?;
    let h_vw = entropy_of_vars(law, channel, &vw, per_entropy_budget, memo)?;
    let h_w = entropy_of_vars(law, channel, w, per_entropy_budget, memo)?;
    let h_uvw = entropy_of_vars(law, channel, &uvw, per_entropy_budget, memo)?;
    Ok(h_uw.add(&h_vw).sub(&h_w).sub(&h_uvw))
}

/// Certified enclosure of `I(U; V | W)` under an exact law, via the
/// four-entropy identity. `W` may be empty (plain mutual information).
pub fn conditional_mutual_information(
    law: &JointLaw,
    channel: &UnifilarChannel,
    u: &[Var],
    v: &[Var],
    w: &[Var],
    precision_exp: u32,
) -> Result<CertifiedReal, MeasuresError> {
    let (budget, round) = budgets(precision_exp);
    let per_entropy = budget * Rat::new(1, 4);
    let mut memo = HashMap::new();
    let iv = cmi_interval(law, channel, u, v, w, &per_entropy, &mut memo)?;
    Ok(CertifiedReal::from_rat_interval(&iv, round))
}

fn prefix_vars(t: u32) -> (Vec<Var>, Vec<Var>, Vec<Var>) {
    let u: Vec<Var> = (1..=t).map(Var::X).collect();
    let v = vec![Var::Y(t)];
    let w: Vec<Var> = (1..t).map(Var::Y).collect();
    (u, v, w)
}

/// Certified enclosure of the sum of per-step terms
/// `I(X^t; Y_t | Y^{t-1})` over the listed steps only.
///
/// This is the work-horse behind [`directed_information`]; solvers that have
/// proved some steps contribute exactly zero call it with the remaining ones.
pub fn directed_information_steps(
    channel: &UnifilarChannel,
    policy: &CausalPolicy,
    n: u32,
    steps: &[u32],
    precision_exp: u32,
) -> Result<CertifiedReal, MeasuresError> {
    let law = JointLaw::induced(channel, policy, n)?;
    let (budget, round) = budgets(precision_exp);
    if steps.is_empty() {
        return Ok(CertifiedReal::exact_zero());
    }
    for t in steps {
        if *t < 1 || *t > n {
            return Err(MeasuresError::StepOutOfRange { t: *t, n });
        }
    }
    let per_entropy = &budget / &Rat::from(4 * steps.len() as u64);
    let mut memo = HashMap::new();
    let mut sum = RatInterval::zero();
    for t in steps {
        let (u, v, w) = prefix_vars(*t);
        sum = sum.add(&cmi_interval(&law, channel, &u, &v, &w, &per_entropy, &mut memo)?);
    }
    Ok(CertifiedReal::from_rat_interval(&sum, round))
}

/// Certified enclosure of the directed information
/// `I(X^n -> Y^n) = sum_t I(X^t; Y_t | Y^{t-1})` under the induced law.
pub fn directed_information(
    channel: &UnifilarChannel,
    policy: &CausalPolicy,
    n: u32,
    precision_exp: u32,
) -> Result<CertifiedReal, MeasuresError> {
    let steps: Vec<u32> = (1..=n).collect();
    directed_information_steps(channel, policy, n, &steps, precision_exp)
}
