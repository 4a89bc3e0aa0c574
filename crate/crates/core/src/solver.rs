//! Certified and heuristic finite-horizon value solvers.
//!
//! The certified path evaluates directed information on a rational grid net
//! over the policy space and converts the net's covering radius into a value
//! error through explicit continuity moduli: the law moves at most
//! `L * eta` in `l1` when coordinates move `eta` (the computable Lipschitz
//! constant), and each per-step conditional mutual information moves at most
//! a four-term Fannes sum under an `l1` law perturbation.
//!
//! Two certified modes exist. Target-precision mode derives the grid
//! resolution from a requested accuracy `2^-k`; its resolutions are often
//! astronomically large, in which case it fails fast with the exact required
//! policy count instead of returning an uncertified number. Report-bound
//! mode evaluates a caller-chosen resolution and reports the honestly
//! computable radius for it.
//!
//! Before any grid work, steps whose output distribution is provably
//! policy-independent are discharged exactly: if every kernel row over the
//! states reachable at step `t` is one common distribution, then `Y_t` is
//! independent of the whole past for every policy and the step contributes
//! exactly zero. This is what makes silent prefixes (and pure-noise
//! channels) certifiable at tight accuracy without a grid.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::UnifilarChannel;
use crate::dyadic::Dyadic;
use crate::encoding::{decode_channel, ChannelEncoding, DecodeError};
use crate::interval::CertifiedReal;
use crate::law::lipschitz_constant;
use crate::measures::{directed_information, directed_information_steps, fannes_sum_interval, MeasuresError};
use crate::policy::{dimension, CausalPolicy, GridNet};
use crate::rat::Rat;

/// Execution limits for certified evaluation.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Worker threads for net evaluation; results are worker-count
    /// independent.
    pub workers: usize,
    /// Hard cap on the number of policies a net may contain.
    pub budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { workers: 1, budget: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("net requires {} policies, budget is {budget}{}", required_display(.required, .exact),
            feasible_display(.feasible_k))]
    BudgetExceeded {
        /// `(M+1)^d` for the resolution the moduli demand (a lower bound if
        /// `exact` is false).
        required: BigUint,
        exact: bool,
        budget: u64,
        /// Largest precision exponent whose net fits the budget, if any.
        feasible_k: Option<u32>,
    },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Measures(#[from] MeasuresError),
}

fn required_display(required: &BigUint, exact: &bool) -> String {
    if *exact { required.to_string() } else { format!("more than {required}") }
}

fn feasible_display(feasible_k: &Option<u32>) -> String {
    match feasible_k {
        Some(k) => format!("; largest feasible precision exponent is {k}"),
        None => "; no precision exponent is feasible within this budget".to_string(),
    }
}

/// Reachability and triviality analysis of each step of the horizon.
#[derive(Clone, Debug)]
pub struct StepAnalysis {
    /// States reachable (under some policy) at each time `1..=n`.
    pub reachable: Vec<Vec<usize>>,
    /// Steps whose output law is policy-independent; they contribute exactly
    /// zero directed information.
    pub trivial: Vec<u32>,
    /// The remaining steps.
    pub active: Vec<u32>,
}

/// Forward-reachability analysis: a state is reachable at step `t` if some
/// policy gives it positive probability, which depends only on the channel.
pub fn analyze_steps(channel: &UnifilarChannel, n: u32) -> StepAnalysis {
    let mut reach: Vec<usize> = channel
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(s, _)| s)
        .collect();
    let mut reachable = Vec::new();
    let mut trivial = Vec::new();
    let mut active = Vec::new();
    for t in 1..=n {
        reachable.push(reach.clone());
        let reference: Vec<&Rat> = (0..2).map(|y| channel.prob(reach[0], 0, y)).collect();
        let policy_independent = reach.iter().all(|&s| {
            (0..2).all(|x| (0..2).all(|y| channel.prob(s, x, y) == reference[y]))
        });
        if policy_independent {
            trivial.push(t);
        } else {
            active.push(t);
        }
        let mut next: Vec<usize> = Vec::new();
        for &s in &reach {
            for x in 0..2 {
                for y in 0..2 {
                    if !channel.prob(s, x, y).is_zero() {
                        let s2 = channel.next_state(s, x, y);
                        if !next.contains(&s2) {
                            next.push(s2);
                        }
                    }
                }
            }
        }
        next.sort_unstable();
        reach = next;
    }
    StepAnalysis { reachable, trivial, active }
}

/// One per-step continuity modulus used in a certified radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepModulus {
    pub step: u32,
    /// Joint alphabet sizes of the four entropy terms for the prefix groups
    /// `(X^t, Y^{t-1})`, `(Y_t, Y^{t-1})`, `Y^{t-1}`, `(X^t, Y_t, Y^{t-1})`.
    pub alphabet_sizes: [BigUint; 4],
    /// Upper end of the bound actually charged to the radius.
    pub upper: Rat,
}

/// How a certified value's radius was obtained. Everything needed to re-check
/// the radius arithmetic is recorded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Every step was discharged exactly; the value is exactly zero.
    AllStepsTrivial { trivial: Vec<u32> },
    /// Grid-net evaluation.
    Net {
        resolution: u64,
        dimension: u128,
        eta: Rat,
        lipschitz: BigUint,
        delta: Rat,
        moduli: Vec<StepModulus>,
        modulus_sum: Rat,
        /// Per-policy directed-information enclosure width bound.
        eval_precision: Rat,
        policies_evaluated: u64,
        argmax_index: u64,
        trivial: Vec<u32>,
    },
}

/// A certified estimate: the true value is guaranteed to lie within
/// `radius` of `estimate`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertifiedValue {
    pub estimate: Dyadic,
    pub radius: Dyadic,
    pub horizon: u32,
    /// Whether the value is the normalized `V_n / n` or the raw `V_n`.
    pub normalized: bool,
    pub channel_sha256: String,
    pub provenance: Provenance,
}

impl CertifiedValue {
    /// Re-derives the radius bound from the recorded provenance: the radius
    /// may never exceed `modulus_sum + 2 * eval_precision` (zero for the
    /// all-trivial case). Guards against silently tightened claims.
    pub fn recheck_provenance(&self) -> bool {
        if self.radius.is_negative() {
            return false;
        }
        match &self.provenance {
            Provenance::AllStepsTrivial { .. } => {
                self.estimate.is_zero() && self.radius.is_zero()
            }
            Provenance::Net { moduli, modulus_sum, eval_precision, .. } => {
                let sum = moduli.iter().fold(Rat::zero(), |acc, m| acc + m.upper.clone());
                if &sum != modulus_sum {
                    return false;
                }
                let allowed = sum + &(&Rat::from_int(2) * eval_precision);
                self.radius.to_rat() <= allowed
            }
        }
    }

    pub fn lower(&self) -> Rat {
        self.estimate.to_rat() - self.radius.to_rat()
    }

    pub fn upper(&self) -> Rat {
        self.estimate.to_rat() + self.radius.to_rat()
    }

    pub fn contains(&self, value: &Rat) -> bool {
        &self.lower() <= value && value <= &self.upper()
    }

    /// Self-contained textual record, consumed by certificates and the CLI.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "certified-value v1");
        let _ = writeln!(out, "channel-sha256 {}", self.channel_sha256);
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "normalized {}", self.normalized);
        let _ = writeln!(out, "estimate {}", self.estimate);
        let _ = writeln!(out, "radius {}", self.radius);
        match &self.provenance {
            Provenance::AllStepsTrivial { trivial } => {
                let _ = writeln!(out, "provenance all-steps-trivial");
                let _ = writeln!(out, "trivial-steps {}", join(trivial));
            }
            Provenance::Net {
                resolution,
                dimension,
                eta,
                lipschitz,
                delta,
                moduli,
                modulus_sum,
                eval_precision,
                policies_evaluated,
                argmax_index,
                trivial,
            } => {
                let _ = writeln!(out, "provenance net");
                let _ = writeln!(out, "resolution {resolution}");
                let _ = writeln!(out, "dimension {dimension}");
                let _ = writeln!(out, "eta {eta}");
                let _ = writeln!(out, "lipschitz {lipschitz}");
                let _ = writeln!(out, "delta {delta}");
                for m in moduli {
                    let _ = writeln!(
                        out,
                        "modulus {} {} {} {} {} {}",
                        m.step,
                        m.alphabet_sizes[0],
                        m.alphabet_sizes[1],
                        m.alphabet_sizes[2],
                        m.alphabet_sizes[3],
                        m.upper
                    );
                }
                let _ = writeln!(out, "modulus-sum {modulus_sum}");
                let _ = writeln!(out, "eval-precision {eval_precision}");
                let _ = writeln!(out, "policies {policies_evaluated}");
                let _ = writeln!(out, "argmax {argmax_index}");
                let _ = writeln!(out, "trivial-steps {}", join(trivial));
            }
        }
        let _ = writeln!(out, "end certified-value");
        out
    }
}

fn join(steps: &[u32]) -> String {
    if steps.is_empty() {
        return "none".to_string();
    }
    steps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

fn exact_zero_value(
    horizon: u32,
    normalized: bool,
    channel_sha256: String,
    trivial: Vec<u32>,
) -> CertifiedValue {
    CertifiedValue {
        estimate: Dyadic::zero(),
        radius: Dyadic::zero(),
        horizon,
        normalized,
        channel_sha256,
        provenance: Provenance::AllStepsTrivial { trivial },
    }
}

/// Alphabet sizes of the four entropy terms of `I(X^t; Y_t | Y^{t-1})` with
/// the full input prefix as the first group (binary alphabets).
fn prefix_alphabet_sizes(t: u32) -> [BigUint; 4] {
    [
        BigUint::one() << (2 * t - 1), // X^t x Y^{t-1}
        BigUint::one() << t,           // Y_t x Y^{t-1}
        BigUint::one() << (t - 1),     // Y^{t-1}
        BigUint::one() << (2 * t),     // X^t x Y_t x Y^{t-1}
    ]
}

/// Per-step modulus upper bounds at law distance `delta`, one per active
/// step. `delta` must be at most 1/2.
fn step_moduli(active: &[u32], delta: &Rat, width_exp: u32) -> Result<Vec<StepModulus>, MeasuresError> {
    let budget = Rat::pow2(-(width_exp as i64));
    active
        .iter()
        .map(|&t| {
            let sizes = prefix_alphabet_sizes(t);
            let iv = fannes_sum_interval(&sizes, delta, &budget)?;
            Ok(StepModulus { step: t, alphabet_sizes: sizes, upper: iv.hi().clone() })
        })
        .collect()
}

fn modulus_total(moduli: &[StepModulus]) -> Rat {
    moduli.iter().fold(Rat::zero(), |acc, m| acc + m.upper.clone())
}

/// Best lower/upper enclosure ends over a net, with the deterministic
/// lowest-index tie-break for the argmax.
struct NetEvaluation {
    best_lower: Rat,
    best_upper: Rat,
    argmax_index: u64,
}

fn evaluate_grid(
    channel: &UnifilarChannel,
    n: u32,
    net: &GridNet,
    active: &[u32],
    eval_exp: u32,
    workers: usize,
) -> Result<NetEvaluation, MeasuresError> {
    let count = net.len();
    let workers = workers.clamp(1, count.max(1) as usize);
    let chunk = count.div_ceil(workers as u64);
    let results: Vec<Result<Option<NetEvaluation>, MeasuresError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers as u64 {
            let start = w * chunk;
            let end = ((w + 1) * chunk).min(count);
            handles.push(scope.spawn(move || -> Result<Option<NetEvaluation>, MeasuresError> {
                let mut best: Option<NetEvaluation> = None;
                for index in start..end {
                    let policy = net.policy_at(index);
                    let enc = directed_information_steps(channel, &policy, n, active, eval_exp)?;
                    let lower = enc.lower().to_rat();
                    let upper = enc.upper().to_rat();
                    match &mut best {
                        None => {
                            best = Some(NetEvaluation {
                                best_lower: lower,
                                best_upper: upper,
                                argmax_index: index,
                            })
                        }
                        Some(b) => {
                            if lower > b.best_lower {
                                b.best_lower = lower;
                                b.argmax_index = index;
                            }
                            if upper > b.best_upper {
                                b.best_upper = upper;
                            }
                        }
                    }
                }
                Ok(best)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    // Merge in range order so ties resolve to the lowest index.
    let mut best: Option<NetEvaluation> = None;
    for r in results {
        let Some(local) = r? else { continue };
        match &mut best {
            None => best = Some(local),
            Some(b) => {
                if local.best_lower > b.best_lower {
                    b.best_lower = local.best_lower;
                    b.argmax_index = local.argmax_index;
                }
                if local.best_upper > b.best_upper {
                    b.best_upper = local.best_upper;
                }
            }
        }
    }
    Ok(best.expect("net is never empty"))
}

/// Number of net policies `(M+1)^d`, saturated (with `exact = false`) once it
/// exceeds a million bits.
fn net_count(d: u128, resolution: &BigUint) -> (BigUint, bool) {
    let base = resolution + BigUint::one();
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

/// The resolution target-precision mode needs for accuracy `2^-k`, together
/// with the modulus data at the chosen `eta`. `None` active steps case is
/// handled by callers.
struct NetPlan {
    eta: Rat,
    delta: Rat,
    resolution: BigUint,
    moduli: Vec<StepModulus>,
}

fn plan_net(channel: &UnifilarChannel, n: u32, k: u32, active: &[u32]) -> Result<NetPlan, MeasuresError> {
    let d = dimension(n);
    let lip = Rat::from_biguint(lipschitz_constant(channel.num_states(), n));
    let target = Rat::pow2(-(k as i64) - 2);
    let width_exp = k + 8;
    let mut eta = Rat::new(1, 2);
    loop {
        let delta = &lip * &eta;
        if delta <= Rat::new(1, 2) {
            let moduli = step_moduli(active, &delta, width_exp)?;
            if modulus_total(&moduli) <= target {
                // M = ceil(d / eta)
                let num = BigUint::from(d) * eta.denom().magnitude();
                let resolution = num.div_ceil(eta.numer().magnitude());
                return Ok(NetPlan { eta, delta, resolution, moduli });
            }
        }
        eta = eta * Rat::new(1, 2);
        assert!(
            eta > Rat::pow2(-65536),
            "modulus search failed to converge; moduli must vanish at zero"
        );
    }
}

fn bracket_to_value(
    lo: &Rat,
    hi: &Rat,
    precision: u32,
    horizon: u32,
    normalized: bool,
    channel_sha256: String,
    provenance: Provenance,
) -> CertifiedValue {
    let lo_d = Dyadic::floor_of_rat(lo, precision);
    let hi_d = Dyadic::ceil_of_rat(hi, precision);
    CertifiedValue {
        estimate: lo_d.add(&hi_d).half(),
        radius: hi_d.sub(&lo_d).half(),
        horizon,
        normalized,
        channel_sha256,
        provenance,
    }
}

/// Target-precision certified value: returns `r` with
/// `|r - V_n| <= 2^-k` or fails fast with the required net size.
pub fn approx_value(
    encoding: &ChannelEncoding,
    n: u32,
    k: u32,
    config: &SolverConfig,
) -> Result<CertifiedValue, SolverError> {
    let channel = decode_channel(encoding)?;
    let sha = encoding.sha256_hex();
    let analysis = analyze_steps(&channel, n);
    if analysis.active.is_empty() {
        return Ok(exact_zero_value(n, false, sha, analysis.trivial));
    }

    let plan = plan_net(&channel, n, k, &analysis.active)?;
    let d = dimension(n);
    let (required, exact) = net_count(d, &plan.resolution);
    if required > BigUint::from(config.budget) {
        let feasible_k = largest_feasible_k(&channel, n, k, &analysis.active, config.budget)?;
        return Err(SolverError::BudgetExceeded { required, exact, budget: config.budget, feasible_k });
    }
    let resolution = plan.resolution.to_u64().expect("fits budget, so fits u64");
    let net = GridNet::new(n, resolution, config.budget).expect("count checked above");

    let eval_exp = k + 2;
    let eval = evaluate_grid(&channel, n, &net, &analysis.active, eval_exp, config.workers)?;
    let modulus_sum = modulus_total(&plan.moduli);
    let lo = eval.best_lower.clone();
    let hi = &eval.best_upper + &modulus_sum;
    let provenance = Provenance::Net {
        resolution,
        dimension: d,
        eta: plan.eta,
        lipschitz: lipschitz_constant(channel.num_states(), n),
        delta: plan.delta,
        moduli: plan.moduli,
        modulus_sum,
        eval_precision: Rat::pow2(-(eval_exp as i64)),
        policies_evaluated: net.len(),
        argmax_index: eval.argmax_index,
        trivial: analysis.trivial,
    };
    Ok(bracket_to_value(&lo, &hi, k + 6, n, false, sha, provenance))
}

fn largest_feasible_k(
    channel: &UnifilarChannel,
    n: u32,
    k: u32,
    active: &[u32],
    budget: u64,
) -> Result<Option<u32>, MeasuresError> {
    let d = dimension(n);
    for kk in (0..k).rev() {
        let plan = plan_net(channel, n, kk, active)?;
        let (required, _) = net_count(d, &plan.resolution);
        if required <= BigUint::from(budget) {
            return Ok(Some(kk));
        }
    }
    Ok(None)
}

/// Normalized certified value: `|r - V_n / n| <= 2^-k`, computed by running
/// [`approx_value`] at a shifted precision and dividing the bracket by `n`.
pub fn approx_normalized(
    encoding: &ChannelEncoding,
    n: u32,
    k: u32,
    config: &SolverConfig,
) -> Result<CertifiedValue, SolverError> {
    let shift = 63 - (n as u64).leading_zeros(); // floor(log2 n)
    let inner_k = k.saturating_sub(shift);
    let value = approx_value(encoding, n, inner_k, config)?;
    Ok(normalize_certified(value, n, k + 6))
}

/// Divides a certified bracket by the horizon, rounding outward.
pub fn normalize_certified(value: CertifiedValue, n: u32, precision: u32) -> CertifiedValue {
    assert!(!value.normalized, "value is already normalized");
    if matches!(value.provenance, Provenance::AllStepsTrivial { .. }) {
        return CertifiedValue { normalized: true, ..value };
    }
    let n_rat = Rat::from_int(n as i64);
    let lo = &value.lower() / &n_rat;
    let hi = &value.upper() / &n_rat;
    bracket_to_value(
        &lo,
        &hi,
        precision,
        value.horizon,
        true,
        value.channel_sha256,
        value.provenance,
    )
}

/// Report-bound certified value: evaluates the net at a caller-chosen
/// resolution and charges the honest radius for it. Per-step moduli are
/// capped at one bit (binary outputs bound every step's conditional mutual
/// information by 1), which also covers law distances beyond the Fannes
/// hypothesis `delta <= 1/2`.
pub fn evaluate_net(
    encoding: &ChannelEncoding,
    n: u32,
    resolution: u64,
    eval_exp: u32,
    config: &SolverConfig,
) -> Result<CertifiedValue, SolverError> {
    let channel = decode_channel(encoding)?;
    let sha = encoding.sha256_hex();
    let analysis = analyze_steps(&channel, n);
    if analysis.active.is_empty() {
        return Ok(exact_zero_value(n, false, sha, analysis.trivial));
    }
    let net = GridNet::new(n, resolution, config.budget).map_err(|e| SolverError::BudgetExceeded {
        required: e.required,
        exact: e.exact,
        budget: e.budget,
        feasible_k: None,
    })?;
    let d = net.dimension();
    let eta = net.eta();
    let lip = lipschitz_constant(channel.num_states(), n);
    let delta = Rat::from_biguint(lip.clone()) * eta.clone();
    let one = Rat::one();
    let moduli: Vec<StepModulus> = if delta <= Rat::new(1, 2) {
        step_moduli(&analysis.active, &delta, eval_exp + 6)?
            .into_iter()
            .map(|m| StepModulus { upper: m.upper.min(one.clone()), ..m })
            .collect()
    } else {
        analysis
            .active
            .iter()
            .map(|&t| StepModulus {
                step: t,
                alphabet_sizes: prefix_alphabet_sizes(t),
                upper: one.clone(),
            })
            .collect()
    };
    let eval = evaluate_grid(&channel, n, &net, &analysis.active, eval_exp, config.workers)?;
    let modulus_sum = modulus_total(&moduli);
    let lo = eval.best_lower.clone();
    let hi = &eval.best_upper + &modulus_sum;
    let provenance = Provenance::Net {
        resolution,
        dimension: d,
        eta,
        lipschitz: lip,
        delta,
        moduli,
        modulus_sum,
        eval_precision: Rat::pow2(-(eval_exp as i64)),
        policies_evaluated: net.len(),
        argmax_index: eval.argmax_index,
        trivial: analysis.trivial,
    };
    Ok(bracket_to_value(&lo, &hi, eval_exp + 4, n, false, sha, provenance))
}

// ---------------------------------------------------------------------------
// Heuristic optimizer
// ---------------------------------------------------------------------------

/// Settings for the multi-start coordinate-ascent optimizer.
#[derive(Clone, Debug)]
pub struct HeuristicParams {
    pub restarts: u32,
    pub sweeps: u32,
    pub seed: u64,
    /// Precision exponent of the final certified evaluation of the witness.
    pub certify_exp: u32,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams { restarts: 8, sweeps: 200, seed: 0, certify_exp: 20 }
    }
}

/// A validated lower bound on the finite-horizon value with its witness.
#[derive(Clone, Debug)]
pub struct HeuristicResult {
    /// Certified lower end of the witness's directed-information enclosure.
    pub value: Dyadic,
    pub policy: CausalPolicy,
    pub enclosure: CertifiedReal,
    /// Objective evaluations performed by the search.
    pub iterations: u64,
    pub restarts: u32,
    pub seed: u64,
    pub eval_precision: Rat,
}

struct F64Channel {
    kernel: Vec<f64>,
    next: Vec<usize>,
    initial: Vec<f64>,
}

impl F64Channel {
    fn new(channel: &UnifilarChannel) -> Self {
        let k = channel.num_states();
        let mut kernel = Vec::with_capacity(k * 4);
        let mut next = Vec::with_capacity(k * 4);
        for s in 0..k {
            for x in 0..2 {
                for y in 0..2 {
                    kernel.push(channel.prob(s, x, y).to_f64());
                    next.push(channel.next_state(s, x, y));
                }
            }
        }
        F64Channel {
            kernel,
            next,
            initial: channel.initial().iter().map(Rat::to_f64).collect(),
        }
    }

    fn prob(&self, s: usize, x: usize, y: usize) -> f64 {
        self.kernel[(s * 2 + x) * 2 + y]
    }

    fn next(&self, s: usize, x: usize, y: usize) -> usize {
        self.next[(s * 2 + x) * 2 + y]
    }
}

/// Flat indices of histories that can occur with positive probability under
/// some policy; only these coordinates can influence the objective.
fn reachable_coords(channel: &UnifilarChannel, n: u32) -> Vec<usize> {
    let mut coords = Vec::new();
    let mut frontier: Vec<(usize, u64, u64)> = channel
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(s, _)| (s, 0u64, 0u64))
        .collect();
    frontier.sort_unstable();
    frontier.dedup();
    for t in 1..=n {
        for &(_, hx, hy) in &frontier {
            let idx = crate::policy::flat_index(t, hx, hy) as usize;
            if !coords.contains(&idx) {
                coords.push(idx);
            }
        }
        let mut next = Vec::new();
        for &(s, hx, hy) in &frontier {
            for x in 0..2u64 {
                for y in 0..2u64 {
                    if !channel.prob(s, x as usize, y as usize).is_zero() {
                        let s2 = channel.next_state(s, x as usize, y as usize);
                        next.push((s2, (hx << 1) | x, (hy << 1) | y));
                    }
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }
    coords.sort_unstable();
    coords
}

fn entropy_f64(masses: &std::collections::BTreeMap<u128, f64>) -> f64 {
    let mut h = 0.0;
    for &p in masses.values() {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

fn di_f64(ch: &F64Channel, n: u32, coords: &[f64]) -> f64 {
    // Unroll support paths.
    let mut paths: Vec<(u64, u64, f64)> = Vec::new();
    let mut stack: Vec<(u32, usize, u64, u64, f64)> = ch
        .initial
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| (1u32, s, 0u64, 0u64, *p))
        .collect();
    while let Some((t, s, hx, hy, mass)) = stack.pop() {
        if t > n {
            paths.push((hx, hy, mass));
            continue;
        }
        let idx = crate::policy::flat_index(t, hx, hy) as usize;
        let theta = coords[idx];
        for x in 0..2usize {
            let pp = if x == 1 { theta } else { 1.0 - theta };
            if pp <= 0.0 {
                continue;
            }
            for y in 0..2usize {
                let pc = ch.prob(s, x, y);
                if pc <= 0.0 {
                    continue;
                }
                stack.push((
                    t + 1,
                    ch.next(s, x, y),
                    (hx << 1) | x as u64,
                    (hy << 1) | y as u64,
                    mass * pp * pc,
                ));
            }
        }
    }
    // Per-step conditional mutual information via the four-entropy identity.
    let mut total = 0.0;
    // BTreeMaps keep the summation order deterministic; f64 addition is not
    // associative, and the optimizer's branches must not depend on map order.
    let mut uw = std::collections::BTreeMap::new();
    let mut vw = std::collections::BTreeMap::new();
    let mut w = std::collections::BTreeMap::new();
    let mut uvw = std::collections::BTreeMap::new();
    for t in 1..=n {
        uw.clear();
        vw.clear();
        w.clear();
        uvw.clear();
        for &(x, y, mass) in &paths {
            let u_key = (x >> (n - t)) as u128; // X^t
            let w_key = if t == 1 { 0u128 } else { (y >> (n - t + 1)) as u128 }; // Y^{t-1}
            let v_key = ((y >> (n - t)) & 1) as u128; // Y_t
            *uw.entry((u_key << 64) | w_key).or_insert(0.0) += mass;
            *vw.entry((v_key << 64) | w_key).or_insert(0.0) += mass;
            *w.entry(w_key).or_insert(0.0) += mass;
            *uvw.entry((((u_key << 1) | v_key) << 64) | w_key).or_insert(0.0) += mass;
        }
        total += entropy_f64(&uw) + entropy_f64(&vw) - entropy_f64(&w) - entropy_f64(&uvw);
    }
    total
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Multi-start coordinate ascent with a golden-section line search per
/// coordinate. Uncertified by itself; the returned witness is re-evaluated
/// with a certified enclosure and the reported value is that enclosure's
/// lower end, so the result is a sound lower bound on `V_n`.
pub fn heuristic_value(
    channel: &UnifilarChannel,
    n: u32,
    params: &HeuristicParams,
) -> Result<HeuristicResult, MeasuresError> {
    let ch = F64Channel::new(channel);
    let d = dimension(n) as usize;
    let coords_to_optimize = reachable_coords(channel, n);
    let mut evals: u64 = 0;
    let mut best_coords = vec![0.5f64; d];
    let mut best_value = f64::NEG_INFINITY;

    for restart in 0..params.restarts.max(1) {
        let mut coords = if restart == 0 {
            vec![0.5f64; d]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(restart as u64));
            (0..d).map(|_| rng.gen_range(0..=1024) as f64 / 1024.0).collect()
        };
        let mut current = di_f64(&ch, n, &coords);
        evals += 1;
        for _ in 0..params.sweeps {
            let before = current;
            for &i in &coords_to_optimize {
                let mut eval_at = |theta: f64, coords: &mut Vec<f64>| {
                    coords[i] = theta;
                    di_f64(&ch, n, coords)
                };
                // Golden section on [0, 1], then boundary and midpoint probes.
                let (mut a, mut b) = (0.0f64, 1.0f64);
                let mut c = b - GOLDEN * (b - a);
                let mut dd = a + GOLDEN * (b - a);
                let mut fc = eval_at(c, &mut coords);
                let mut fd = eval_at(dd, &mut coords);
                evals += 2;
                while b - a > 1e-9 {
                    if fc >= fd {
                        b = dd;
                        dd = c;
                        fd = fc;
                        c = b - GOLDEN * (b - a);
                        fc = eval_at(c, &mut coords);
                    } else {
                        a = c;
                        c = dd;
                        fc = fd;
                        dd = a + GOLDEN * (b - a);
                        fd = eval_at(dd, &mut coords);
                    }
                    evals += 1;
                }
                let mut candidates = vec![(a + b) / 2.0, 0.0, 0.5, 1.0];
                candidates.retain(|t| (0.0..=1.0).contains(t));
                let mut best_theta = candidates[0];
                let mut best_f = f64::NEG_INFINITY;
                for t in candidates {
                    let f = eval_at(t, &mut coords);
                    evals += 1;
                    if f > best_f {
                        best_f = f;
                        best_theta = t;
                    }
                }
                coords[i] = best_theta;
                current = best_f;
            }
            if current - before < 1e-12 {
                break;
            }
        }
        if current > best_value {
            best_value = current;
            best_coords = coords;
        }
    }

    // Snap the witness to exact dyadic coordinates and certify it.
    let scale = (1u64 << 30) as f64;
    let rat_coords: Vec<Rat> = best_coords
        .iter()
        .map(|&theta| {
            let q = (theta.clamp(0.0, 1.0) * scale).round() as i64;
            Rat::new(q, 1 << 30)
        })
        .collect();
    let policy = CausalPolicy::from_coords(n, rat_coords).expect("witness coordinates are valid");
    let enclosure = directed_information(channel, &policy, n, params.certify_exp)?;
    Ok(HeuristicResult {
        value: enclosure.lower().clone(),
        policy,
        enclosure,
        iterations: evals,
        restarts: params.restarts,
        seed: params.seed,
        eval_precision: Rat::pow2(-(params.certify_exp as i64)),
    })
}

// ---------------------------------------------------------------------------
// Consistency gate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SandwichError {
    #[error("horizon mismatch: heuristic ran at {heuristic}, certified value at {certified}")]
    HorizonMismatch { heuristic: u32, certified: u32 },
    #[error("heuristic lower bound {heuristic} exceeds certified upper bound {upper}")]
    HeuristicAboveCertified { heuristic: Rat, upper: Rat },
    #[error("oracle value {oracle} lies outside the certified bracket [{lower}, {upper}]")]
    OracleOutsideCertified { oracle: Rat, lower: Rat, upper: Rat },
    #[error("heuristic lower bound {heuristic} exceeds the oracle value {oracle}")]
    HeuristicAboveOracle { heuristic: Rat, oracle: Rat },
}

/// Cross-checks a heuristic lower bound against a certified bracket and,
/// when available, an exact oracle for the unnormalized value. The heuristic
/// is granted `tolerance` of slack (its declared evaluation precision).
pub fn sandwich_check(
    heuristic: &HeuristicResult,
    certified: &CertifiedValue,
    oracle: Option<&Rat>,
    tolerance: &Rat,
) -> Result<(), SandwichError> {
    if heuristic.policy.horizon() != certified.horizon {
        return Err(SandwichError::HorizonMismatch {
            heuristic: heuristic.policy.horizon(),
            certified: certified.horizon,
        });
    }
    let n = Rat::from_int(certified.horizon as i64);
    let (cert_lower, cert_upper) = if certified.normalized {
        (&certified.lower() * &n, &certified.upper() * &n)
    } else {
        (certified.lower(), certified.upper())
    };
    let h = heuristic.value.to_rat() - tolerance.clone();
    if h > cert_upper {
        return Err(SandwichError::HeuristicAboveCertified {
            heuristic: heuristic.value.to_rat(),
            upper: cert_upper,
        });
    }
    if let Some(oracle) = oracle {
        if oracle < &cert_lower || oracle > &cert_upper {
            return Err(SandwichError::OracleOutsideCertified {
                oracle: oracle.clone(),
                lower: cert_lower,
                upper: cert_upper,
            });
        }
        if &h > oracle {
            return Err(SandwichError::HeuristicAboveOracle {
                heuristic: heuristic.value.to_rat(),
                oracle: oracle.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{DelayedActivationSpec, FamilyVariant};
    use crate::encoding::encode_channel;

    fn family_enc(delay: u32, variant: FamilyVariant) -> ChannelEncoding {
        encode_channel(&DelayedActivationSpec::new(delay, variant).unwrap().channel())
    }

    #[test]
    fn step_analysis_family() {
        let good = DelayedActivationSpec::new(1, FamilyVariant::Good).unwrap().channel();
        let a = analyze_steps(&good, 4);
        assert_eq!(a.trivial, vec![1, 2]);
        assert_eq!(a.active, vec![3, 4]);
        assert_eq!(a.reachable[0], vec![0]);
        assert_eq!(a.reachable[2], vec![2]);
        let bad = DelayedActivationSpec::new(2, FamilyVariant::Bad).unwrap().channel();
        let a = analyze_steps(&bad, 6);
        assert!(a.active.is_empty());
        assert_eq!(a.trivial.len(), 6);
    }

    #[test]
    fn bad_family_certified_exactly_zero() {
        let cfg = SolverConfig::default();
        for n in [1, 2, 3] {
            let v = approx_normalized(&family_enc(1, FamilyVariant::Bad), n, 10, &cfg).unwrap();
            assert!(v.contains(&Rat::zero()));
            assert!(v.radius.to_rat() <= Rat::pow2(-10));
            assert!(v.recheck_provenance());
        }
    }

    #[test]
    fn good_family_prefix_certified_zero() {
        let cfg = SolverConfig::default();
        for (n, k) in [(1u32, 3u32), (2, 3)] {
            let v = approx_normalized(&family_enc(1, FamilyVariant::Good), n, k, &cfg).unwrap();
            assert!(v.contains(&Rat::zero()));
            assert!(v.radius.to_rat() <= Rat::pow2(-(k as i64)));
        }
        let v = approx_value(&family_enc(1, FamilyVariant::Good), 2, 3, &cfg).unwrap();
        assert!(v.contains(&Rat::zero()));
        assert!(v.radius.to_rat() <= Rat::pow2(-3));
    }

    #[test]
    fn identity_channel_certified_one() {
        let cfg = SolverConfig::default();
        let enc = encode_channel(&UnifilarChannel::noiseless_identity());
        let v = approx_value(&enc, 1, 2, &cfg).unwrap();
        assert!(v.contains(&Rat::one()));
        assert!(v.radius.to_rat() <= Rat::pow2(-2));
        assert!(v.recheck_provenance());
        match &v.provenance {
            Provenance::Net { resolution, policies_evaluated, .. } => {
                assert_eq!(*policies_evaluated, resolution + 1);
            }
            other => panic!("expected net provenance, got {other:?}"),
        }
        let a = approx_normalized(&enc, 1, 2, &cfg).unwrap();
        assert!(a.contains(&Rat::one()));
    }

    #[test]
    fn budget_exceeded_reports_required_and_feasible() {
        let cfg = SolverConfig { workers: 1, budget: 1000 };
        let err = approx_value(&family_enc(1, FamilyVariant::Good), 3, 3, &cfg).unwrap_err();
        match err {
            SolverError::BudgetExceeded { required, exact, feasible_k, .. } => {
                assert!(exact);
                assert!(required > BigUint::from(1000u32));
                assert_eq!(feasible_k, None);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn evaluate_net_identity_small_grid() {
        let cfg = SolverConfig::default();
        let enc = encode_channel(&UnifilarChannel::noiseless_identity());
        let v = evaluate_net(&enc, 1, 2, 8, &cfg).unwrap();
        // Max over {0, 1/2, 1} of H(p) is 1, reached at the middle grid point.
        assert!(v.contains(&Rat::one()));
        assert!(v.recheck_provenance());
        match &v.provenance {
            Provenance::Net { argmax_index, .. } => assert_eq!(*argmax_index, 1),
            other => panic!("expected net provenance, got {other:?}"),
        }
    }

    #[test]
    fn evaluate_net_trivial_cases() {
        let cfg = SolverConfig::default();
        let v = evaluate_net(&family_enc(1, FamilyVariant::Bad), 1, 1, 8, &cfg).unwrap();
        assert!(v.estimate.is_zero() && v.radius.is_zero());
        let v = evaluate_net(&family_enc(2, FamilyVariant::Good), 2, 1, 8, &cfg).unwrap();
        assert!(v.estimate.is_zero() && v.radius.is_zero());
    }

    #[test]
    fn net_monotone_refinement() {
        let cfg = SolverConfig::default();
        let enc = encode_channel(&UnifilarChannel::noiseless_identity());
        let coarse = evaluate_net(&enc, 1, 4, 10, &cfg).unwrap();
        let fine = evaluate_net(&enc, 1, 8, 10, &cfg).unwrap();
        let eps = Rat::pow2(-10);
        assert!(fine.estimate.to_rat() >= coarse.estimate.to_rat() - eps.clone() - eps);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let enc = encode_channel(&UnifilarChannel::binary_symmetric(&Rat::new(1, 4)));
        let mut outputs = Vec::new();
        for workers in [1usize, 4, 8] {
            let cfg = SolverConfig { workers, budget: 1_000_000 };
            let v = evaluate_net(&enc, 1, 64, 10, &cfg).unwrap();
            outputs.push(v.to_record());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }

    #[test]
    fn heuristic_good_family_reaches_known_value() {
        let channel = DelayedActivationSpec::new(1, FamilyVariant::Good).unwrap().channel();
        let params = HeuristicParams { restarts: 2, sweeps: 20, ..Default::default() };
        let r = heuristic_value(&channel, 4, &params).unwrap();
        let err = (r.value.to_rat() - Rat::from_int(2)).abs();
        assert!(err < Rat::new(1, 1000), "value {} too far from 2", r.value);
    }

    #[test]
    fn heuristic_bad_family_stays_at_zero() {
        let channel = DelayedActivationSpec::new(1, FamilyVariant::Bad).unwrap().channel();
        let params = HeuristicParams { restarts: 2, sweeps: 5, ..Default::default() };
        let r = heuristic_value(&channel, 3, &params).unwrap();
        assert!(r.value.to_rat().abs() < Rat::new(1, 1_000_000));
        assert!(r.enclosure.contains_rat(&Rat::zero()));
    }

    #[test]
    fn heuristic_deterministic_given_seed() {
        let channel = UnifilarChannel::binary_symmetric(&Rat::new(1, 4));
        let params = HeuristicParams { restarts: 3, sweeps: 10, seed: 7, ..Default::default() };
        let a = heuristic_value(&channel, 2, &params).unwrap();
        let b = heuristic_value(&channel, 2, &params).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn sandwich_family_and_identity() {
        let cfg = SolverConfig::default();
        let spec = DelayedActivationSpec::new(1, FamilyVariant::Good).unwrap();
        let channel = spec.channel();
        let enc = encode_channel(&channel);
        let params = HeuristicParams { restarts: 2, sweeps: 10, ..Default::default() };
        for n in [1u32, 2] {
            let h = heuristic_value(&channel, n, &params).unwrap();
            let c = approx_normalized(&enc, n, 3, &cfg).unwrap();
            let oracle = spec.unnormalized_value(n);
            sandwich_check(&h, &c, Some(&oracle), &h.eval_precision).unwrap();
        }
        // Same inputs twice stay consistent.
        let h = heuristic_value(&channel, 2, &params).unwrap();
        let c = approx_normalized(&enc, 2, 3, &cfg).unwrap();
        sandwich_check(&h, &c, Some(&spec.unnormalized_value(2)), &h.eval_precision).unwrap();
        sandwich_check(&h, &c, Some(&spec.unnormalized_value(2)), &h.eval_precision).unwrap();
    }

    #[test]
    fn sandwich_detects_inconsistency() {
        let channel = UnifilarChannel::noiseless_identity();
        let enc = encode_channel(&channel);
        let cfg = SolverConfig::default();
        let params = HeuristicParams { restarts: 1, sweeps: 5, ..Default::default() };
        let h = heuristic_value(&channel, 1, &params).unwrap();
        let c = approx_value(&enc, 1, 2, &cfg).unwrap();
        let bogus_oracle = Rat::from_int(5);
        assert!(matches!(
            sandwich_check(&h, &c, Some(&bogus_oracle), &h.eval_precision),
            Err(SandwichError::OracleOutsideCertified { .. })
        ));
    }

    #[test]
    fn certified_upper_respects_step_cap() {
        // Every returned bracket stays below the binary-output cap of one bit
        // per step.
        let cfg = SolverConfig::default();
        let enc = encode_channel(&UnifilarChannel::noiseless_identity());
        let v = approx_value(&enc, 1, 2, &cfg).unwrap();
        assert!(v.lower() <= Rat::one());
    }

    #[test]
    fn record_is_line_oriented() {
        let cfg = SolverConfig::default();
        let enc = encode_channel(&UnifilarChannel::noiseless_identity());
        let v = approx_value(&enc, 1, 2, &cfg).unwrap();
        let rec = v.to_record();
        assert!(rec.starts_with("certified-value v1\n"));
        assert!(rec.ends_with("end certified-value\n"));
        assert!(rec.lines().any(|l| l.starts_with("estimate ")));
        assert!(rec.lines().any(|l| l.starts_with("modulus-sum ")));
    }
}
