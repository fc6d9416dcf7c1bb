//! Key-rate analysis: closed forms for the observable statistics, the
//! trace-norm bound on the server's information, its exact value for a given
//! attack, the worst-case rate formulas and threshold search.
//!
//! All entropies are in bits. Information bounds are capped at one bit before
//! they enter a rate; [`RateFlag::BoundCapped`] records when that happened.

use serde::Serialize;

use crate::channels::{semi_honest_f_norms, AttackOperator, InitialState};
use crate::error::{check_probability, Error, Result};
use crate::quantum::{binary_entropy, trace_norm, von_neumann_entropy, CMatrix, DensityMatrix, C64};

/// Allowed trace deviation of the conditional server states.
pub const CONDITIONAL_TRACE_TOL: f64 = 1e-6;
/// Allowed mismatch between a caller's `Q` and the one implied by a start state.
pub const Q_CONSISTENCY_TOL: f64 = 1e-8;

/// Observable parameters feeding a rate formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ObservedParams {
    pub q: f64,
    pub q_z: f64,
    pub p_a: f64,
    pub p_w: f64,
    pub p_minus1_neq: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// Depolarizing channels with the pairwise information bound.
    SemiHonest,
    /// Worst case using only `√⟨f0|f0⟩` and the loose bound.
    WorstLow,
    /// Worst case assuming `⟨f2|f2⟩, ⟨f3|f3⟩ ≤ Q`.
    WorstHigh,
    /// Caller-supplied mutual informations.
    Direct,
}

impl Formula {
    pub fn tag(self) -> &'static str {
        match self {
            Formula::SemiHonest => "semi_honest",
            Formula::WorstLow => "worst_low",
            Formula::WorstHigh => "worst_high",
            Formula::Direct => "direct",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFlag {
    /// The information bound exceeded one bit and was capped.
    BoundCapped,
    /// `Q_Z` came out above one and was clamped.
    QzClamped,
    /// `Q > √(p_a/2)`, where `Q_Z = Q²/p_a` no longer bounds `h(Q_Z)`.
    QzSubstitutionInvalid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub i_ab: f64,
    pub i_ac_bound: f64,
    /// Always `i_ab - i_ac_bound`; may be negative.
    pub rate: f64,
    pub formula: Formula,
    pub inputs: ObservedParams,
    pub flags: Vec<RateFlag>,
}

impl KeyRateReport {
    fn new(i_ab: f64, i_ac_bound: f64, formula: Formula, inputs: ObservedParams, flags: Vec<RateFlag>) -> Self {
        KeyRateReport {
            i_ab,
            i_ac_bound,
            rate: devetak_winter(i_ab, i_ac_bound),
            formula,
            inputs,
            flags,
        }
    }
}

/// A value that may have been clamped into its valid range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

/// Probability of a `-1` announcement given both users measured, for a
/// symmetric attack with minus-branch norms `f`.
pub fn p_a_formula(q: f64, f: [f64; 4]) -> f64 {
    0.5 * (1.0 - q) * (f[0] + f[1]) + 0.5 * q * (f[2] + f[3])
}

/// Key mismatch rate among rounds announced `-1`.
pub fn q_z_formula(q: f64, f2: f64, f3: f64, p_a: f64) -> Result<Clamped> {
    if p_a <= 0.0 {
        return Err(Error::Degenerate("p_a must be positive".into()));
    }
    let v = q * (f2 + f3) / (2.0 * p_a);
    Ok(Clamped {
        value: v.min(1.0),
        clamped: v > 1.0,
    })
}

/// Upper bounds on `I(A:C)` from the pairwise minus-branch overlaps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InformationBound {
    /// `(1-Q)/p_a √(f0 f1) + Q/p_a √(f2 f3)`
    pub pairwise: f64,
    /// `(1-Q)/p_a √f0 + Q/p_a`, using `⟨f_i|f_i⟩ ≤ 1`.
    pub loose: f64,
    /// `min(pairwise, 1)`
    pub capped: f64,
    pub was_capped: bool,
}

pub fn information_bound(q: f64, f: [f64; 4], p_a: f64) -> Result<InformationBound> {
    if p_a <= 0.0 {
        return Err(Error::Degenerate("p_a must be positive".into()));
    }
    let pairwise = (1.0 - q) / p_a * (f[0] * f[1]).sqrt() + q / p_a * (f[2] * f[3]).sqrt();
    let loose = (1.0 - q) / p_a * f[0].sqrt() + q / p_a;
    Ok(InformationBound {
        pairwise,
        loose,
        capped: pairwise.min(1.0),
        was_capped: pairwise > 1.0,
    })
}

/// The server's states conditioned on A's key bit, after a `-1` announcement
/// on a both-measure round.
#[derive(Clone, Debug)]
pub struct ConditionalStates {
    pub rho0: DensityMatrix,
    pub rho1: DensityMatrix,
    pub p_a: f64,
}

pub fn conditional_states(attack: &AttackOperator, q: f64) -> Result<ConditionalStates> {
    check_probability("Q", q)?;
    let f = attack.f();
    let p_a = p_a_formula(q, attack.f_norms());
    if p_a <= 0.0 {
        return Err(Error::Degenerate("attack never announces -1 on both-measure rounds".into()));
    }
    let p = 2.0 * p_a;
    let w = |x: f64| C64::new(x / p, 0.0);
    let build = |sign: f64| -> CMatrix {
        let s = C64::new(sign, 0.0);
        let a = f[0].plus(&f[1].scaled(s));
        let b = f[2].plus(&f[3].scaled(s));
        a.projector() * w(1.0 - q) + b.projector() * w(q)
    };
    let mut out = [build(1.0), build(-1.0)];
    for (x, m) in out.iter_mut().enumerate() {
        let tr = m.trace().re;
        if (tr - 1.0).abs() > CONDITIONAL_TRACE_TOL {
            return Err(Error::InvalidAttack(format!(
                "conditional state for key bit {x} has trace {tr}; the attack is not symmetric"
            )));
        }
        *m /= C64::new(tr, 0.0);
    }
    let [m0, m1] = out;
    Ok(ConditionalStates {
        rho0: DensityMatrix::new_unchecked(m0),
        rho1: DensityMatrix::new_unchecked(m1),
        p_a,
    })
}

/// Exact `I(A:C) = S(ρ_C) - ½S(ρ_C⁰) - ½S(ρ_C¹)` for a symmetric attack.
pub fn exact_iac(attack: &AttackOperator, q: f64) -> Result<f64> {
    let cs = conditional_states(attack, q)?;
    holevo_gap(&cs)
}

fn holevo_gap(cs: &ConditionalStates) -> Result<f64> {
    let avg = cs.rho0.mix(0.5, &cs.rho1);
    Ok(von_neumann_entropy(&avg)? - 0.5 * von_neumann_entropy(&cs.rho0)? - 0.5 * von_neumann_entropy(&cs.rho1)?)
}

/// Every quantity in the chain from the exact information to the loose bound:
/// `gap ≤ ½‖ρ⁰-ρ¹‖ ≤ triangle ≤ pairwise ≤ loose`, together with the
/// per-term dyad bounds `‖σ_k‖ ≤ 2√(⟨f_a|f_a⟩⟨f_b|f_b⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundChain {
    pub q: f64,
    pub p_a: f64,
    pub holevo_gap: f64,
    pub half_trace_norm: f64,
    pub triangle: f64,
    pub pairwise: f64,
    pub loose: f64,
    /// `(‖σ0‖, 2√(f0 f1))` and `(‖σ1‖, 2√(f2 f3))`.
    pub dyads: [(f64, f64); 2],
}

impl BoundChain {
    /// Named links `(lhs, rhs)` that must satisfy `lhs ≤ rhs`.
    pub fn links(&self) -> [(&'static str, f64, f64); 6] {
        [
            ("holevo_gap<=half_trace_norm", self.holevo_gap, self.half_trace_norm),
            ("half_trace_norm<=triangle", self.half_trace_norm, self.triangle),
            ("triangle<=pairwise", self.triangle, self.pairwise),
            ("pairwise<=loose", self.pairwise, self.loose),
            ("dyad_01", self.dyads[0].0, self.dyads[0].1),
            ("dyad_23", self.dyads[1].0, self.dyads[1].1),
        ]
    }

    /// Smallest `rhs - lhs` over all links.
    pub fn min_slack(&self) -> f64 {
        self.links().iter().map(|(_, l, r)| r - l).fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        self.links()
            .iter()
            .filter(|(_, l, r)| *l > r + tol)
            .map(|(n, _, _)| *n)
            .collect()
    }
}

pub fn bound_chain(attack: &AttackOperator, q: f64) -> Result<BoundChain> {
    let cs = conditional_states(attack, q)?;
    let gap = holevo_gap(&cs)?;
    let half = 0.5 * trace_norm(&(cs.rho0.matrix() - cs.rho1.matrix()))?;
    let f = attack.f();
    let n = attack.f_norms();
    let dyad = |a: usize, b: usize| f[a].outer(&f[b]) + f[b].outer(&f[a]);
    let s0 = trace_norm(&dyad(0, 1))?;
    let s1 = trace_norm(&dyad(2, 3))?;
    let p_a = cs.p_a;
    let bound = information_bound(q, n, p_a)?;
    Ok(BoundChain {
        q,
        p_a,
        holevo_gap: gap,
        half_trace_norm: half,
        triangle: (1.0 - q) / (2.0 * p_a) * s0 + q / (2.0 * p_a) * s1,
        pairwise: bound.pairwise,
        loose: bound.loose,
        dyads: [(s0, 2.0 * (n[0] * n[1]).sqrt()), (s1, 2.0 * (n[2] * n[3]).sqrt())],
    })
}

/// Returns the deviation when the start state's disagreement probability
/// differs from `q` by more than [`Q_CONSISTENCY_TOL`].
pub fn q_mismatch(state: &InitialState, q: f64) -> Option<f64> {
    let dev = (state.mismatch_probability() - q).abs();
    (dev > Q_CONSISTENCY_TOL).then_some(dev)
}

/// Reverse-channel depolarization inferred from the forward strength and the
/// both-reflect `-1` rate.
pub fn estimate_q_from_pw(p: f64, p_w: f64) -> Result<f64> {
    if p >= 1.0 {
        return Err(Error::InvalidArgument("forward depolarization must be below 1".into()));
    }
    let q = (4.0 * p_w - p) / (1.0 - p);
    if !(-1e-12..=1.0 + 1e-12).contains(&q) {
        return Err(Error::Inconsistent(format!(
            "p = {p}, p_w = {p_w} imply reverse depolarization {q} outside [0, 1]"
        )));
    }
    Ok(q.clamp(0.0, 1.0))
}

/// Upper bound on `√⟨f0|f0⟩` from `Q`, `p_w` and (optionally) `⟨f2|f2⟩`,
/// which defaults to its maximum of 1.
pub fn f0_upper_bound(q: f64, p_w: f64, f2: Option<f64>) -> Result<Clamped> {
    if q >= 1.0 {
        return Err(Error::InvalidArgument("Q must be below 1".into()));
    }
    let f2 = f2.unwrap_or(1.0);
    let v = (1.0 - q).sqrt() * ((q * f2).sqrt() + p_w.sqrt()) / (1.0 - q);
    Ok(Clamped {
        value: v.min(1.0),
        clamped: v > 1.0,
    })
}

fn cap(bound: f64, flags: &mut Vec<RateFlag>) -> f64 {
    if bound > 1.0 {
        flags.push(RateFlag::BoundCapped);
        1.0
    } else {
        bound
    }
}

fn check_inputs(q: f64, p_w: f64, p_a: f64) -> Result<()> {
    check_probability("Q", q)?;
    check_probability("p_w", p_w)?;
    check_probability("p_a", p_a)?;
    if p_a <= 0.0 {
        return Err(Error::Degenerate("p_a must be positive".into()));
    }
    Ok(())
}

/// Worst-case rate from `Q`, `Q_Z`, `p_w` and `p_a` alone:
/// `1 - h(Q_Z) - (√(1-Q)(√Q + √p_w) + Q)/p_a`.
pub fn keyrate_worst_low(q: f64, q_z: f64, p_w: f64, p_a: f64) -> Result<KeyRateReport> {
    check_inputs(q, p_w, p_a)?;
    check_probability("Q_Z", q_z)?;
    let mut flags = Vec::new();
    let i_ab = 1.0 - binary_entropy(q_z)?;
    let bound = cap(((1.0 - q).sqrt() * (q.sqrt() + p_w.sqrt()) + q) / p_a, &mut flags);
    let inputs = ObservedParams {
        q,
        q_z,
        p_a,
        p_w,
        p_minus1_neq: None,
    };
    Ok(KeyRateReport::new(i_ab, bound, Formula::WorstLow, inputs, flags))
}

/// Worst-case rate assuming `⟨f2|f2⟩, ⟨f3|f3⟩ ≤ Q`, with `Q_Z = Q²/p_a`:
/// `1 - h(Q²/p_a) - (√(1-Q)(Q + √p_w) + Q²)/p_a`.
pub fn keyrate_worst_high(q: f64, p_w: f64, p_a: f64) -> Result<KeyRateReport> {
    check_inputs(q, p_w, p_a)?;
    let mut flags = Vec::new();
    if q > (p_a / 2.0).sqrt() {
        flags.push(RateFlag::QzSubstitutionInvalid);
    }
    let mut q_z = q * q / p_a;
    if q_z > 1.0 {
        flags.push(RateFlag::QzClamped);
        q_z = 1.0;
    }
    let i_ab = 1.0 - binary_entropy(q_z)?;
    let bound = cap(((1.0 - q).sqrt() * (q + p_w.sqrt()) + q * q) / p_a, &mut flags);
    let inputs = ObservedParams {
        q,
        q_z,
        p_a,
        p_w,
        p_minus1_neq: None,
    };
    Ok(KeyRateReport::new(i_ab, bound, Formula::WorstHigh, inputs, flags))
}

/// Rate against a semi-honest server behind depolarizing channels of forward
/// strength `p` and reverse strength `q`.
pub fn keyrate_semi_honest(p: f64, q: f64) -> Result<KeyRateReport> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    if p >= 1.0 || q >= 1.0 {
        return Err(Error::InvalidArgument("depolarizing strengths must be below 1".into()));
    }
    let mismatch = p / 2.0;
    let f = semi_honest_f_norms(q)?;
    let p_a = p_a_formula(mismatch, f);
    if p_a <= 0.0 {
        return Err(Error::Degenerate("p_a must be positive".into()));
    }
    let mut flags = Vec::new();
    let q_z = q_z_formula(mismatch, f[2], f[3], p_a)?;
    if q_z.clamped {
        flags.push(RateFlag::QzClamped);
    }
    let i_ab = 1.0 - binary_entropy(q_z.value)?;
    let bound = information_bound(mismatch, f, p_a)?;
    if bound.was_capped {
        flags.push(RateFlag::BoundCapped);
    }
    let inputs = ObservedParams {
        q: mismatch,
        q_z: q_z.value,
        p_a,
        p_w: (1.0 - q) * p / 4.0 + q / 4.0,
        p_minus1_neq: Some(q / 4.0),
    };
    Ok(KeyRateReport::new(i_ab, bound.capped, Formula::SemiHonest, inputs, flags))
}

/// `I(A:B) - I(A:C)`
pub fn devetak_winter(i_ab: f64, i_ac: f64) -> f64 {
    i_ab - i_ac
}

/// Scan step and bisection width of [`find_threshold`].
pub const THRESHOLD_SCAN_STEP: f64 = 1e-3;
pub const THRESHOLD_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub q_star: f64,
    /// Final bisection interval `[q_pos, q_neg]` with rate ≥ 0 at the left end.
    pub bracket: [f64; 2],
    pub rate_at_bracket: [f64; 2],
    pub no_crossing: bool,
}

/// Largest `Q` in `[lo, hi]` with non-negative rate: a coarse scan locates the
/// last sign change, then bisection narrows it.
pub fn find_threshold(rate_fn: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Threshold> {
    let ordered = lo < hi;
    if !ordered {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    let r_lo = rate_fn(lo);
    let positive = r_lo > 0.0;
    if !positive {
        return Err(Error::InvalidArgument(format!("rate at {lo} is {r_lo}, not positive")));
    }
    let steps = ((hi - lo) / THRESHOLD_SCAN_STEP).ceil() as usize;
    let grid = |k: usize| if k >= steps { hi } else { lo + k as f64 * THRESHOLD_SCAN_STEP };
    let rates: Vec<f64> = (0..=steps).map(|k| rate_fn(grid(k))).collect();
    let nonneg = |r: f64| r >= 0.0;
    if nonneg(rates[steps]) {
        return Ok(Threshold {
            q_star: hi,
            bracket: [hi, hi],
            rate_at_bracket: [rates[steps], rates[steps]],
            no_crossing: true,
        });
    }
    let k = rates.iter().rposition(|&r| nonneg(r)).expect("rate at lo is positive");
    let (mut a, mut b) = (grid(k), grid(k + 1));
    let (mut ra, mut rb) = (rates[k], rates[k + 1]);
    while b - a > THRESHOLD_TOL {
        let m = 0.5 * (a + b);
        let rm = rate_fn(m);
        if nonneg(rm) {
            a = m;
            ra = rm;
        } else {
            b = m;
            rb = rm;
        }
    }
    Ok(Threshold {
        q_star: a,
        bracket: [a, b],
        rate_at_bracket: [ra, rb],
        no_crossing: false,
    })
}

/// Rate curves as functions of `Q` for the models the CLI exposes.
pub mod curves {
    use super::*;

    /// Semi-honest with `p = 2Q` and `q` either equal to `p` or fixed.
    pub fn semi_honest(q_grid: f64, reverse: Option<f64>) -> Result<KeyRateReport> {
        let p = 2.0 * q_grid;
        keyrate_semi_honest(p, reverse.unwrap_or(p))
    }

    /// `p_w` and `Q_Z` default to `Q`.
    pub fn worst_low(q: f64, p_a: f64, p_w: Option<f64>, q_z: Option<f64>) -> Result<KeyRateReport> {
        keyrate_worst_low(q, q_z.unwrap_or(q), p_w.unwrap_or(q), p_a)
    }

    /// `p_w` defaults to `Q`.
    pub fn worst_high(q: f64, p_a: f64, p_w: Option<f64>) -> Result<KeyRateReport> {
        keyrate_worst_high(q, p_w.unwrap_or(q), p_a)
    }
}
