//! Iterations of the mediated protocol: the server distributes two qubits,
//! each user reflects or measures-and-resends in Z, the server announces
//! `±1`, and the users sift on both-measure rounds announced `-1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::channels::{attack_response, Message, ServerMode};
use crate::error::{check_probability, Error, Result};
use crate::quantum::{bell_projection_probs, bell_state, z_measure_qubit, Ket};

/// Minimum per-group sample size for a symmetry z-test.
pub const MIN_SYMMETRY_SAMPLES: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Number of iterations.
    pub n: usize,
    pub p_measure_a: f64,
    pub p_measure_b: f64,
    /// Abort when the error rate among both-reflect rounds exceeds this.
    pub tau: f64,
    pub seed: u64,
    pub server: ServerMode,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        check_probability("p_measure_a", self.p_measure_a)?;
        check_probability("p_measure_b", self.p_measure_b)?;
        check_probability("tau", self.tau)?;
        self.server.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Reflect,
    Measure,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Reflect => "reflect",
            Action::Measure => "measure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationRecord {
    pub a_action: Action,
    pub b_action: Action,
    pub a_bit: Option<u8>,
    pub b_bit: Option<u8>,
    pub message: Message,
    pub kept: bool,
    pub reflect_error: bool,
}

impl IterationRecord {
    fn new(a: (Action, Option<u8>), b: (Action, Option<u8>), message: Message) -> Self {
        let both = |act| a.0 == act && b.0 == act;
        IterationRecord {
            a_action: a.0,
            b_action: b.0,
            a_bit: a.1,
            b_bit: b.1,
            message,
            kept: both(Action::Measure) && message == Message::Minus,
            reflect_error: both(Action::Reflect) && message == Message::Minus,
        }
    }
}

/// Sifted raw keys `info_A`, `info_B`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawKeys {
    pub info_a: Vec<bool>,
    pub info_b: Vec<bool>,
}

impl RawKeys {
    pub fn new(info_a: Vec<bool>, info_b: Vec<bool>) -> Result<Self> {
        if info_a.len() != info_b.len() {
            return Err(Error::Dimension(format!(
                "raw keys have lengths {} and {}",
                info_a.len(),
                info_b.len()
            )));
        }
        Ok(RawKeys { info_a, info_b })
    }

    pub fn len(&self) -> usize {
        self.info_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info_a.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.info_a.iter().zip(&self.info_b).filter(|(a, b)| a != b).count()
    }

    pub fn from_records(records: &[IterationRecord]) -> Self {
        let (info_a, info_b) = records
            .iter()
            .filter(|r| r.kept)
            .map(|r| (r.a_bit == Some(1), r.b_bit == Some(1)))
            .unzip();
        RawKeys { info_a, info_b }
    }
}

/// Independent random stream for iteration `index`.
pub fn iteration_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Replaces the state by a uniformly random Bell state with probability
/// `lambda`; averaged over runs this is the depolarizing channel.
fn depolarize_sample<R: Rng + ?Sized>(state: Ket, lambda: f64, rng: &mut R) -> Ket {
    if lambda > 0.0 && rng.random::<f64>() < lambda {
        bell_state(rng.random_range(0..4))
    } else {
        state
    }
}

fn honest_announcement<R: Rng + ?Sized>(state: &Ket, rng: &mut R) -> Result<Message> {
    let probs = bell_projection_probs(state)?;
    Ok(if sample_index(&probs, rng) == 1 {
        Message::Minus
    } else {
        Message::Plus
    })
}

fn user_step<R: Rng + ?Sized>(state: Ket, qubit: usize, p_measure: f64, rng: &mut R) -> Result<(Ket, Action, Option<u8>)> {
    if rng.random::<f64>() < p_measure {
        let (bit, collapsed) = z_measure_qubit(&state, qubit, rng)?;
        Ok((collapsed, Action::Measure, Some(bit)))
    } else {
        Ok((state, Action::Reflect, None))
    }
}

/// Runs a single iteration.
pub fn run_iteration<R: Rng + ?Sized>(config: &ProtocolConfig, rng: &mut R) -> Result<IterationRecord> {
    let state = match &config.server {
        ServerMode::Honest => bell_state(0),
        ServerMode::SemiHonest { p, .. } => depolarize_sample(bell_state(0), *p, rng),
        ServerMode::Adversarial { initial_state, .. } => initial_state.ket(),
    };
    let (state, a_action, a_bit) = user_step(state, 0, config.p_measure_a, rng)?;
    let (state, b_action, b_bit) = user_step(state, 1, config.p_measure_b, rng)?;
    let message = match &config.server {
        ServerMode::Honest => honest_announcement(&state, rng)?,
        ServerMode::SemiHonest { q, .. } => honest_announcement(&depolarize_sample(state, *q, rng), rng)?,
        ServerMode::Adversarial { attack, .. } => attack_response(attack, &state, rng)?.0,
    };
    Ok(IterationRecord::new((a_action, a_bit), (b_action, b_bit), message))
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub records: Vec<IterationRecord>,
    pub keys: RawKeys,
    pub stats: TranscriptStats,
    pub aborted: bool,
}

/// Runs all iterations. Each iteration draws from its own stream derived from
/// `(seed, index)`, so the transcript does not depend on scheduling.
pub fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolRun> {
    config.validate()?;
    let records = (0..config.n as u64)
        .into_par_iter()
        .map(|i| run_iteration(config, &mut iteration_rng(config.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let keys = RawKeys::from_records(&records);
    let stats = estimate_statistics(&records)?;
    let aborted = stats.p_w.value().is_some_and(|rate| rate > config.tau);
    Ok(ProtocolRun {
        records,
        keys,
        stats,
        aborted,
    })
}

/// A binomial frequency; `None` when there are no trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
}

impl Estimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        debug_assert!(successes <= trials);
        Estimate { successes, trials }
    }

    pub fn value(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }

    /// Binomial standard error `√(p(1-p)/n)`.
    pub fn std_err(&self) -> Option<f64> {
        self.value().map(|p| (p * (1.0 - p) / self.trials as f64).sqrt())
    }

    /// Whether `expected` lies within `k` standard errors of the estimate,
    /// using the standard error of the expected value itself so that
    /// degenerate estimates (0 or 1) are still judged.
    pub fn within_sigma(&self, expected: f64, k: f64) -> bool {
        match self.value() {
            None => false,
            Some(v) => {
                let se = (expected * (1.0 - expected) / self.trials as f64).sqrt();
                (v - expected).abs() <= k * se || v == expected
            }
        }
    }
}

impl Serialize for Estimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Estimate", 4)?;
        st.serialize_field("value", &self.value())?;
        st.serialize_field("std_err", &self.std_err())?;
        st.serialize_field("successes", &self.successes)?;
        st.serialize_field("trials", &self.trials)?;
        st.end()
    }
}

/// Raw event counts of a transcript.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TranscriptCounts {
    pub iterations: u64,
    /// Both-measure rounds by outcome `[a][b]`.
    pub both_measure: [[u64; 2]; 2],
    /// Both-measure rounds announced `-1`, by outcome.
    pub both_measure_minus: [[u64; 2]; 2],
    pub both_reflect: u64,
    pub both_reflect_minus: u64,
    pub one_measures: u64,
    pub kept: u64,
    pub kept_mismatch: u64,
}

impl TranscriptCounts {
    pub fn both_measure_total(&self) -> u64 {
        self.both_measure.iter().flatten().sum()
    }
}

/// Frequency estimates of the observable channel statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TranscriptStats {
    pub counts: TranscriptCounts,
    /// Joint Z outcomes among both-measure rounds.
    pub p_hat: [[Estimate; 2]; 2],
    /// Disagreement among both-measure rounds.
    pub q_hat: Estimate,
    /// `-1` among both-measure rounds.
    pub p_a: Estimate,
    /// `-1` among both-reflect rounds.
    pub p_w: Estimate,
    /// Disagreement among kept rounds.
    pub q_z: Estimate,
    pub p_minus1_neq: Estimate,
    pub p_minus1_eq: Estimate,
    /// `-1` given each both-measure outcome `[a][b]`.
    pub p_minus1_given: [[Estimate; 2]; 2],
    pub sift_rate: Estimate,
}

/// Accumulates the estimates from a transcript.
pub fn estimate_statistics(records: &[IterationRecord]) -> Result<TranscriptStats> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty transcript".into()));
    }
    let mut c = TranscriptCounts {
        iterations: records.len() as u64,
        ..Default::default()
    };
    for r in records {
        let minus = r.message == Message::Minus;
        match (r.a_action, r.b_action) {
            (Action::Measure, Action::Measure) => {
                let (a, b) = (r.a_bit.unwrap_or(0) as usize, r.b_bit.unwrap_or(0) as usize);
                c.both_measure[a][b] += 1;
                if minus {
                    c.both_measure_minus[a][b] += 1;
                    c.kept += 1;
                    if a != b {
                        c.kept_mismatch += 1;
                    }
                }
            }
            (Action::Reflect, Action::Reflect) => {
                c.both_reflect += 1;
                if minus {
                    c.both_reflect_minus += 1;
                }
            }
            _ => c.one_measures += 1,
        }
    }
    let nm = c.both_measure_total();
    let n = &c.both_measure;
    let m = &c.both_measure_minus;
    let eq = (n[0][0] + n[1][1], m[0][0] + m[1][1]);
    let neq = (n[0][1] + n[1][0], m[0][1] + m[1][0]);
    Ok(TranscriptStats {
        p_hat: [0, 1].map(|a| [0, 1].map(|b| Estimate::new(n[a][b], nm))),
        q_hat: Estimate::new(neq.0, nm),
        p_a: Estimate::new(eq.1 + neq.1, nm),
        p_w: Estimate::new(c.both_reflect_minus, c.both_reflect),
        q_z: Estimate::new(c.kept_mismatch, c.kept),
        p_minus1_neq: Estimate::new(neq.1, neq.0),
        p_minus1_eq: Estimate::new(eq.1, eq.0),
        p_minus1_given: [0, 1].map(|a| [0, 1].map(|b| Estimate::new(m[a][b], n[a][b]))),
        sift_rate: Estimate::new(c.kept, c.iterations),
        counts: c,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    Fail,
    Insufficient,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZTest {
    pub name: &'static str,
    pub z: Option<f64>,
    pub status: TestStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub z_sigma: f64,
    pub tests: Vec<ZTest>,
    /// False iff some test failed; insufficient tests do not fail.
    pub pass: bool,
}

fn judge(name: &'static str, z: Option<f64>, z_sigma: f64) -> ZTest {
    let status = match z {
        None => TestStatus::Insufficient,
        Some(z) if z.abs() > z_sigma => TestStatus::Fail,
        Some(_) => TestStatus::Pass,
    };
    ZTest { name, z, status }
}

/// Equality of two multinomial cells, conditioned on their combined count.
fn cell_z(a: u64, b: u64) -> Option<f64> {
    let n = a + b;
    (n >= MIN_SYMMETRY_SAMPLES).then(|| (a as f64 - b as f64) / (n as f64).sqrt())
}

/// Pooled two-proportion z statistic.
fn two_proportion_z(x: Estimate, y: Estimate) -> Option<f64> {
    if x.trials < MIN_SYMMETRY_SAMPLES || y.trials < MIN_SYMMETRY_SAMPLES {
        return None;
    }
    let pooled = (x.successes + y.successes) as f64 / (x.trials + y.trials) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / x.trials as f64 + 1.0 / y.trials as f64);
    let diff = x.value()? - y.value()?;
    Some(if var > 0.0 { diff / var.sqrt() } else { 0.0 })
}

/// z-tests of the symmetry conditions the users enforce before trusting the
/// key-rate bound: `p00 = p11`, `p01 = p10`, and equal `-1` rates on the
/// paired outcomes.
pub fn check_symmetry(stats: &TranscriptStats, z_sigma: f64) -> Result<SymmetryReport> {
    if stats.counts.both_measure_total() == 0 {
        return Err(Error::InvalidArgument("no both-measure rounds".into()));
    }
    let n = &stats.counts.both_measure;
    let g = &stats.p_minus1_given;
    let tests = vec![
        judge("p00_vs_p11", cell_z(n[0][0], n[1][1]), z_sigma),
        judge("p01_vs_p10", cell_z(n[0][1], n[1][0]), z_sigma),
        judge("minus1_00_vs_11", two_proportion_z(g[0][0], g[1][1]), z_sigma),
        judge("minus1_01_vs_10", two_proportion_z(g[0][1], g[1][0]), z_sigma),
    ];
    let pass = tests.iter().all(|t| t.status != TestStatus::Fail);
    Ok(SymmetryReport { z_sigma, tests, pass })
}

/// Writes the transcript as CSV.
pub fn write_transcript_csv<W: Write>(records: &[IterationRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,a_action,b_action,a_bit,b_bit,message,kept,reflect_error")?;
    let bit = |b: Option<u8>| b.map(|v| v.to_string()).unwrap_or_default();
    for (i, r) in records.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{:+},{},{}",
            i,
            r.a_action.as_str(),
            r.b_action.as_str(),
            bit(r.a_bit),
            bit(r.b_bit),
            r.message.as_i8(),
            u8::from(r.kept),
            u8::from(r.reflect_error)
        )?;
    }
    Ok(())
}
