//! BSC + MDS channel model, IIR/FR delay distributions and the bit-level
//! timeline of incremental-redundancy transmission.
//!
//! Every IIR channel delay is an integer combination of the two time
//! quanta of the system: the bit time `T_b` and the processing time `β`.
//! [`DelayUnits`] keeps that decomposition explicit so the analytic delay
//! formulas and the event-driven timeline can be compared exactly.

use std::cmp::Ordering;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};

/// Default residual tail mass at which delay distributions are truncated.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Hard cap on the number of decoding attempts a delay pmf may span.
pub const SUPPORT_CAP: usize = 100_000;

/// Relative tolerance used to decide that two time instants coincide, or
/// that `kβ/T_b` is an integer.
const TIE_TOL: f64 = 1e-9;

/// Code and timing parameters of one transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeConfig {
    ell: u32,
    n: u32,
    tb: f64,
    beta: f64,
    nbar: f64,
}

impl CodeConfig {
    pub fn new(ell: u32, n: u32, tb: f64, beta: f64) -> Result<Self> {
        if ell == 0 {
            return Err(invalid("ell", "need at least one quantization bit"));
        }
        if n < ell {
            return Err(invalid("n", format!("codeword length {n} is shorter than the message ({ell} bits)")));
        }
        require_positive("tb", tb)?;
        require_nonnegative("beta", beta)?;
        Ok(Self { ell, n, tb, beta, nbar: n as f64 * tb + beta })
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn tb(&self) -> f64 {
        self.tb
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `n T_b + β`: one codeword plus one decoding attempt.
    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    /// `n T_b`.
    pub fn codeword_time(&self) -> f64 {
        self.n as f64 * self.tb
    }

    /// `β / T_b`.
    pub fn processing_ratio(&self) -> f64 {
        self.beta / self.tb
    }

    /// Number of IR bits fully received during `k` back-to-back processing
    /// periods, `⌊kβ/T_b⌋`.
    pub fn bits_in_processing(&self, k: usize) -> usize {
        snap_floor(k as f64 * self.processing_ratio())
    }
}

/// `⌊x⌋`, except that values within rounding distance of an integer snap to
/// it (so `3 · 0.15/0.05` counts as 9, not 8).
fn snap_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= TIE_TOL * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.floor().max(0.0) as usize
    }
}

/// Per-attempt ACK probabilities `p_j` for a codeword extended by `j` IR bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessProbs {
    epsilon: f64,
    p: Vec<f64>,
    fail: Vec<f64>,
}

impl SuccessProbs {
    /// Builds from explicit probabilities (for custom channel models).
    pub fn from_probs(epsilon: f64, p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("p", "need at least p_0"));
        }
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(invalid("p", "probabilities must lie in [0, 1]"));
        }
        let fail = p.iter().map(|v| 1.0 - v).collect();
        Ok(Self { epsilon, p, fail })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `p_j`.
    pub fn p(&self, j: usize) -> f64 {
        self.p[j]
    }

    /// `1 - p_j`, computed without cancellation.
    pub fn failure(&self, j: usize) -> f64 {
        self.fail[j]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Indices `j` where `p_j > p_{j+1}`. The MDS/BSC formula drops at every
    /// step that adds a bit without adding a correctable error.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.p
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] > w[1])
            .map(|(j, _)| j)
            .collect()
    }

    /// Writes `j,p_j`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,p_j")?;
        for (j, p) in self.p.iter().enumerate() {
            writeln!(out, "{j},{p}")?;
        }
        Ok(())
    }
}

/// ACK probabilities of an MDS code over a BSC(ε):
/// `p_j = P(Bin(n+j, ε) ≤ ⌊(n+j-ℓ)/2⌋)` for `j = 0..=j_max`.
///
/// Binomial terms follow the ratio recurrence in the log domain and both
/// tails are accumulated with a streaming log-sum-exp, so `1 - p_j` keeps
/// full relative precision even when it is tiny.
pub fn mds_success_probs(cfg: &CodeConfig, epsilon: f64, j_max: usize) -> Result<SuccessProbs> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(invalid("epsilon", format!("crossover must lie in (0, 1/2), got {epsilon}")));
    }
    let log_eps = epsilon.ln();
    let log_keep = (-epsilon).ln_1p();
    let log_odds = log_eps - log_keep;
    let n_max = cfg.n as usize + j_max;
    let log_int: Vec<f64> = (0..=n_max + 1).map(|k| (k as f64).ln()).collect();

    let mut p = Vec::with_capacity(j_max + 1);
    let mut fail = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let total = cfg.n as usize + j;
        let correctable = (total - cfg.ell as usize) / 2;
        let mut lower = LogSum::default();
        let mut upper = LogSum::default();
        let mut log_term = total as f64 * log_keep;
        for l in 0..=total {
            if l <= correctable {
                lower.add(log_term);
            } else {
                upper.add(log_term);
            }
            if l < total {
                log_term += log_int[total - l] - log_int[l + 1] + log_odds;
            }
        }
        let (lo, up) = (lower.value(), upper.value());
        let norm = log_add(lo, up);
        p.push((lo - norm).exp());
        fail.push((up - norm).exp());
    }
    Ok(SuccessProbs { epsilon, p, fail })
}

#[derive(Default)]
struct LogSum {
    max: Option<f64>,
    scaled: f64,
}

impl LogSum {
    fn add(&mut self, x: f64) {
        match self.max {
            None => {
                self.max = Some(x);
                self.scaled = 1.0;
            }
            Some(m) if x <= m => self.scaled += (x - m).exp(),
            Some(m) => {
                self.scaled = self.scaled * (m - x).exp() + 1.0;
                self.max = Some(x);
            }
        }
    }

    fn value(&self) -> f64 {
        match self.max {
            None => f64::NEG_INFINITY,
            Some(m) => m + self.scaled.ln(),
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Which IIR transmitter is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayMode {
    /// The transmitter idles during every decoding attempt.
    Original,
    /// IR bits stream while the receiver processes.
    Enhanced,
}

impl DelayMode {
    pub fn from_enhanced(enhanced: bool) -> Self {
        if enhanced {
            Self::Enhanced
        } else {
            Self::Original
        }
    }
}

/// A time span `bit_slots · T_b + processing_slots · β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DelayUnits {
    pub bit_slots: u64,
    pub processing_slots: u64,
}

impl DelayUnits {
    pub const fn new(bit_slots: u64, processing_slots: u64) -> Self {
        Self { bit_slots, processing_slots }
    }

    pub fn time(&self, cfg: &CodeConfig) -> f64 {
        self.bit_slots as f64 * cfg.tb + self.processing_slots as f64 * cfg.beta
    }

    pub fn plus(self, bits: u64, procs: u64) -> Self {
        Self::new(self.bit_slots + bits, self.processing_slots + procs)
    }

    pub fn checked_sub(self, other: Self) -> Option<Self> {
        Some(Self::new(
            self.bit_slots.checked_sub(other.bit_slots)?,
            self.processing_slots.checked_sub(other.processing_slots)?,
        ))
    }

    /// Chronological order; instants closer than rounding distance are equal.
    pub fn cmp_time(&self, other: &Self, cfg: &CodeConfig) -> Ordering {
        let d_bits = self.bit_slots as f64 - other.bit_slots as f64;
        let d_procs = self.processing_slots as f64 - other.processing_slots as f64;
        let diff = d_bits * cfg.tb + d_procs * cfg.beta;
        let scale = d_bits.abs() * cfg.tb + d_procs.abs() * cfg.beta;
        if diff.abs() <= TIE_TOL * scale {
            Ordering::Equal
        } else if diff < 0.0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

/// IR bits available to decoding attempt `k` (0-based).
pub fn attempt_ir_bits(k: usize, cfg: &CodeConfig, mode: DelayMode) -> usize {
    match mode {
        DelayMode::Enhanced if cfg.beta >= cfg.tb => cfg.bits_in_processing(k),
        _ => k,
    }
}

/// Channel delay when decoding attempt `k` is the first to succeed.
pub fn attempt_delay(k: usize, cfg: &CodeConfig, mode: DelayMode) -> DelayUnits {
    let (n, k) = (cfg.n as u64, k as u64);
    match mode {
        DelayMode::Original => DelayUnits::new(n + k, k + 1),
        DelayMode::Enhanced if cfg.beta < cfg.tb => DelayUnits::new(n + k, 1),
        DelayMode::Enhanced => DelayUnits::new(n, k + 1),
    }
}

/// Smallest `κ ∈ {0..=r}` with `⌊κβ/T_b⌋ ≥ r`: the number of processing
/// periods after which `r` IR bits have arrived. Returns `r` when no smaller
/// value qualifies.
pub fn kappa(r: usize, cfg: &CodeConfig) -> usize {
    (0..=r).find(|&k| cfg.bits_in_processing(k) >= r).unwrap_or(r)
}

/// Delay of a message that needs exactly `r` IR bits, from the closed-form
/// delay expressions.
pub fn iir_delay_for_ir_bits(r: usize, cfg: &CodeConfig, mode: DelayMode) -> DelayUnits {
    let (n, r64) = (cfg.n as u64, r as u64);
    match mode {
        DelayMode::Original => DelayUnits::new(n + r64, r64 + 1),
        DelayMode::Enhanced if cfg.beta < cfg.tb => DelayUnits::new(n + r64, 1),
        DelayMode::Enhanced => DelayUnits::new(n, kappa(r, cfg) as u64 + 1),
    }
}

/// Time saved by the enhanced IIR transmitter for a message that needs `r`
/// IR bits: `r·min{β, T_b} + (r - κ)·β·1[β ≥ T_b]`.
pub fn enhanced_saving(r: usize, cfg: &CodeConfig) -> f64 {
    let r_f = r as f64;
    let mut saving = r_f * cfg.beta.min(cfg.tb);
    if cfg.beta >= cfg.tb {
        saving += (r - kappa(r, cfg)) as f64 * cfg.beta;
    }
    saving
}

/// [`enhanced_saving`] as slot counts.
pub fn enhanced_saving_units(r: usize, cfg: &CodeConfig) -> DelayUnits {
    let r64 = r as u64;
    if cfg.beta < cfg.tb {
        DelayUnits::new(0, r64)
    } else {
        DelayUnits::new(r64, r64 - kappa(r, cfg) as u64)
    }
}

/// Discrete channel-delay law with an explicitly carried truncated tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDistribution {
    support: Vec<f64>,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    truncated_mass: f64,
}

impl DelayDistribution {
    /// Validated constructor: sorted finite support, nonnegative pmf and
    /// `Σ pmf + truncated_mass = 1` within `1e-12`.
    pub fn new(support: Vec<f64>, pmf: Vec<f64>, truncated_mass: f64) -> Result<Self> {
        let dist = Self::from_parts_unchecked(support, pmf, truncated_mass)?;
        let defect = dist.mass_defect();
        if defect > 1e-12 {
            return Err(Error::MassNotConserved { defect });
        }
        Ok(dist)
    }

    /// Checks shape only; mass conservation is left to the caller (see
    /// [`DelayDistribution::mass_defect`]).
    pub fn from_parts_unchecked(support: Vec<f64>, pmf: Vec<f64>, truncated_mass: f64) -> Result<Self> {
        if support.is_empty() || support.len() != pmf.len() {
            return Err(invalid("support", "support and pmf must be non-empty and of equal length"));
        }
        if support.iter().any(|y| !(y.is_finite() && *y >= 0.0)) {
            return Err(invalid("support", "delays must be finite and nonnegative"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("support", "delays must be strictly increasing"));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("pmf", "probabilities must be finite and nonnegative"));
        }
        if !(truncated_mass.is_finite() && truncated_mass >= 0.0) {
            return Err(invalid("truncated_mass", "must be finite and nonnegative"));
        }
        let cdf = pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self { support, pmf, cdf, truncated_mass })
    }

    pub fn point_mass(delay: f64) -> Result<Self> {
        Self::new(vec![delay], vec![1.0], 0.0)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.pmf.iter().copied())
    }

    pub fn min_delay(&self) -> f64 {
        self.support[0]
    }

    pub fn max_delay(&self) -> f64 {
        *self.support.last().expect("non-empty support")
    }

    /// `|Σ pmf + truncated_mass - 1|`.
    pub fn mass_defect(&self) -> f64 {
        (self.pmf.iter().sum::<f64>() + self.truncated_mass - 1.0).abs()
    }

    /// `Σ pmf · f(y)` over the retained support.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(y, p)| p * f(y)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|y| y)
    }

    /// Inverse-CDF draw. The truncated tail maps to the largest retained
    /// delay.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }

    /// Writes `delay,probability`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "delay,probability")?;
        for (y, p) in self.iter() {
            writeln!(out, "{y},{p}")?;
        }
        Ok(())
    }
}

/// IIR channel-delay pmf.
///
/// Decoding attempts fail independently with probability `1 - p_j`, where
/// `j` is the number of IR bits the attempt sees ([`attempt_ir_bits`]); the
/// delay of a first success at attempt `k` is [`attempt_delay`]. The pmf
/// stops once the unresolved mass drops to `tail_tol`.
pub fn delay_pmf_iir(
    sp: &SuccessProbs,
    cfg: &CodeConfig,
    mode: DelayMode,
    tail_tol: f64,
) -> Result<DelayDistribution> {
    delay_pmf_iir_capped(sp, cfg, mode, tail_tol, SUPPORT_CAP)
}

/// [`delay_pmf_iir`] with an explicit cap on the number of attempts.
pub fn delay_pmf_iir_capped(
    sp: &SuccessProbs,
    cfg: &CodeConfig,
    mode: DelayMode,
    tail_tol: f64,
    cap: usize,
) -> Result<DelayDistribution> {
    require_positive("tail_tol", tail_tol)?;
    let mut support = Vec::new();
    let mut pmf = Vec::new();
    let mut survival = 1.0;
    for k in 0..cap {
        let j = attempt_ir_bits(k, cfg, mode);
        if j >= sp.len() {
            return Err(Error::InsufficientSuccessProbs { needed: j, available: sp.len() });
        }
        support.push(attempt_delay(k, cfg, mode).time(cfg));
        pmf.push(survival * sp.p(j));
        survival *= sp.failure(j);
        if survival <= tail_tol {
            return DelayDistribution::new(support, pmf, survival);
        }
    }
    Err(Error::ChannelTooNoisy { cap, residual: survival })
}

/// Computes ACK probabilities and the IIR delay pmf together, extending
/// the probability table until the pmf resolves to `tail_tol`.
pub fn iir_delay_distribution(
    cfg: &CodeConfig,
    epsilon: f64,
    mode: DelayMode,
    tail_tol: f64,
) -> Result<(SuccessProbs, DelayDistribution)> {
    iir_delay_distribution_capped(cfg, epsilon, mode, tail_tol, SUPPORT_CAP)
}

/// [`iir_delay_distribution`] with an explicit cap on the number of attempts.
pub fn iir_delay_distribution_capped(
    cfg: &CodeConfig,
    epsilon: f64,
    mode: DelayMode,
    tail_tol: f64,
    cap: usize,
) -> Result<(SuccessProbs, DelayDistribution)> {
    let mut j_max = 64;
    loop {
        let sp = mds_success_probs(cfg, epsilon, j_max)?;
        match delay_pmf_iir_capped(&sp, cfg, mode, tail_tol, cap) {
            Ok(dist) => return Ok((sp, dist)),
            Err(Error::InsufficientSuccessProbs { needed, .. }) => {
                j_max = (2 * j_max).max(needed + 1);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Outcome oracle for a decoding attempt.
pub trait Decoder {
    /// Whether attempt `attempt`, which sees `ir_bits` IR bits, decodes.
    fn decode(&mut self, attempt: usize, ir_bits: usize) -> bool;
}

/// Succeeds as soon as at least `r` IR bits are available.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdDecoder {
    pub required_ir_bits: usize,
}

impl Decoder for ThresholdDecoder {
    fn decode(&mut self, _attempt: usize, ir_bits: usize) -> bool {
        ir_bits >= self.required_ir_bits
    }
}

/// Independent attempts: success with probability `p_{ir_bits}`.
pub struct IndependentAttempts<'a, R: Rng + ?Sized> {
    pub probs: &'a SuccessProbs,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> Decoder for IndependentAttempts<'_, R> {
    fn decode(&mut self, _attempt: usize, ir_bits: usize) -> bool {
        let p = self.probs.p(ir_bits.min(self.probs.len() - 1));
        self.rng.random::<f64>() < p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimelineEvent {
    /// IR bit `index` (1-based) fully received.
    BitReceived { index: usize, at: DelayUnits },
    DecodeStarted { attempt: usize, ir_bits: usize, at: DelayUnits },
    DecodeFinished { attempt: usize, success: bool, at: DelayUnits },
    /// IR bit `index` was mid-transmission when the ACK arrived.
    BitCutOff { index: usize, at: DelayUnits },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineOutcome {
    /// Time from the start of the codeword to the ACK.
    pub delay: DelayUnits,
    pub attempts: usize,
    pub ir_bits_used: usize,
    pub ir_bits_received: usize,
    pub events: Vec<TimelineEvent>,
}

impl TimelineOutcome {
    pub fn delay_time(&self, cfg: &CodeConfig) -> f64 {
        self.delay.time(cfg)
    }
}

/// Upper bound on decoding attempts in one timeline.
const MAX_ATTEMPTS: usize = 10_000_000;

/// Event-driven transmission of one message over IIR.
///
/// The `n`-bit codeword occupies `[0, nT_b)`; each IR bit takes `T_b` and
/// each decoding attempt `β`. The receiver decodes with every IR bit that
/// has fully arrived and, after a NACK, starts again as soon as at least one
/// new bit is available. The original transmitter sends one IR bit per NACK;
/// the enhanced one streams IR bits from `nT_b` on and cuts the stream at
/// the ACK.
pub fn simulate_timeline_iir<D: Decoder + ?Sized>(
    cfg: &CodeConfig,
    mode: DelayMode,
    decoder: &mut D,
) -> Result<TimelineOutcome> {
    let codeword_done = DelayUnits::new(cfg.n as u64, 0);
    let mut events = Vec::new();
    let mut received = 0usize;
    let mut last_used = 0usize;
    let mut attempts = 0usize;
    // (index, arrival) of the IR bit on the wire
    let mut in_flight: Option<(usize, DelayUnits)> = match mode {
        DelayMode::Enhanced => Some((1, codeword_done.plus(1, 0))),
        DelayMode::Original => None,
    };
    // (attempt, bits, finish) of the decode in progress
    let mut busy: Option<(usize, usize, DelayUnits)> = Some((0, 0, codeword_done.plus(0, 1)));
    events.push(TimelineEvent::DecodeStarted { attempt: 0, ir_bits: 0, at: codeword_done });

    loop {
        let bit_first = match (in_flight, busy) {
            (Some((_, arrival)), Some((_, _, finish))) => arrival.cmp_time(&finish, cfg) != Ordering::Greater,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("receiver idle with nothing in flight"),
        };

        if bit_first {
            let (index, at) = in_flight.take().expect("bit in flight");
            received = index;
            events.push(TimelineEvent::BitReceived { index, at });
            if mode == DelayMode::Enhanced {
                in_flight = Some((index + 1, at.plus(1, 0)));
            }
            if busy.is_none() && received > last_used {
                busy = Some(start_attempt(&mut attempts, received, at, &mut events));
                last_used = received;
            }
            continue;
        }

        let (attempt, bits, at) = busy.take().expect("decode in progress");
        let success = decoder.decode(attempt, bits);
        events.push(TimelineEvent::DecodeFinished { attempt, success, at });
        if success {
            if let Some((index, _)) = in_flight {
                events.push(TimelineEvent::BitCutOff { index, at });
            }
            return Ok(TimelineOutcome {
                delay: at,
                attempts: attempt + 1,
                ir_bits_used: bits,
                ir_bits_received: received,
                events,
            });
        }
        if attempt + 1 >= MAX_ATTEMPTS {
            return Err(Error::ChannelTooNoisy { cap: MAX_ATTEMPTS, residual: f64::NAN });
        }
        match mode {
            DelayMode::Original => in_flight = Some((received + 1, at.plus(1, 0))),
            DelayMode::Enhanced => {
                if received > last_used {
                    busy = Some(start_attempt(&mut attempts, received, at, &mut events));
                    last_used = received;
                }
            }
        }
    }
}

fn start_attempt(
    attempts: &mut usize,
    bits: usize,
    at: DelayUnits,
    events: &mut Vec<TimelineEvent>,
) -> (usize, usize, DelayUnits) {
    *attempts += 1;
    let attempt = *attempts;
    events.push(TimelineEvent::DecodeStarted { attempt, ir_bits: bits, at });
    (attempt, bits, at.plus(0, 1))
}

/// One IIR channel delay drawn through the bit-level timeline with
/// independent per-attempt outcomes.
pub fn sample_timeline_delay<R: Rng + ?Sized>(
    sp: &SuccessProbs,
    cfg: &CodeConfig,
    mode: DelayMode,
    rng: &mut R,
) -> Result<f64> {
    let mut decoder = IndependentAttempts { probs: sp, rng };
    Ok(simulate_timeline_iir(cfg, mode, &mut decoder)?.delay_time(cfg))
}

/// Number of FR transmissions until the first decoding success,
/// geometric on `{1, 2, ...}` with parameter `p0`.
pub fn sample_attempts_fr<R: Rng + ?Sized>(p0: f64, rng: &mut R) -> Result<u64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(invalid("p0", format!("must lie in (0, 1], got {p0}")));
    }
    if p0 == 1.0 {
        return Ok(1);
    }
    let geometric = Geometric::new(p0).map_err(|e| invalid("p0", e.to_string()))?;
    Ok(geometric.sample(rng) + 1)
}
