//! Monte Carlo: renewal-reward epoch simulation of the IIR and FR policies,
//! and end-to-end tracking of an OU sample path.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{sample_attempts_fr, sample_timeline_delay, CodeConfig, DelayDistribution, DelayMode, SuccessProbs};
use crate::error::{invalid, Error, Result};
use crate::ou::{ou_path, OuParams, SamplePath};
use crate::penalty::AgePenalty;
use crate::policy::{FRPolicy, IIRPolicy};
use crate::quantizer::Codebook;
use crate::rng::{self, streams};

/// Renewal-reward accumulators over simulated epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EpochStats {
    epochs: u64,
    total_penalty_area: f64,
    total_time: f64,
    total_delay: f64,
    sum_area_sq: f64,
    sum_time_sq: f64,
    sum_cross: f64,
}

impl EpochStats {
    pub fn push(&mut self, area: f64, length: f64, delay: f64) {
        self.epochs += 1;
        self.total_penalty_area += area;
        self.total_time += length;
        self.total_delay += delay;
        self.sum_area_sq += area * area;
        self.sum_time_sq += length * length;
        self.sum_cross += area * length;
    }

    pub fn merge(&mut self, other: &Self) {
        self.epochs += other.epochs;
        self.total_penalty_area += other.total_penalty_area;
        self.total_time += other.total_time;
        self.total_delay += other.total_delay;
        self.sum_area_sq += other.sum_area_sq;
        self.sum_time_sq += other.sum_time_sq;
        self.sum_cross += other.sum_cross;
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn total_penalty_area(&self) -> f64 {
        self.total_penalty_area
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Empirical long-term average penalty, area over time.
    pub fn average(&self) -> f64 {
        self.total_penalty_area / self.total_time
    }

    pub fn mean_delay(&self) -> f64 {
        self.total_delay / self.epochs as f64
    }

    pub fn mean_epoch_length(&self) -> f64 {
        self.total_time / self.epochs as f64
    }

    /// Standard error of [`EpochStats::average`] by the delta method:
    /// `sqrt(Var(A - R L) / n) / E[L]`.
    pub fn stderr(&self) -> f64 {
        if self.epochs < 2 {
            return f64::NAN;
        }
        let n = self.epochs as f64;
        let r = self.average();
        let ss = self.sum_area_sq - 2.0 * r * self.sum_cross + r * r * self.sum_time_sq;
        let var = (ss / (n - 1.0)).max(0.0);
        (var / n).sqrt() / self.mean_epoch_length()
    }

    pub const CSV_HEADER: &'static str = "scheme,epochs,avg_penalty,stderr,mean_delay";

    /// `scheme,epochs,avg_penalty,stderr,mean_delay`.
    pub fn csv_row(&self, scheme: &str) -> String {
        format!("{scheme},{},{},{},{}", self.epochs, self.average(), self.stderr(), self.mean_delay())
    }
}

/// Simulates IIR epochs under `policy`.
///
/// Each epoch starts with the age `ȳ` left by the previous delay, waits
/// `policy.wait(ȳ)`, then draws a fresh delay `Y` from `dist`. The penalty
/// area over ages `[ȳ, ȳ + w + Y]` uses the exact antiderivative for `h_ℓ`.
pub fn simulate_iir<R: Rng + ?Sized>(
    policy: &IIRPolicy,
    dist: &DelayDistribution,
    g: &AgePenalty,
    epochs: u64,
    rng: &mut R,
) -> Result<EpochStats> {
    if epochs == 0 {
        return Err(invalid("epochs", "need at least one epoch"));
    }
    let mut stats = EpochStats::default();
    let mut ybar = dist.sample(rng);
    for _ in 0..epochs {
        let w = policy.wait(ybar);
        let y = dist.sample(rng);
        stats.push(g.integral(ybar, ybar + w + y), w + y, y);
        ybar = y;
    }
    Ok(stats)
}

/// Transmission schedule of the FR scheme.
///
/// Codeword `j` goes out at `S_j`, reaches the receiver at `S_j + nT_b`, and
/// is decoded once the receiver is free; the next codeword leaves `δ` after
/// codeword `j` is handed to the decoder.
struct FrSchedule {
    codeword_time: f64,
    beta: f64,
    delta: f64,
    next_send: f64,
    decoder_free: f64,
}

impl FrSchedule {
    fn new(cfg: &CodeConfig, policy: &FRPolicy) -> Self {
        Self {
            codeword_time: cfg.codeword_time(),
            beta: cfg.beta(),
            delta: policy.delta(),
            next_send: 0.0,
            decoder_free: f64::NEG_INFINITY,
        }
    }

    /// Sends one codeword; returns `(sample time, decode end)`.
    fn attempt(&mut self) -> (f64, f64) {
        let sent = self.next_send;
        let start = (sent + self.codeword_time).max(self.decoder_free);
        let end = start + self.beta;
        self.decoder_free = end;
        self.next_send = start + self.delta;
        (sent, end)
    }

    fn run(&mut self, attempts: u64) -> (f64, f64) {
        let mut last = self.attempt();
        for _ in 1..attempts {
            last = self.attempt();
        }
        last
    }
}

/// Simulates FR epochs under the offset `policy.delta()`.
///
/// Epochs run between consecutive successful decodes; the number of
/// codewords per epoch is geometric with parameter `p0`. The first success
/// only sets the initial age and is not counted.
///
/// # Errors
/// Rejects `epochs == 0` and `p0` outside `(0, 1]`.
pub fn simulate_fr<R: Rng + ?Sized>(
    policy: &FRPolicy,
    p0: f64,
    cfg: &CodeConfig,
    g: &AgePenalty,
    epochs: u64,
    rng: &mut R,
) -> Result<EpochStats> {
    if epochs == 0 {
        return Err(invalid("epochs", "need at least one epoch"));
    }
    let mut schedule = FrSchedule::new(cfg, policy);
    // one discarded codeword brings the receiver queue to steady state
    schedule.attempt();
    let (sample, end) = schedule.run(sample_attempts_fr(p0, rng)?);
    let mut age = end - sample;
    let mut last_decode = end;
    let mut stats = EpochStats::default();
    for _ in 0..epochs {
        let (sample, end) = schedule.run(sample_attempts_fr(p0, rng)?);
        let length = end - last_decode;
        stats.push(g.integral(age, age + length), length, end - sample);
        age = end - sample;
        last_decode = end;
    }
    Ok(stats)
}

/// Scheme driving a tracking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackingScheme {
    /// IIR with the threshold rule `w(ȳ) = [threshold - ȳ]⁺`.
    Iir { mode: DelayMode, threshold: f64 },
    Fr { policy: FRPolicy },
}

impl TrackingScheme {
    pub fn iir(policy: &IIRPolicy, mode: DelayMode) -> Self {
        Self::Iir { mode, threshold: policy.threshold_age() }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Iir { .. } => "iir",
            Self::Fr { .. } => "fr",
        }
    }
}

/// One successfully decoded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decode {
    pub sample_time: f64,
    pub decode_time: f64,
    /// Quantized sample value.
    pub reconstruction: f64,
}

#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub truth_path: SamplePath,
    /// `X̂_t` on the same grid as the truth.
    pub estimate_path: SamplePath,
    /// Time average of `(X_t - X̂_t)²` over grid points from the first
    /// decode on.
    pub empirical_mse: f64,
    pub decode_times: Vec<f64>,
    pub decodes: Vec<Decode>,
}

impl TrackingResult {
    /// Writes `t,x_true,x_hat`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x_true,x_hat")?;
        for (i, (x, xh)) in self.truth_path.values().iter().zip(self.estimate_path.values()).enumerate() {
            writeln!(out, "{},{x},{xh}", self.truth_path.time(i))?;
        }
        Ok(())
    }

    /// Age of information at grid time `t`, or `None` before the first
    /// decode.
    pub fn age_at(&self, t: f64) -> Option<f64> {
        let idx = self.decode_times.partition_point(|&d| d <= t);
        idx.checked_sub(1).map(|i| t - self.decodes[i].sample_time)
    }
}

/// Runs the full pipeline on one OU path sampled every `T_b`: sample per
/// policy, quantize with `cb`, transmit with per-attempt channel draws, and
/// hold the estimate `X̃_S e^{-θ(t-S)}` between decodes (zero before the
/// first).
pub fn simulate_tracking(
    scheme: &TrackingScheme,
    cb: &Codebook,
    sp: &SuccessProbs,
    cfg: &CodeConfig,
    params: &OuParams,
    horizon: f64,
    seed: u64,
) -> Result<TrackingResult> {
    let levels = 1usize << cfg.ell();
    if cb.len() != levels {
        return Err(invalid("codebook", format!("{} levels, expected {levels} for ell={}", cb.len(), cfg.ell())));
    }
    let truth = ou_path(params, horizon, cfg.tb(), seed)?;
    let mut rng = rng::stream(seed, streams::CHANNEL);
    let quantized = |t: f64| cb.quantize(truth.value_near(t)).1;

    let mut decodes = Vec::new();
    match *scheme {
        TrackingScheme::Iir { mode, threshold } => {
            let mut send = 0.0;
            while send <= horizon {
                let y = sample_timeline_delay(sp, cfg, mode, &mut rng)?;
                let done = send + y;
                if done > horizon {
                    break;
                }
                decodes.push(Decode { sample_time: send, decode_time: done, reconstruction: quantized(send) });
                send = done + (threshold - y).max(0.0);
            }
        }
        TrackingScheme::Fr { policy } => {
            let p0 = sp.p(0);
            let mut schedule = FrSchedule::new(cfg, &policy);
            loop {
                let (sent, done) = schedule.attempt();
                if done > horizon {
                    break;
                }
                if rng.random::<f64>() < p0 {
                    decodes.push(Decode { sample_time: sent, decode_time: done, reconstruction: quantized(sent) });
                }
            }
        }
    }
    let Some(first) = decodes.first() else {
        return Err(Error::HorizonTooShort { horizon, min_epoch: cfg.nbar() });
    };
    let first_decode = first.decode_time;

    let theta = params.theta();
    let mut estimate = Vec::with_capacity(truth.len());
    let mut next = 0;
    let mut sq_err = 0.0;
    let mut counted = 0usize;
    for (i, &x) in truth.values().iter().enumerate() {
        let t = truth.time(i);
        while next < decodes.len() && decodes[next].decode_time <= t {
            next += 1;
        }
        let x_hat = match next.checked_sub(1) {
            Some(k) => decodes[k].reconstruction * (-theta * (t - decodes[k].sample_time)).exp(),
            None => 0.0,
        };
        if t >= first_decode {
            sq_err += (x - x_hat) * (x - x_hat);
            counted += 1;
        }
        estimate.push(x_hat);
    }
    if counted == 0 {
        return Err(Error::HorizonTooShort { horizon, min_epoch: first_decode });
    }

    Ok(TrackingResult {
        estimate_path: SamplePath::new(truth.t0(), truth.dt(), estimate)?,
        truth_path: truth,
        empirical_mse: sq_err / counted as f64,
        decode_times: decodes.iter().map(|d| d.decode_time).collect(),
        decodes,
    })
}

/// Empirical tracking MSE for each seed, computed in parallel.
pub fn tracking_mse_over_seeds(
    scheme: &TrackingScheme,
    cb: &Codebook,
    sp: &SuccessProbs,
    cfg: &CodeConfig,
    params: &OuParams,
    horizon: f64,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    seeds
        .par_iter()
        .map(|&s| simulate_tracking(scheme, cb, sp, cfg, params, horizon, s).map(|r| r.empirical_mse))
        .collect()
}

/// Mean, sample standard deviation and range of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Self {
            count,
            mean,
            std_dev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::mds_success_probs;
    use crate::policy::{fr_mmse, ratio_objective, solve_iir, SolverOptions};
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_iir_epochs_match_ratio() {
        let params = OuParams::new(0.5, 1.0).unwrap();
        let g = AgePenalty::mmse_ou(params, 2).unwrap();
        let dist = DelayDistribution::point_mass(0.35).unwrap();
        let policy = solve_iir(&g, &dist, SolverOptions::default()).unwrap();
        let mut rng = rng::stream(3, streams::CHANNEL);
        let stats = simulate_iir(&policy, &dist, &g, 50, &mut rng).unwrap();
        assert_relative_eq!(stats.average(), ratio_objective(&g, &dist, policy.threshold_age()), max_relative = 1e-12);
        assert!(stats.stderr() < 1e-9);
    }

    #[test]
    fn deterministic_fr_epochs_match_closed_form() {
        let params = OuParams::new(0.25, 1.0).unwrap();
        for beta in [0.15, 0.5] {
            let cfg = CodeConfig::new(4, 6, 0.05, beta).unwrap();
            let g = AgePenalty::mmse_ou(params, 4).unwrap();
            for policy in [FRPolicy::just_in_time(&cfg), FRPolicy::non_enhanced(&cfg), FRPolicy::new(&cfg, 0.0).unwrap()] {
                let mut rng = rng::stream(1, streams::CHANNEL);
                let stats = simulate_fr(&policy, 1.0, &cfg, &g, 20, &mut rng).unwrap();
                let analytic = fr_mmse(&params, &cfg, 1.0, policy.delta()).unwrap();
                assert_relative_eq!(stats.average(), analytic, max_relative = 1e-12);
                assert_relative_eq!(stats.mean_delay(), policy.decode_age(&cfg), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn stats_csv_row() {
        let mut s = EpochStats::default();
        s.push(2.0, 1.0, 0.5);
        s.push(4.0, 2.0, 0.5);
        assert_eq!(s.csv_row("fr"), "fr,2,2,0,0.5");
        assert_eq!(EpochStats::CSV_HEADER, "scheme,epochs,avg_penalty,stderr,mean_delay");
    }

    #[test]
    fn merge_equals_sequential() {
        let mut a = EpochStats::default();
        let mut b = EpochStats::default();
        let mut all = EpochStats::default();
        for i in 0..10 {
            let (area, len) = (i as f64 * 0.7 + 1.0, i as f64 * 0.3 + 0.5);
            if i < 4 { a.push(area, len, 0.1) } else { b.push(area, len, 0.1) }
            all.push(area, len, 0.1);
        }
        a.merge(&b);
        assert_eq!(a.epochs(), all.epochs());
        assert_relative_eq!(a.stderr(), all.stderr(), max_relative = 1e-12);
    }

    #[test]
    fn tracking_rejects_mismatched_codebook_and_short_horizon() {
        let params = OuParams::new(0.01, 1.0).unwrap();
        let cfg = CodeConfig::new(1, 3, 0.05, 0.15).unwrap();
        let sp = mds_success_probs(&cfg, 0.1, 64).unwrap();
        let scheme = TrackingScheme::Fr { policy: FRPolicy::just_in_time(&cfg) };
        let bad = Codebook::from_levels(vec![-1.0, 0.0, 1.0]).unwrap();
        assert!(simulate_tracking(&scheme, &bad, &sp, &cfg, &params, 10.0, 1).is_err());
        let cb = Codebook::from_levels(vec![-1.0, 1.0]).unwrap();
        assert!(matches!(
            simulate_tracking(&scheme, &cb, &sp, &cfg, &params, 0.1, 1),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn spread_of_values() {
        let s = Spread::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_dev, 1.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
    }
}
