//! Optimal sampling policies: the threshold waiting rule for IIR found by
//! Dinkelbach bisection, and the zero-wait / just-in-time rule for FR.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{CodeConfig, DelayDistribution, DelayMode};
use crate::error::{invalid, require_nonnegative, Error, Result};
use crate::ou::OuParams;
use crate::penalty::{AgePenalty, GFunction};
use crate::quantizer::distortion_factor;

/// Bisection controls for [`solve_iir`]. `tol` is relative to `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200 }
    }
}

/// Expected penalty area and expected length of one IIR epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMoments {
    pub area: f64,
    pub length: f64,
}

impl EpochMoments {
    pub fn ratio(&self) -> f64 {
        self.area / self.length
    }
}

/// Epoch moments of the constant-threshold rule `w(ȳ) = [A - ȳ]⁺`, with the
/// starting age `Ȳ` and the delay `Y` both distributed as `dist`.
///
/// The epoch covers ages `ȳ` to `ȳ + w + Y`.
pub fn threshold_moments(g: &AgePenalty, dist: &DelayDistribution, threshold: f64) -> EpochMoments {
    let mean_delay = dist.mean();
    let mut area = 0.0;
    let mut length = 0.0;
    match g {
        AgePenalty::MmseOu(m) => {
            let k = 2.0 * m.params().theta();
            let laplace = dist.expect(|y| (-k * y).exp());
            let scale = m.variance() * (1.0 - m.distortion()) / k;
            for (ybar, p) in dist.iter() {
                let w = (threshold - ybar).max(0.0);
                let decay = (-k * ybar).exp() * (1.0 - (-k * w).exp() * laplace);
                area += p * (m.variance() * (w + mean_delay) - scale * decay);
                length += p * (w + mean_delay);
            }
        }
        AgePenalty::Custom(_) => {
            for (ybar, p) in dist.iter() {
                let w = (threshold - ybar).max(0.0);
                let inner = dist.expect(|y| g.integral(ybar, ybar + w + y));
                area += p * inner;
                length += p * (w + mean_delay);
            }
        }
    }
    EpochMoments { area, length }
}

/// Long-term average penalty of the constant-threshold rule.
pub fn ratio_objective(g: &AgePenalty, dist: &DelayDistribution, threshold: f64) -> f64 {
    threshold_moments(g, dist, threshold).ratio()
}

/// Dinkelbach auxiliary `p(λ) = E[∫ g] - λ E[w(Ȳ) + Y]` at the λ-optimal
/// wait `w(ȳ) = [G_ȳ^{-1}(λ)]⁺`.
pub fn p_iir(lambda: f64, g: &AgePenalty, dist: &DelayDistribution) -> Result<f64> {
    let gf = GFunction::new(g, dist);
    let m = threshold_moments(g, dist, gf.threshold_age(lambda)?);
    Ok(m.area - lambda * m.length)
}

/// Optimal IIR sampling policy.
#[derive(Debug, Clone)]
pub struct IIRPolicy {
    lambda_star: f64,
    threshold: f64,
    residual: f64,
    iterations: usize,
    error_bound: f64,
    dist: DelayDistribution,
    penalty: AgePenalty,
}

impl IIRPolicy {
    /// Optimal long-term average penalty.
    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Age `A` below which the transmitter waits.
    pub fn threshold_age(&self) -> f64 {
        self.threshold
    }

    /// `w*(ȳ) = [A - ȳ]⁺`.
    pub fn wait(&self, ybar: f64) -> f64 {
        (self.threshold - ybar).max(0.0)
    }

    /// `p(λ*)` at the returned root.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Half-width of the final bracket plus the truncated-tail bound.
    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    pub fn dist(&self) -> &DelayDistribution {
        &self.dist
    }

    pub fn penalty(&self) -> &AgePenalty {
        &self.penalty
    }

    /// Long-term average penalty of the returned waiting rule.
    pub fn ratio_objective(&self) -> f64 {
        ratio_objective(&self.penalty, &self.dist, self.threshold)
    }

    /// Writes `ybar,wait` over the delay support.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "ybar,wait")?;
        for &y in self.dist.support() {
            writeln!(out, "{y},{}", self.wait(y))?;
        }
        Ok(())
    }
}

/// Solves `p(λ*) = 0` by bisection.
///
/// For `h_ℓ` the bracket is `[2^{-2ℓ}σ²/2θ, σ²/2θ)`; for custom penalties it
/// is `[g(min Y), zero-wait ratio]`. A bracket on which `p` does not change
/// sign is reported as [`Error::BracketFailure`].
pub fn solve_iir(g: &AgePenalty, dist: &DelayDistribution, opts: SolverOptions) -> Result<IIRPolicy> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(invalid("solver", "tolerance must be positive and max_iter nonzero"));
    }
    let gf = GFunction::new(g, dist);
    // above the reachable range the optimal wait is unbounded and p → -∞
    let p = |lambda: f64| -> Result<f64> {
        match gf.threshold_age(lambda) {
            Ok(age) => {
                let m = threshold_moments(g, dist, age);
                Ok(m.area - lambda * m.length)
            }
            Err(Error::UnreachablePenalty { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };

    let (mut lo, mut hi) = match g {
        AgePenalty::MmseOu(m) => (m.floor(), m.variance() * (1.0 - 1e-12)),
        AgePenalty::Custom(_) => (g.value(dist.min_delay()), ratio_objective(g, dist, 0.0)),
    };
    let (p_lo, p_hi) = (p(lo)?, p(hi)?);
    if p_lo < 0.0 || p_hi > 0.0 {
        return Err(Error::BracketFailure { lo, hi, p_lo, p_hi });
    }

    let mut iterations = 0;
    while iterations < opts.max_iter && hi - lo > opts.tol * hi.abs() {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if p(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda_star = 0.5 * (lo + hi);
    if gf.threshold_age(lambda_star).is_err() {
        // the bracket collapsed onto the supremum of a flat penalty
        lambda_star = lo;
    }
    let threshold = gf.threshold_age(lambda_star)?;
    Ok(IIRPolicy {
        lambda_star,
        threshold,
        residual: p(lambda_star)?,
        iterations,
        error_bound: 0.5 * (hi - lo) + 2.0 * gf.tail_error_bound(),
        dist: dist.clone(),
        penalty: g.clone(),
    })
}

/// Closed-form optimal IIR wait for `h_ℓ`:
/// `[(1/2θ) ln(σ²/2θ (1-2^{-2ℓ}) E[e^{-2θY}] / (σ²/2θ - λ)) - ȳ]⁺`.
pub fn iir_waiting_closed_form(
    ybar: f64,
    lambda: f64,
    params: &OuParams,
    ell: u32,
    dist: &DelayDistribution,
) -> Result<f64> {
    let v = params.steady_state_variance();
    if !(lambda < v) {
        return Err(Error::UnreachablePenalty { lambda, supremum: v });
    }
    let k = 2.0 * params.theta();
    let laplace = dist.expect(|y| (-k * y).exp());
    let age = (v * (1.0 - distortion_factor(ell)) * laplace / (v - lambda)).ln() / k;
    Ok((age - ybar).max(0.0))
}

/// FR waiting rule: a new codeword goes out `delta` after the previous one
/// is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FRPolicy {
    delta: f64,
    period: f64,
}

impl FRPolicy {
    /// Requires `0 ≤ δ ≤ β`.
    pub fn new(cfg: &CodeConfig, delta: f64) -> Result<Self> {
        require_nonnegative("delta", delta)?;
        if delta > cfg.beta() * (1.0 + 1e-12) {
            return Err(invalid("delta", format!("{delta} exceeds the processing time {}", cfg.beta())));
        }
        let delta = delta.min(cfg.beta());
        Ok(Self { delta, period: cfg.codeword_time() + delta })
    }

    /// `δ* = [β - nT_b]⁺`.
    pub fn just_in_time(cfg: &CodeConfig) -> Self {
        Self::new(cfg, fr_optimal_delta(cfg)).expect("δ* lies in [0, β]")
    }

    /// `δ = β`: wait for the feedback of every attempt.
    pub fn non_enhanced(cfg: &CodeConfig) -> Self {
        Self::new(cfg, cfg.beta()).expect("β lies in [0, β]")
    }

    pub fn for_mode(cfg: &CodeConfig, mode: DelayMode) -> Self {
        match mode {
            DelayMode::Original => Self::non_enhanced(cfg),
            DelayMode::Enhanced => Self::just_in_time(cfg),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Nominal inter-transmission period `nT_b + δ`.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Steady-state spacing of decoding completions, `max{nT_b + δ, β}`.
    pub fn effective_period(&self, cfg: &CodeConfig) -> f64 {
        self.period.max(cfg.beta())
    }

    /// Age of a sample when its decoding ends: `n̄` plus the time it queues
    /// behind an unfinished decode, `[β - nT_b - δ]⁺`.
    pub fn decode_age(&self, cfg: &CodeConfig) -> f64 {
        cfg.nbar() + (cfg.beta() - self.period).max(0.0)
    }
}

/// `δ* = [β - nT_b]⁺`.
pub fn fr_optimal_delta(cfg: &CodeConfig) -> f64 {
    (cfg.beta() - cfg.codeword_time()).max(0.0)
}

/// Long-term average MMSE of FR with waiting offset `δ`:
///
/// `σ²/2θ (1 - (1-2^{-2ℓ}) e^{-2θA₀} p₀(1-e^{-2θK}) / (2θK(1-(1-p₀)e^{-2θK})))`
///
/// with `K = max{nT_b + δ, β}` and decode age `A₀ = n̄ + [β - nT_b - δ]⁺`.
/// For `δ ≥ δ*` this is `K = nT_b + δ`, `A₀ = n̄`; below `δ*` codewords
/// queue at the receiver, which then decodes back to back.
pub fn fr_mmse(params: &OuParams, cfg: &CodeConfig, p0: f64, delta: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(invalid("p0", format!("must lie in (0, 1], got {p0}")));
    }
    let policy = FRPolicy::new(cfg, delta)?;
    let v = params.steady_state_variance();
    let k = 2.0 * params.theta();
    let period = policy.effective_period(cfg);
    let one_minus_z = -(-k * period).exp_m1();
    let renewal = p0 * one_minus_z / (k * period * (p0 + (1.0 - p0) * one_minus_z));
    let decay = (-k * policy.decode_age(cfg)).exp();
    Ok(v * (1.0 - (1.0 - distortion_factor(cfg.ell())) * decay * renewal))
}

/// Ratio objective of the original FR scheme when the first transmission
/// of an epoch is delayed by `w1` and all later ones go out immediately.
/// Each attempt takes `n̄` and succeeds with probability `p0`.
pub fn fr_epoch_ratio(g: &AgePenalty, cfg: &CodeConfig, p0: f64, w1: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(invalid("p0", format!("must lie in (0, 1], got {p0}")));
    }
    require_nonnegative("w1", w1)?;
    let nbar = cfg.nbar();
    let length = w1 + nbar / p0;
    let area = match g {
        AgePenalty::MmseOu(m) => {
            let k = 2.0 * m.params().theta();
            let one_minus_z = -(-k * nbar).exp_m1();
            let z = 1.0 - one_minus_z;
            let end = (-k * w1).exp() * p0 * z / (p0 + (1.0 - p0) * one_minus_z);
            m.variance() * length - m.variance() * (1.0 - m.distortion()) / k * (-k * nbar).exp() * (1.0 - end)
        }
        AgePenalty::Custom(_) => {
            let mut total = 0.0;
            let mut running = g.integral(nbar, nbar + w1);
            let mut mass = p0;
            let mut remaining = 1.0;
            let mut end = nbar + w1;
            for _ in 0..10_000_000 {
                running += g.integral(end, end + nbar);
                end += nbar;
                total += mass * running;
                remaining -= mass;
                mass *= 1.0 - p0;
                if remaining <= 1e-15 || mass == 0.0 {
                    break;
                }
            }
            total
        }
    };
    Ok(area / length)
}

/// Outcome of the FR zero-wait witness.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroWaitCheck {
    /// Grid value with the smallest objective (first one on ties).
    pub argmin: f64,
    pub objective: Vec<f64>,
}

/// Evaluates [`fr_epoch_ratio`] over `grid` and returns the minimizer.
pub fn fr_zero_wait_check(g: &AgePenalty, cfg: &CodeConfig, p0: f64, grid: &[f64]) -> Result<ZeroWaitCheck> {
    if !grid.contains(&0.0) {
        return Err(invalid("grid", "the waiting grid must contain 0"));
    }
    let objective = grid
        .iter()
        .map(|&w| fr_epoch_ratio(g, cfg, p0, w))
        .collect::<Result<Vec<_>>>()?;
    let best = objective
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < objective[best] { i } else { best });
    Ok(ZeroWaitCheck { argmin: grid[best], objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{iir_delay_distribution, mds_success_probs, DEFAULT_TAIL_TOL};
    use approx::assert_relative_eq;

    fn setup(theta: f64, ell: u32, n: u32, eps: f64, beta: f64) -> (OuParams, CodeConfig, AgePenalty, DelayDistribution) {
        let params = OuParams::new(theta, 1.0).unwrap();
        let cfg = CodeConfig::new(ell, n, 0.05, beta).unwrap();
        let g = AgePenalty::mmse_ou(params, ell).unwrap();
        let (_, dist) = iir_delay_distribution(&cfg, eps, DelayMode::Enhanced, DEFAULT_TAIL_TOL).unwrap();
        (params, cfg, g, dist)
    }

    #[test]
    fn solve_reproduces_known_value() {
        let (_, _, g, dist) = setup(0.01, 5, 7, 0.1, 0.15);
        let policy = solve_iir(&g, &dist, SolverOptions::default()).unwrap();
        assert_relative_eq!(policy.lambda_star(), 0.83099, max_relative = 1e-4);
        assert_relative_eq!(policy.ratio_objective(), policy.lambda_star(), max_relative = 1e-8);
    }

    #[test]
    fn p_iir_decreases() {
        let (_, _, g, dist) = setup(0.5, 2, 4, 0.4, 0.15);
        let m = g.as_mmse().unwrap();
        let values: Vec<f64> = (0..50)
            .map(|i| m.floor() + (m.variance() - m.floor()) * i as f64 / 50.0)
            .map(|l| p_iir(l, &g, &dist).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn constant_penalty_solves_to_constant() {
        let g = AgePenalty::custom("flat", |_| 3.0, 10.0, Some(3.0)).unwrap();
        let dist = DelayDistribution::new(vec![0.3, 0.5], vec![0.5, 0.5], 0.0).unwrap();
        let policy = solve_iir(&g, &dist, SolverOptions::default()).unwrap();
        assert_relative_eq!(policy.lambda_star(), 3.0, max_relative = 1e-9);
    }

    #[test]
    fn closed_form_wait_agrees_with_inverse() {
        let (params, _, g, dist) = setup(0.25, 4, 6, 0.1, 0.15);
        let gf = GFunction::new(&g, &dist);
        for (ybar, lambda) in [(0.35, 1.0), (0.5, 1.5), (3.0, 0.4)] {
            let a = iir_waiting_closed_form(ybar, lambda, &params, 4, &dist).unwrap();
            let b = gf.inverse(ybar, lambda).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        assert!(iir_waiting_closed_form(0.3, 2.0, &params, 4, &dist).is_err());
    }

    #[test]
    fn optimal_delta_examples() {
        let c = |beta| CodeConfig::new(5, 7, 0.05, beta).unwrap();
        assert_eq!(fr_optimal_delta(&c(0.15)), 0.0);
        assert_relative_eq!(fr_optimal_delta(&c(0.5)), 0.15, max_relative = 1e-12);
        assert_eq!(fr_optimal_delta(&c(0.35)), 0.0);
        let jit = FRPolicy::just_in_time(&c(0.5));
        assert_relative_eq!(jit.period(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn fr_mmse_limits() {
        let params = OuParams::new(0.25, 1.0).unwrap();
        let cfg = CodeConfig::new(4, 6, 0.05, 0.15).unwrap();
        assert_relative_eq!(fr_mmse(&params, &cfg, 1e-300, 0.0).unwrap(), 2.0, max_relative = 1e-12);
        assert!(fr_mmse(&params, &cfg, 0.0, 0.0).is_err());
        assert!(fr_mmse(&params, &cfg, 0.5, 0.2).is_err());
        let floor = 2.0 / 256.0;
        let v = fr_mmse(&params, &cfg, 0.9, 0.0).unwrap();
        assert!(v > floor && v < 2.0);
    }

    #[test]
    fn fr_mmse_matches_epoch_ratio_for_original_scheme() {
        let (params, cfg, g, _) = setup(0.25, 4, 6, 0.1, 0.15);
        let p0 = mds_success_probs(&cfg, 0.1, 0).unwrap().p(0);
        let a = fr_mmse(&params, &cfg, p0, cfg.beta()).unwrap();
        let b = fr_epoch_ratio(&g, &cfg, p0, 0.0).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn custom_epoch_ratio_matches_mmse_closed_form() {
        let (_, cfg, g, _) = setup(0.25, 4, 6, 0.1, 0.15);
        let m = *g.as_mmse().unwrap();
        let custom = AgePenalty::custom("h", move |a| g.value(a), 50.0, Some(m.variance())).unwrap();
        let g = AgePenalty::MmseOu(m);
        for w in [0.0, 0.7] {
            let a = fr_epoch_ratio(&g, &cfg, 0.6, w).unwrap();
            let b = fr_epoch_ratio(&custom, &cfg, 0.6, w).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_wait_grid_of_zero() {
        let (_, cfg, g, _) = setup(0.5, 2, 4, 0.1, 0.15);
        assert_eq!(fr_zero_wait_check(&g, &cfg, 0.9, &[0.0]).unwrap().argmin, 0.0);
        assert!(fr_zero_wait_check(&g, &cfg, 0.9, &[0.1]).is_err());
    }

    #[test]
    fn policy_csv() {
        let (_, _, g, dist) = setup(0.01, 5, 7, 0.1, 0.15);
        let policy = solve_iir(&g, &dist, SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        policy.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ybar,wait\n"));
        assert_eq!(text.lines().count(), dist.len() + 1);
    }
}
