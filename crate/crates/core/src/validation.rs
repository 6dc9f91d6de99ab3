//! Invariant and oracle suite behind `sqe validate`. Each check reports the
//! measured deviation next to the tolerance it is held to.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::channel::{
    enhanced_saving_units, iir_delay_distribution_capped, iir_delay_for_ir_bits, mds_success_probs,
    simulate_timeline_iir, CodeConfig, DelayDistribution, DelayMode, ThresholdDecoder,
};
use crate::error::Result;
use crate::experiments::ExperimentConfig;
use crate::ou::ou_path_with;
use crate::penalty::{AgePenalty, GFunction};
use crate::policy::{
    fr_mmse, fr_optimal_delta, fr_zero_wait_check, iir_waiting_closed_form, p_iir, solve_iir, FRPolicy,
};
use crate::quantizer::lloyd_fit;
use crate::rng::{self, streams};
use crate::sim::{simulate_fr, simulate_iir};

/// Deliberate faults for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Injection {
    /// Drop the last pmf atom without booking it as truncated mass.
    TailDroppedPmf,
    /// Audit a penalty that decreases somewhere.
    NonMonotonePenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst deviation observed (or a 0/1 indicator for boolean checks).
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn within(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), measured, tolerance, pass: measured <= tolerance, detail: detail.into() }
    }

    fn failed(name: &str, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), measured: f64::INFINITY, tolerance, pass: false, detail: detail.into() }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} measured={:.3e} tolerance={:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "  ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Header `check,measured,tolerance,pass,detail`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "check,measured,tolerance,pass,detail")?;
        for c in &self.checks {
            writeln!(out, "{},{},{},{},{}", c.name, c.measured, c.tolerance, c.pass, c.detail.replace(',', ";"))?;
        }
        Ok(())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

pub const MASS_TOL: f64 = 1e-12;
pub const ROUND_TRIP_TOL: f64 = 1e-10;
/// Ratios `β/T_b` exercised by the delay-saving check.
pub const SAVING_RATIOS: [f64; 6] = [0.2, 0.5, 1.0, 1.5, 2.0, 3.7];
pub const SAVING_MAX_R: usize = 50;

/// Code configurations examined: the tracking pair at the configured `β`
/// and at each ratio in [`SAVING_RATIOS`].
fn code_configs(config: &ExperimentConfig) -> Result<Vec<CodeConfig>> {
    let (ell, n) = (config.tracking.ell, config.tracking.n);
    let mut betas = vec![config.beta];
    betas.extend(SAVING_RATIOS.iter().map(|r| r * config.tb));
    betas.into_iter().map(|b| CodeConfig::new(ell, n, config.tb, b)).collect()
}

struct Case {
    mode: DelayMode,
    dist: DelayDistribution,
}

fn cases(config: &ExperimentConfig) -> Result<Vec<Case>> {
    let tol = &config.tolerances;
    let mut out = Vec::new();
    for cfg in code_configs(config)? {
        for &epsilon in &config.epsilon {
            for mode in [DelayMode::Original, DelayMode::Enhanced] {
                let (_, dist) = iir_delay_distribution_capped(&cfg, epsilon, mode, tol.tail_tol, tol.support_cap)?;
                out.push(Case { mode, dist });
            }
        }
    }
    Ok(out)
}

/// Runs the full suite on `config`, optionally with one injected fault.
pub fn validate(config: &ExperimentConfig, injection: Option<Injection>) -> Result<ValidationReport> {
    config.validate()?;
    let params = config.params()?;
    let cases = cases(config)?;
    let g = AgePenalty::mmse_ou(params, config.tracking.ell)?;
    let mut checks = Vec::new();

    // pmf mass conservation
    let mut worst = 0.0f64;
    for c in &cases {
        let dist = if injection == Some(Injection::TailDroppedPmf) {
            let keep = c.dist.len().saturating_sub(1).max(1);
            DelayDistribution::from_parts_unchecked(
                c.dist.support()[..keep].to_vec(),
                c.dist.pmf()[..keep].to_vec(),
                c.dist.truncated_mass(),
            )?
        } else {
            c.dist.clone()
        };
        worst = worst.max(dist.mass_defect());
    }
    checks.push(CheckResult::within("pmf_mass_conservation", worst, MASS_TOL, format!("{} delay laws", cases.len())));

    // custom-penalty construction audit
    let audited = match injection {
        Some(Injection::NonMonotonePenalty) => {
            AgePenalty::custom("dip", |a: f64| a + 2.0 * (-(a - 5.0).powi(2)).exp(), 50.0, None)
        }
        _ => AgePenalty::custom("affine", |a: f64| 0.5 + a, 50.0, None),
    };
    checks.push(match audited {
        Ok(_) => CheckResult::within("penalty_audit", 0.0, 0.0, ""),
        Err(e) => CheckResult::failed("penalty_audit", 0.0, e.to_string()),
    });

    // G(ȳ, G⁻¹(ȳ, λ)) = λ wherever the inverse wait is positive
    let mut worst = 0.0f64;
    let mut probes = 0usize;
    for c in &cases {
        let gf = GFunction::new(&g, &c.dist);
        let m = g.as_mmse().expect("mmse penalty");
        for i in 1..10 {
            let lambda = m.floor() + (m.variance() - m.floor()) * i as f64 / 10.0;
            let a = gf.threshold_age(lambda)?;
            for ybar in [0.0, 0.25 * a, 0.5 * a] {
                let w = gf.inverse(ybar, lambda)?;
                if w > 0.0 {
                    worst = worst.max((gf.value(ybar, w) - lambda).abs());
                    probes += 1;
                }
            }
        }
    }
    checks.push(CheckResult::within("g_round_trip", worst, ROUND_TRIP_TOL, format!("{probes} probes")));

    // optimal waits have the form [A - ȳ]⁺ and match the closed form
    let mut worst = 0.0f64;
    let mut structure_ok = true;
    let mut residual = 0.0f64;
    let mut p_monotone = true;
    for c in &cases {
        let policy = solve_iir(&g, &c.dist, config.tolerances.solver())?;
        let a = policy.threshold_age();
        let ybars: Vec<f64> = (0..=40).map(|i| a.max(1.0) * 1.5 * i as f64 / 40.0).collect();
        let mut prev = f64::INFINITY;
        for &ybar in &ybars {
            let w = policy.wait(ybar);
            let closed = iir_waiting_closed_form(ybar, policy.lambda_star(), &params, config.tracking.ell, &c.dist)?;
            worst = worst.max((w - closed).abs());
            let expected = (a - ybar).max(0.0);
            structure_ok &= w <= prev && (w - expected).abs() <= 1e-9 * a.abs().max(1.0);
            prev = w;
        }
        residual = residual.max(policy.residual().abs() / policy.dist().mean());
        let m = g.as_mmse().expect("mmse penalty");
        let mut last = f64::INFINITY;
        for i in 0..=20 {
            let lambda = m.floor() + (m.variance() - m.floor()) * (i as f64 / 20.0) * (1.0 - 1e-9);
            let p = p_iir(lambda, &g, &c.dist)?;
            p_monotone &= p < last;
            last = p;
        }
    }
    checks.push(CheckResult::within(
        "threshold_structure",
        if structure_ok { worst } else { f64::INFINITY },
        1e-9,
        "wait vs closed form",
    ));
    checks.push(CheckResult::within(
        "dinkelbach_residual",
        residual,
        1e-6,
        "|p(λ*)| / E[Y]",
    ));
    checks.push(CheckResult::within("dinkelbach_p_decreasing", if p_monotone { 0.0 } else { 1.0 }, 0.0, ""));

    // enhanced delay is stochastically no larger than the original
    let mut worst = 0.0f64;
    for pair in cases.chunks(2) {
        let (orig, enh) = (&pair[0].dist, &pair[1].dist);
        debug_assert!(pair[0].mode == DelayMode::Original && pair[1].mode == DelayMode::Enhanced);
        let cdf = |d: &DelayDistribution, t: f64| -> f64 {
            d.iter().take_while(|(y, _)| *y <= t * (1.0 + 1e-12)).map(|(_, p)| p).sum()
        };
        for &t in orig.support().iter().chain(enh.support()) {
            worst = worst.max(cdf(orig, t) - cdf(enh, t));
        }
    }
    checks.push(CheckResult::within("stochastic_dominance", worst, MASS_TOL, "max F_orig - F_enh"));

    // timeline vs analytic delays on integer slot counts
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for ratio in SAVING_RATIOS {
        let cfg = CodeConfig::new(config.tracking.ell, config.tracking.n, config.tb, ratio * config.tb)?;
        for r in 0..=SAVING_MAX_R {
            let mut dec = ThresholdDecoder { required_ir_bits: r };
            let enh = simulate_timeline_iir(&cfg, DelayMode::Enhanced, &mut dec)?.delay;
            let orig = simulate_timeline_iir(&cfg, DelayMode::Original, &mut dec)?.delay;
            let ok = enh == iir_delay_for_ir_bits(r, &cfg, DelayMode::Enhanced)
                && orig == iir_delay_for_ir_bits(r, &cfg, DelayMode::Original)
                && orig.checked_sub(enh) == Some(enhanced_saving_units(r, &cfg));
            mismatches += usize::from(!ok);
            total += 1;
        }
    }
    checks.push(CheckResult::within("enhanced_delay_exact", mismatches as f64, 0.0, format!("{total} cases")));

    // FR: zero wait is optimal and δ* minimizes the MMSE
    let mut zero_wait_fail = 0usize;
    let mut delta_gap = 0.0f64;
    for cfg in code_configs(config)? {
        for &eps in &config.epsilon {
            let p0 = mds_success_probs(&cfg, eps, 0)?.p(0);
            let grid: Vec<f64> = (0..200).map(|i| i as f64 * 2.0 * cfg.codeword_time() / 199.0).collect();
            zero_wait_fail += usize::from(fr_zero_wait_check(&g, &cfg, p0, &grid)?.argmin != 0.0);
            let star = fr_mmse(&params, &cfg, p0, fr_optimal_delta(&cfg))?;
            for i in 0..100 {
                let d = cfg.beta() * i as f64 / 99.0;
                delta_gap = delta_gap.max((star - fr_mmse(&params, &cfg, p0, d)?) / star);
            }
        }
    }
    checks.push(CheckResult::within("fr_zero_wait", zero_wait_fail as f64, 0.0, ""));
    checks.push(CheckResult::within("fr_just_in_time", delta_gap.max(0.0), 1e-12, "relative"));

    // Lloyd MSE never increases
    let mut rng = rng::stream(config.tracking.train_seed, streams::TRAINING);
    let path = ou_path_with(&params, config.tracking.train_horizon.min(20_000.0), config.tb, &mut rng)?;
    let fit = lloyd_fit(path.values(), 1 << config.tracking.ell, 500, config.tracking.lloyd_tol)?;
    let increase = fit.mse_history.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    checks.push(CheckResult {
        name: "lloyd_monotone_mse".into(),
        measured: increase,
        tolerance: 0.0,
        pass: fit.mse_is_monotone(),
        detail: format!("{} iterations", fit.iterations),
    });

    // Monte Carlo vs analytic at the tracking configuration
    let cfg = CodeConfig::new(config.tracking.ell, config.tracking.n, config.tb, config.beta)?;
    let eps = config.epsilon[0];
    let mode = config.mode();
    let (_, dist) = iir_delay_distribution_capped(
        &cfg,
        eps,
        mode,
        config.tolerances.tail_tol,
        config.tolerances.support_cap,
    )?;
    let policy = solve_iir(&g, &dist, config.tolerances.solver())?;
    let mut rng = rng::stream(config.seed, streams::CHANNEL);
    let stats = simulate_iir(&policy, &dist, &g, config.epochs, &mut rng)?;
    let z = (stats.average() - policy.lambda_star()).abs() / stats.stderr();
    checks.push(CheckResult::within("monte_carlo_iir", z, 3.0, "standard errors"));

    let p0 = mds_success_probs(&cfg, eps, 0)?.p(0);
    let fr = FRPolicy::for_mode(&cfg, mode);
    let stats = simulate_fr(&fr, p0, &cfg, &g, config.epochs, &mut rng)?;
    let analytic = fr_mmse(&params, &cfg, p0, fr.delta())?;
    let z = if stats.stderr() > 0.0 { (stats.average() - analytic).abs() / stats.stderr() } else { 0.0 };
    checks.push(CheckResult::within("monte_carlo_fr", z, 3.0, "standard errors"));

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig { epochs: 20_000, ..Default::default() };
        c.tracking.train_horizon = 2_000.0;
        c
    }

    #[test]
    fn default_suite_passes() {
        let report = validate(&quick(), None).unwrap();
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn dropped_tail_fails_mass_check() {
        let report = validate(&quick(), Some(Injection::TailDroppedPmf)).unwrap();
        assert!(!report.get("pmf_mass_conservation").unwrap().pass);
        assert!(report.get("penalty_audit").unwrap().pass);
    }

    #[test]
    fn non_monotone_penalty_fails_audit() {
        let report = validate(&quick(), Some(Injection::NonMonotonePenalty)).unwrap();
        assert!(!report.get("penalty_audit").unwrap().pass);
        assert!(report.get("pmf_mass_conservation").unwrap().pass);
    }
}
