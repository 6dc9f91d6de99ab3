//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
//! as constants next to each check. Runs without the libtest harness so the
//! report is always printed.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use sqe::channel::{
    iir_delay_distribution, mds_success_probs, simulate_timeline_iir, CodeConfig, DelayMode, DelayUnits,
    ThresholdDecoder, DEFAULT_TAIL_TOL,
};
use sqe::error::Result;
use sqe::experiments::{enhancement_ratio, sweep_beta, sweep_ln, track, ExperimentConfig, Optimum};
use sqe::ou::OuParams;
use sqe::penalty::AgePenalty;
use sqe::policy::{fr_mmse, fr_optimal_delta, fr_zero_wait_check, solve_iir, FRPolicy, SolverOptions};
use sqe::rng;
use sqe::sim::{simulate_fr, simulate_iir};
use sqe::validation::validate;

const TB: f64 = 0.05;

type Verdict = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Verdict);

fn pair(o: Option<Optimum>) -> Option<(u32, u32)> {
    o.map(|o| (o.ell, o.n))
}

/// Optimal `(ℓ, n)` pairs at the published operating points.
fn criterion_1() -> Verdict {
    const RUNTIME_LIMIT_S: f64 = 120.0;
    let cases = [(0.01, 0.1, (5, 7)), (0.01, 0.4, (4, 6)), (0.5, 0.1, (2, 4)), (0.5, 0.4, (2, 4))];
    let mut ok = true;
    let mut notes = Vec::new();
    let mut slowest = 0.0f64;
    for (theta, eps, want) in cases {
        let config = ExperimentConfig { theta, epsilon: vec![eps], beta: 0.15, ..Default::default() };
        let start = Instant::now();
        let r = &sweep_ln(&config)?[0];
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let (iir, fr) = (pair(r.best_iir), pair(r.best_fr));
        ok &= iir == Some(want) && fr == Some(want);
        notes.push(format!("θ={theta} ε={eps}: IIR {iir:?} FR {fr:?}"));
    }
    ok &= slowest < RUNTIME_LIMIT_S;
    notes.push(format!("slowest sweep {slowest:.2}s"));
    Ok((ok, notes.join("; ")))
}

/// The long-processing regime.
fn criterion_2() -> Verdict {
    let config = ExperimentConfig { theta: 0.01, epsilon: vec![0.4], beta: 1.0, ..Default::default() };
    let r = &sweep_ln(&config)?[0];
    let (iir, fr) = (pair(r.best_iir), pair(r.best_fr));
    Ok((iir == Some((4, 10)) && fr == Some((4, 18)), format!("IIR {iir:?} FR {fr:?}")))
}

/// Closed forms vs Monte Carlo on random configurations.
fn criterion_3() -> Verdict {
    const CONFIGS: usize = 20;
    const EPOCHS: u64 = 1_000_000;
    const MAX_Z: f64 = 3.0;
    const MAX_REL: f64 = 0.005;
    let mut draw = rng::stream(2026, 7);
    let (mut worst_z, mut worst_rel) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for i in 0..CONFIGS {
        let theta = draw.random_range(0.01..0.5);
        let ell = draw.random_range(2..=6u32);
        let n = ell + draw.random_range(2..=4u32);
        let eps = draw.random_range(0.05..0.35);
        let beta = draw.random_range(0.0..0.6);
        let mode = DelayMode::from_enhanced(i % 2 == 0);

        let params = OuParams::new(theta, 1.0)?;
        let cfg = CodeConfig::new(ell, n, TB, beta)?;
        let g = AgePenalty::mmse_ou(params, ell)?;
        let (sp, dist) = iir_delay_distribution(&cfg, eps, mode, DEFAULT_TAIL_TOL)?;
        let mut sim_rng = rng::stream(1000 + i as u64, rng::streams::CHANNEL);

        let policy = solve_iir(&g, &dist, SolverOptions::default())?;
        let iir = simulate_iir(&policy, &dist, &g, EPOCHS, &mut sim_rng)?;
        let fr_policy = FRPolicy::for_mode(&cfg, mode);
        let fr = simulate_fr(&fr_policy, sp.p(0), &cfg, &g, EPOCHS, &mut sim_rng)?;
        let fr_analytic = fr_mmse(&params, &cfg, sp.p(0), fr_policy.delta())?;

        for (label, sim, analytic) in [("iir", iir, policy.lambda_star()), ("fr", fr, fr_analytic)] {
            let diff = (sim.average() - analytic).abs();
            let z = if sim.stderr() > 0.0 { diff / sim.stderr() } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
            let rel = diff / analytic;
            worst_z = worst_z.max(z);
            worst_rel = worst_rel.max(rel);
            if z > MAX_Z || rel > MAX_REL {
                failures.push(format!(
                    "{label} θ={theta:.3} ({ell},{n}) ε={eps:.3} β={beta:.3} {mode:?}: z={z:.2} rel={rel:.2e}"
                ));
            }
        }
    }
    let mut detail = format!("{CONFIGS} configs × 2 schemes, worst z {worst_z:.2}, worst rel {worst_rel:.2e}");
    if !failures.is_empty() {
        detail.push_str(&format!("; outside: {}", failures.join(" | ")));
    }
    Ok((failures.is_empty(), detail))
}

/// Bisection vs brute-force search over constant-threshold rules.
fn criterion_4() -> Verdict {
    const MAX_REL: f64 = 1e-4;
    let cases = [
        (0.01, 5, 7, 0.1, 0.15, DelayMode::Enhanced),
        (0.01, 4, 6, 0.4, 0.15, DelayMode::Enhanced),
        (0.01, 4, 10, 0.4, 1.0, DelayMode::Enhanced),
        (0.05, 3, 6, 0.2, 0.3, DelayMode::Original),
        (0.1, 4, 7, 0.3, 0.03, DelayMode::Enhanced),
        (0.25, 3, 5, 0.1, 0.15, DelayMode::Original),
        (0.25, 4, 6, 0.4, 0.4, DelayMode::Enhanced),
        (0.5, 2, 4, 0.1, 0.15, DelayMode::Enhanced),
        (0.5, 2, 4, 0.4, 0.6, DelayMode::Original),
        (1.0, 1, 3, 0.25, 0.08, DelayMode::Enhanced),
    ];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (theta, ell, n, eps, beta, mode) in cases {
        let params = OuParams::new(theta, 1.0)?;
        let cfg = CodeConfig::new(ell, n, TB, beta)?;
        let (_, dist) = iir_delay_distribution(&cfg, eps, mode, DEFAULT_TAIL_TOL)?;
        let g = AgePenalty::mmse_ou(params, ell)?;
        let lambda = solve_iir(&g, &dist, SolverOptions::default())?.lambda_star();
        let nbar = cfg.nbar();
        let oracle = common::grid_min(&dist, nbar, nbar + 20.0 / theta, |a| common::h_int(theta, ell, a));
        let rel = (oracle - lambda).abs() / lambda;
        worst = worst.max(rel);
        ok &= rel <= MAX_REL;
    }
    Ok((ok, format!("{} configs, worst relative gap {worst:.2e} (tolerance {MAX_REL:e})", cases.len())))
}

/// Timeline delays vs closed-form delays and savings, in integer slots.
fn criterion_5() -> Verdict {
    // β/T_b as exact fractions
    const RATIOS: [(u64, u64); 6] = [(1, 5), (1, 2), (1, 1), (3, 2), (2, 1), (37, 10)];
    const N: u64 = 7;
    let mut mismatches = Vec::new();
    let mut total = 0;
    for (num, den) in RATIOS {
        let beta = TB * num as f64 / den as f64;
        let cfg = CodeConfig::new(5, N as u32, TB, beta)?;
        for r in 0..=50u64 {
            let orig_want = DelayUnits::new(N + r, r + 1);
            let (enh_want, saving_want) = if num < den {
                (DelayUnits::new(N + r, 1), DelayUnits::new(0, r))
            } else {
                let kappa = (0..=r).find(|k| k * num / den >= r).unwrap();
                (DelayUnits::new(N, kappa + 1), DelayUnits::new(r, r - kappa))
            };
            let mut dec = ThresholdDecoder { required_ir_bits: r as usize };
            let enh = simulate_timeline_iir(&cfg, DelayMode::Enhanced, &mut dec)?.delay;
            let orig = simulate_timeline_iir(&cfg, DelayMode::Original, &mut dec)?.delay;
            let saving = orig.checked_sub(enh);
            let times_match = enh.time(&cfg) == enh_want.time(&cfg) && orig.time(&cfg) == orig_want.time(&cfg);
            if enh != enh_want || orig != orig_want || saving != Some(saving_want) || !times_match {
                mismatches.push(format!("β/T_b={num}/{den} r={r}"));
            }
            total += 1;
        }
    }
    Ok((mismatches.is_empty(), format!("{total} cases, {} mismatches {mismatches:?}", mismatches.len())))
}

fn fr_configs() -> Vec<(f64, u32, u32, f64, f64)> {
    let thetas = [0.01, 0.1, 0.25, 0.5, 1.0];
    let codes = [(2, 4, 0.1, 0.15), (4, 6, 0.4, 0.5), (5, 7, 0.1, 0.05), (3, 8, 0.3, 1.2)];
    thetas
        .iter()
        .flat_map(|&t| codes.iter().map(move |&(l, n, e, b)| (t, l, n, e, b)))
        .collect()
}

/// Zero wait minimizes the original FR epoch ratio.
fn criterion_6() -> Verdict {
    const GRID: usize = 200;
    let configs = fr_configs();
    let mut bad = Vec::new();
    for &(theta, ell, n, eps, beta) in &configs {
        let params = OuParams::new(theta, 1.0)?;
        let cfg = CodeConfig::new(ell, n, TB, beta)?;
        let p0 = mds_success_probs(&cfg, eps, 0)?.p(0);
        let g = AgePenalty::mmse_ou(params, ell)?;
        let top = 10.0 * cfg.nbar();
        let grid: Vec<f64> = (0..GRID).map(|i| top * i as f64 / (GRID - 1) as f64).collect();
        let check = fr_zero_wait_check(&g, &cfg, p0, &grid)?;
        if check.argmin != 0.0 {
            bad.push(format!("θ={theta} ({ell},{n}) argmin {}", check.argmin));
        }
    }
    Ok((bad.is_empty(), format!("{} configs, {GRID}-point grid, non-zero argmins: {bad:?}", configs.len())))
}

/// `δ*` minimizes the FR MMSE over `δ ∈ [0, β]`.
fn criterion_7() -> Verdict {
    const GRID: usize = 100;
    // rounding slack when a grid point coincides with δ*
    const ROUND: f64 = 1e-12;
    let configs = fr_configs();
    let mut worst = f64::NEG_INFINITY;
    for &(theta, ell, n, eps, beta) in &configs {
        let params = OuParams::new(theta, 1.0)?;
        let cfg = CodeConfig::new(ell, n, TB, beta)?;
        let p0 = mds_success_probs(&cfg, eps, 0)?.p(0);
        let star = fr_mmse(&params, &cfg, p0, fr_optimal_delta(&cfg))?;
        for i in 0..GRID {
            let d = beta * i as f64 / (GRID - 1) as f64;
            worst = worst.max((star - fr_mmse(&params, &cfg, p0, d)?) / star);
        }
    }
    Ok((
        worst <= ROUND,
        format!("{} configs, {GRID}-point δ grid, max (mmse(δ*) - min grid)/mmse(δ*) = {worst:.2e}", configs.len()),
    ))
}

/// Crossover and enhancement-ratio behavior at θ = 0.25.
fn criterion_8() -> Verdict {
    const FR_BAND: (f64, f64) = (0.13, 0.23);
    const IIR_BAND: (f64, f64) = (0.09, 0.19);
    let config = ExperimentConfig { theta: 0.25, epsilon: vec![0.1, 0.4], ..Default::default() };
    let sweeps = sweep_beta(&config)?;
    let (sw1, sw4) = (sweeps[0].beta_sw, sweeps[1].beta_sw);
    let crossover_ok = matches!((sw1, sw4), (Some(a), Some(b)) if b > a);

    let studies = enhancement_ratio(&config)?;
    let peak = |pick: fn(&sqe::experiments::EnhancementStudy) -> Option<(f64, f64)>| {
        studies.iter().filter_map(pick).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    };
    let (fr_peak, iir_peak) = (peak(|s| s.peak_fr), peak(|s| s.peak_iir));
    let in_band = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
    let ok = crossover_ok && in_band(fr_peak, FR_BAND) && in_band(iir_peak, IIR_BAND);
    Ok((
        ok,
        format!(
            "β_sw(0.1)={sw1:?} β_sw(0.4)={sw4:?}; peak FR {:.2}%, peak IIR {:.2}%",
            100.0 * fr_peak,
            100.0 * iir_peak
        ),
    ))
}

/// Tracking at the demo configuration.
fn criterion_9() -> Verdict {
    const SINGLE_BAND: (f64, f64) = (0.6, 1.2);
    const SEEDS: u64 = 50;
    const MAX_REL: f64 = 0.10;
    let config = ExperimentConfig { seeds: SEEDS, ..Default::default() };
    let report = track(&config)?;
    let mut ok = report.schemes.len() == 2;
    let mut notes = Vec::new();
    for s in &report.schemes {
        let single = s.single.empirical_mse;
        let rel = (s.seeds.mean - s.analytic_mmse).abs() / s.analytic_mmse;
        ok &= (SINGLE_BAND.0..=SINGLE_BAND.1).contains(&single) && rel <= MAX_REL;
        notes.push(format!(
            "{}: path {single:.3}, {SEEDS}-seed mean {:.3} vs analytic {:.3} ({:.1}%)",
            s.scheme.label(),
            s.seeds.mean,
            s.analytic_mmse,
            100.0 * rel
        ));
    }
    Ok((ok, notes.join("; ")))
}

/// Property suite under `validate`.
fn criterion_10() -> Verdict {
    let report = validate(&ExperimentConfig::default(), None)?;
    for c in &report.checks {
        println!("       {c}");
    }
    let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
    Ok((report.all_passed(), format!("{} checks, failed: {failed:?}", report.checks.len())))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("optimal (ℓ, n) pairs", criterion_1),
        ("long-processing optimal pairs", criterion_2),
        ("closed form vs Monte Carlo", criterion_3),
        ("bisection vs threshold grid search", criterion_4),
        ("enhanced delay savings exact", criterion_5),
        ("FR zero-wait optimality", criterion_6),
        ("FR just-in-time optimality", criterion_7),
        ("IIR/FR crossover and enhancement ratios", criterion_8),
        ("tracking MSE", criterion_9),
        ("property suite", criterion_10),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "{} criterion {:>2}: {title} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
