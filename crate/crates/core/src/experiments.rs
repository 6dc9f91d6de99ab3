//! Parameter studies behind the command-line driver: optimal `(ℓ, n)`
//! sweeps, IIR/FR comparison over the processing time, enhancement ratios
//! and the tracking demo. Every study is a pure function of its
//! [`ExperimentConfig`]; writers turn results into CSV files plus gnuplot
//! scripts that read them.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::channel::{iir_delay_distribution_capped, mds_success_probs, CodeConfig, DelayMode, SuccessProbs};
use crate::error::{invalid, Result};
use crate::ou::{ou_path_with, OuParams};
use crate::penalty::AgePenalty;
use crate::policy::{fr_mmse, solve_iir, FRPolicy, IIRPolicy, SolverOptions};
use crate::quantizer::{lloyd_train, Codebook};
use crate::rng::{self, streams};
use crate::sim::{simulate_tracking, tracking_mse_over_seeds, Spread, TrackingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Iir,
    Fr,
    Both,
}

impl Scheme {
    pub fn includes_iir(self) -> bool {
        matches!(self, Self::Iir | Self::Both)
    }

    pub fn includes_fr(self) -> bool {
        matches!(self, Self::Fr | Self::Both)
    }
}

/// Numerical tolerances and caps used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual mass at which delay pmfs are truncated.
    pub tail_tol: f64,
    /// Maximum number of decoding attempts in a delay pmf.
    pub support_cap: usize,
    /// Relative bisection tolerance on `λ`.
    pub bisection_tol: f64,
    pub max_iter: usize,
    /// Absolute quadrature tolerance for custom penalties.
    pub quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tail_tol: 1e-12, support_cap: 100_000, bisection_tol: 1e-9, max_iter: 200, quad_tol: 1e-10 }
    }
}

impl Tolerances {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.bisection_tol, max_iter: self.max_iter }
    }
}

/// Evenly spaced processing times `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self { start: 0.0, stop: 2.0, step: 0.01 }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Settings of the tracking demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub ell: u32,
    pub n: u32,
    pub horizon: f64,
    /// Number of OU paths the codebook is trained on.
    pub train_paths: usize,
    /// Length of each training path.
    pub train_horizon: f64,
    pub lloyd_max_iter: usize,
    pub lloyd_tol: f64,
    /// Codebook CSV to load; required when `train` is false.
    pub codebook_path: Option<PathBuf>,
    pub train: bool,
    /// Seed of the training paths.
    pub train_seed: u64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            ell: 5,
            n: 7,
            horizon: 500.0,
            train_paths: 100,
            train_horizon: 20_000.0,
            lloyd_max_iter: 10_000,
            lloyd_tol: 1e-9,
            codebook_path: None,
            train: true,
            train_seed: 7,
        }
    }
}

/// One JSON document configuring every study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub sigma: f64,
    /// One crossover probability or a list of them.
    #[serde(deserialize_with = "one_or_many")]
    pub epsilon: Vec<f64>,
    pub tb: f64,
    pub beta: f64,
    /// Inclusive range of quantization bits.
    pub ell_range: [u32; 2],
    /// Inclusive range of `n - ℓ`.
    pub redundancy_range: [u32; 2],
    pub scheme: Scheme,
    pub enhanced: bool,
    pub epochs: u64,
    /// Number of seeds in multi-seed studies.
    pub seeds: u64,
    /// Base seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tolerances: Tolerances,
    pub beta_grid: BetaGrid,
    pub tracking: TrackingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            theta: 0.01,
            sigma: 1.0,
            epsilon: vec![0.1],
            tb: 0.05,
            beta: 0.15,
            ell_range: [1, 10],
            redundancy_range: [2, 20],
            scheme: Scheme::Both,
            enhanced: true,
            epochs: 1_000_000,
            seeds: 50,
            seed: 1,
            output_dir: PathBuf::from("out"),
            tolerances: Tolerances::default(),
            beta_grid: BetaGrid::default(),
            tracking: TrackingConfig::default(),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field; called before any computation.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if !(self.tb > 0.0 && self.tb.is_finite()) {
            return Err(invalid("tb", "must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be nonnegative"));
        }
        if self.epsilon.is_empty() {
            return Err(invalid("epsilon", "need at least one crossover probability"));
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(**e > 0.0 && **e < 0.5)) {
            return Err(invalid("epsilon", format!("{e} is outside (0, 1/2)")));
        }
        let [l0, l1] = self.ell_range;
        if l0 == 0 || l0 > l1 || l1 > 20 {
            return Err(invalid("ell_range", format!("need 1 <= lo <= hi <= 20, got [{l0}, {l1}]")));
        }
        let [r0, r1] = self.redundancy_range;
        if r0 > r1 {
            return Err(invalid("redundancy_range", format!("empty range [{r0}, {r1}]")));
        }
        if self.epochs == 0 || self.seeds == 0 {
            return Err(invalid("epochs", "epochs and seeds must be positive"));
        }
        let t = &self.tolerances;
        if !(t.tail_tol > 0.0 && t.tail_tol < 1.0) || t.support_cap == 0 {
            return Err(invalid("tolerances", "tail_tol must lie in (0, 1) and support_cap be positive"));
        }
        if !(t.bisection_tol > 0.0) || t.max_iter == 0 || !(t.quad_tol > 0.0) {
            return Err(invalid("tolerances", "bisection_tol, quad_tol and max_iter must be positive"));
        }
        let g = &self.beta_grid;
        if !(g.step > 0.0 && g.start >= 0.0 && g.stop >= g.start && g.stop.is_finite()) {
            return Err(invalid("beta_grid", "need 0 <= start <= stop and step > 0"));
        }
        let tr = &self.tracking;
        CodeConfig::new(tr.ell, tr.n, self.tb, self.beta)?;
        if tr.ell > 20 {
            return Err(invalid("tracking.ell", "at most 20 bits"));
        }
        if !(tr.horizon > 0.0 && tr.train_horizon > 0.0) || tr.train_paths == 0 {
            return Err(invalid("tracking", "horizons and train_paths must be positive"));
        }
        if !(tr.lloyd_tol > 0.0) || tr.lloyd_max_iter == 0 {
            return Err(invalid("tracking", "lloyd_tol and lloyd_max_iter must be positive"));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<OuParams> {
        OuParams::new(self.theta, self.sigma)
    }

    pub fn mode(&self) -> DelayMode {
        DelayMode::from_enhanced(self.enhanced)
    }

    /// Grid of `(ℓ, n)` pairs in sweep order.
    pub fn ln_grid(&self) -> Vec<(u32, u32)> {
        let [l0, l1] = self.ell_range;
        let [r0, r1] = self.redundancy_range;
        (l0..=l1).flat_map(|l| (r0..=r1).map(move |r| (l, l + r))).collect()
    }

    /// Seeds used by multi-seed studies: `seed, seed + 1, ...`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

/// Optimal IIR policy for `h_ℓ` under the given code and channel.
pub fn iir_policy(
    params: &OuParams,
    cfg: &CodeConfig,
    epsilon: f64,
    mode: DelayMode,
    tol: &Tolerances,
) -> Result<(SuccessProbs, IIRPolicy)> {
    let (sp, dist) = iir_delay_distribution_capped(cfg, epsilon, mode, tol.tail_tol, tol.support_cap)?;
    let g = AgePenalty::mmse_ou(*params, cfg.ell())?;
    Ok((sp, solve_iir(&g, &dist, tol.solver())?))
}

/// Optimal FR long-term MMSE; `δ*` for the enhanced scheme, `β` otherwise.
pub fn fr_value(params: &OuParams, cfg: &CodeConfig, epsilon: f64, mode: DelayMode) -> Result<f64> {
    let p0 = mds_success_probs(cfg, epsilon, 0)?.p(0);
    fr_mmse(params, cfg, p0, FRPolicy::for_mode(cfg, mode).delta())
}

/// Analytic MMSE of both schemes at one grid point; failures become notes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub ell: u32,
    pub n: u32,
    pub mmse_iir: Option<f64>,
    pub mmse_fr: Option<f64>,
    pub note: String,
}

fn evaluate_point(
    params: &OuParams,
    tb: f64,
    beta: f64,
    epsilon: f64,
    (ell, n): (u32, u32),
    mode: DelayMode,
    tol: &Tolerances,
) -> GridPoint {
    let mut notes = Vec::new();
    let (mut mmse_iir, mut mmse_fr) = (None, None);
    match CodeConfig::new(ell, n, tb, beta) {
        Err(e) => notes.push(format!("skipped: {e}")),
        Ok(cfg) => {
            match iir_policy(params, &cfg, epsilon, mode, tol) {
                Ok((_, p)) => mmse_iir = Some(p.lambda_star()),
                Err(e) => notes.push(format!("iir: {e}")),
            }
            match fr_value(params, &cfg, epsilon, mode) {
                Ok(v) => mmse_fr = Some(v),
                Err(e) => notes.push(format!("fr: {e}")),
            }
        }
    }
    GridPoint { ell, n, mmse_iir, mmse_fr, note: notes.join("; ") }
}

/// Best `(ℓ, n)` of one scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum {
    pub ell: u32,
    pub n: u32,
    pub mmse: f64,
}

fn keep_best(best: &mut Option<Optimum>, ell: u32, n: u32, value: Option<f64>) {
    if let Some(v) = value {
        if best.is_none_or(|b| v < b.mmse) {
            *best = Some(Optimum { ell, n, mmse: v });
        }
    }
}

/// Per-ℓ best `n` of each scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLnRow {
    pub ell: u32,
    pub iir: Option<Optimum>,
    pub fr: Option<Optimum>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLn {
    pub epsilon: f64,
    pub grid: Vec<GridPoint>,
    pub rows: Vec<SweepLnRow>,
    pub best_iir: Option<Optimum>,
    pub best_fr: Option<Optimum>,
}

/// For every `ε` and `ℓ`, minimizes the analytic long-term MMSE over `n`.
pub fn sweep_ln(config: &ExperimentConfig) -> Result<Vec<SweepLn>> {
    config.validate()?;
    let params = config.params()?;
    let grid = config.ln_grid();
    let mode = config.mode();
    let tol = config.tolerances;
    Ok(config
        .epsilon
        .iter()
        .map(|&eps| {
            let points: Vec<GridPoint> = grid
                .par_iter()
                .map(|&ln| evaluate_point(&params, config.tb, config.beta, eps, ln, mode, &tol))
                .collect();
            let mut rows: Vec<SweepLnRow> = Vec::new();
            let (mut best_iir, mut best_fr) = (None, None);
            for p in &points {
                if rows.last().is_none_or(|r| r.ell != p.ell) {
                    rows.push(SweepLnRow { ell: p.ell, iir: None, fr: None });
                }
                let row = rows.last_mut().expect("row pushed above");
                keep_best(&mut row.iir, p.ell, p.n, p.mmse_iir);
                keep_best(&mut row.fr, p.ell, p.n, p.mmse_fr);
                keep_best(&mut best_iir, p.ell, p.n, p.mmse_iir);
                keep_best(&mut best_fr, p.ell, p.n, p.mmse_fr);
            }
            SweepLn { epsilon: eps, grid: points, rows, best_iir, best_fr }
        })
        .collect())
}

/// Best IIR and FR MMSE over the `(ℓ, n)` grid at one processing time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub iir: Option<Optimum>,
    pub fr: Option<Optimum>,
}

fn best_at_beta(config: &ExperimentConfig, params: &OuParams, eps: f64, beta: f64, mode: DelayMode) -> BetaPoint {
    let (mut iir, mut fr) = (None, None);
    for ln in config.ln_grid() {
        let p = evaluate_point(params, config.tb, beta, eps, ln, mode, &config.tolerances);
        keep_best(&mut iir, p.ell, p.n, p.mmse_iir);
        keep_best(&mut fr, p.ell, p.n, p.mmse_fr);
    }
    BetaPoint { beta, iir, fr }
}

fn beta_curve(config: &ExperimentConfig, params: &OuParams, eps: f64, mode: DelayMode) -> Vec<BetaPoint> {
    config
        .beta_grid
        .values()
        .par_iter()
        .map(|&b| best_at_beta(config, params, eps, b, mode))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBeta {
    pub epsilon: f64,
    pub points: Vec<BetaPoint>,
    /// First grid `β` at which FR is no worse than IIR, after IIR has been
    /// strictly better.
    pub beta_sw: Option<f64>,
}

/// IIR vs FR over the processing time, each optimized over `(ℓ, n)`.
pub fn sweep_beta(config: &ExperimentConfig) -> Result<Vec<SweepBeta>> {
    config.validate()?;
    let params = config.params()?;
    Ok(config
        .epsilon
        .iter()
        .map(|&eps| {
            let points = beta_curve(config, &params, eps, config.mode());
            let beta_sw = crossover(&points);
            SweepBeta { epsilon: eps, points, beta_sw }
        })
        .collect())
}

fn crossover(points: &[BetaPoint]) -> Option<f64> {
    let mut iir_ahead = false;
    for p in points {
        let (Some(i), Some(f)) = (p.iir, p.fr) else { continue };
        if f.mmse <= i.mmse && iir_ahead {
            return Some(p.beta);
        }
        iir_ahead |= i.mmse < f.mmse;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPoint {
    pub beta: f64,
    pub enhanced: BetaPoint,
    pub original: BetaPoint,
    pub ratio_iir: Option<f64>,
    pub ratio_fr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancementStudy {
    pub epsilon: f64,
    pub points: Vec<RatioPoint>,
    /// `(β, ratio)` at the largest IIR ratio.
    pub peak_iir: Option<(f64, f64)>,
    pub peak_fr: Option<(f64, f64)>,
}

/// `1 - mmse_enhanced / mmse_original` per `β`, each side optimized over
/// `(ℓ, n)` on its own.
pub fn enhancement_ratio(config: &ExperimentConfig) -> Result<Vec<EnhancementStudy>> {
    config.validate()?;
    let params = config.params()?;
    let ratio = |e: Option<Optimum>, o: Option<Optimum>| Some(1.0 - e?.mmse / o?.mmse);
    let peak = |pts: &[RatioPoint], pick: fn(&RatioPoint) -> Option<f64>| {
        pts.iter()
            .filter_map(|p| pick(p).map(|r| (p.beta, r)))
            .fold(None, |best: Option<(f64, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
    };
    Ok(config
        .epsilon
        .iter()
        .map(|&eps| {
            let enhanced = beta_curve(config, &params, eps, DelayMode::Enhanced);
            let original = beta_curve(config, &params, eps, DelayMode::Original);
            let points: Vec<RatioPoint> = enhanced
                .into_iter()
                .zip(original)
                .map(|(e, o)| RatioPoint {
                    beta: e.beta,
                    enhanced: e,
                    original: o,
                    ratio_iir: ratio(e.iir, o.iir),
                    ratio_fr: ratio(e.fr, o.fr),
                })
                .collect();
            EnhancementStudy {
                epsilon: eps,
                peak_iir: peak(&points, |p| p.ratio_iir),
                peak_fr: peak(&points, |p| p.ratio_fr),
                points,
            }
        })
        .collect())
}

/// Trains the tracking codebook on `train_paths` stationary OU paths.
pub fn train_codebook(config: &ExperimentConfig) -> Result<Codebook> {
    let params = config.params()?;
    let tr = &config.tracking;
    let paths = (0..tr.train_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(tr.train_seed.wrapping_add(i), streams::TRAINING);
            ou_path_with(&params, tr.train_horizon, config.tb, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    lloyd_train(&paths, tr.ell, tr.lloyd_max_iter, tr.lloyd_tol)
}

/// Loads the configured codebook, or trains one when enabled.
pub fn tracking_codebook(config: &ExperimentConfig) -> Result<Codebook> {
    let tr = &config.tracking;
    match (&tr.codebook_path, tr.train) {
        (Some(path), false) => {
            if !path.exists() {
                return Err(invalid("tracking.codebook_path", format!("{} does not exist", path.display())));
            }
            Codebook::read_csv(BufReader::new(File::open(path)?))
        }
        (None, false) => Err(invalid("tracking", "no codebook_path given and training is disabled")),
        (_, true) => train_codebook(config),
    }
}

#[derive(Debug, Clone)]
pub struct TrackedScheme {
    pub scheme: TrackingScheme,
    pub analytic_mmse: f64,
    pub single: crate::sim::TrackingResult,
    pub seeds: Spread,
}

#[derive(Debug, Clone)]
pub struct TrackReport {
    pub codebook: Codebook,
    pub cfg: CodeConfig,
    pub epsilon: f64,
    pub schemes: Vec<TrackedScheme>,
}

/// Tracking demo at `config.tracking.{ell, n}` and the first `ε`: one
/// sample path at `config.seed` plus a multi-seed spread.
pub fn track(config: &ExperimentConfig) -> Result<TrackReport> {
    config.validate()?;
    let params = config.params()?;
    let codebook = tracking_codebook(config)?;
    track_with_codebook(config, &params, codebook)
}

pub fn track_with_codebook(config: &ExperimentConfig, params: &OuParams, codebook: Codebook) -> Result<TrackReport> {
    let tr = &config.tracking;
    let cfg = CodeConfig::new(tr.ell, tr.n, config.tb, config.beta)?;
    let eps = config.epsilon[0];
    let mode = config.mode();
    let (sp, policy) = iir_policy(params, &cfg, eps, mode, &config.tolerances)?;

    let mut candidates = Vec::new();
    if config.scheme.includes_iir() {
        candidates.push((TrackingScheme::iir(&policy, mode), policy.lambda_star()));
    }
    if config.scheme.includes_fr() {
        let fr = FRPolicy::for_mode(&cfg, mode);
        candidates.push((TrackingScheme::Fr { policy: fr }, fr_value(params, &cfg, eps, mode)?));
    }
    let seeds = config.seed_list();
    let schemes = candidates
        .into_iter()
        .map(|(scheme, analytic_mmse)| {
            let single = simulate_tracking(&scheme, &codebook, &sp, &cfg, params, tr.horizon, config.seed)?;
            let mses = tracking_mse_over_seeds(&scheme, &codebook, &sp, &cfg, params, tr.horizon, &seeds)?;
            Ok(TrackedScheme { scheme, analytic_mmse, single, seeds: Spread::of(&mses) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackReport { codebook, cfg, epsilon: eps, schemes })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_n(v: Option<Optimum>) -> (String, String) {
    match v {
        Some(o) => (o.n.to_string(), o.mmse.to_string()),
        None => (String::new(), String::new()),
    }
}

fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

/// Writes `sweep_ln_<eps>.csv` (per-ℓ optimum), `sweep_ln_grid_<eps>.csv`
/// (every grid point), `sweep_ln_best.csv` and `sweep_ln.gp`. Returns the
/// files written.
pub fn write_sweep_ln(results: &[SweepLn], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for r in results {
        let name = format!("sweep_ln_{}.csv", eps_tag(r.epsilon));
        let mut out = create(dir, &name)?;
        writeln!(out, "ell,n_best_iir,mmse_iir,n_best_fr,mmse_fr")?;
        for row in &r.rows {
            let (ni, mi) = opt_n(row.iir);
            let (nf, mf) = opt_n(row.fr);
            writeln!(out, "{},{ni},{mi},{nf},{mf}", row.ell)?;
        }
        files.push(dir.join(name));

        let name = format!("sweep_ln_grid_{}.csv", eps_tag(r.epsilon));
        let mut out = create(dir, &name)?;
        writeln!(out, "ell,n,mmse_iir,mmse_fr,note")?;
        for p in &r.grid {
            writeln!(out, "{},{},{},{},{}", p.ell, p.n, opt(p.mmse_iir), opt(p.mmse_fr), p.note.replace(',', ";"))?;
        }
        files.push(dir.join(name));
    }
    let mut out = create(dir, "sweep_ln_best.csv")?;
    writeln!(out, "epsilon,scheme,ell,n,mmse")?;
    for r in results {
        for (label, best) in [("iir", r.best_iir), ("fr", r.best_fr)] {
            if let Some(b) = best {
                writeln!(out, "{},{label},{},{},{}", r.epsilon, b.ell, b.n, b.mmse)?;
            }
        }
    }
    files.push(dir.join("sweep_ln_best.csv"));

    let mut gp = create(dir, "sweep_ln.gp")?;
    writeln!(gp, "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'ell'\nset ylabel 'long-term average MMSE'")?;
    writeln!(gp, "set terminal pngcairo size 900,600\nset output 'sweep_ln.png'")?;
    let plots: Vec<String> = results
        .iter()
        .flat_map(|r| {
            let f = format!("sweep_ln_{}.csv", eps_tag(r.epsilon));
            [
                format!("'{f}' using 1:3 with linespoints title 'IIR eps={}'", r.epsilon),
                format!("'{f}' using 1:5 with linespoints dashtype 2 title 'FR eps={}'", r.epsilon),
            ]
        })
        .collect();
    writeln!(gp, "plot {}", plots.join(", \\\n     "))?;
    files.push(dir.join("sweep_ln.gp"));
    Ok(files)
}

/// Writes `sweep_beta_<eps>.csv`, `sweep_beta_switch.csv` and
/// `sweep_beta.gp`.
pub fn write_sweep_beta(results: &[SweepBeta], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for r in results {
        let name = format!("sweep_beta_{}.csv", eps_tag(r.epsilon));
        let mut out = create(dir, &name)?;
        writeln!(out, "beta,mmse_iir,ell_iir,n_iir,mmse_fr,ell_fr,n_fr")?;
        for p in &r.points {
            writeln!(out, "{},{},{}", p.beta, optimum_cells(p.iir), optimum_cells(p.fr))?;
        }
        files.push(dir.join(name));
    }
    let mut out = create(dir, "sweep_beta_switch.csv")?;
    writeln!(out, "epsilon,beta_sw")?;
    for r in results {
        writeln!(out, "{},{}", r.epsilon, opt(r.beta_sw))?;
    }
    files.push(dir.join("sweep_beta_switch.csv"));

    let mut gp = create(dir, "sweep_beta.gp")?;
    writeln!(gp, "set datafile separator ','\nset xlabel 'beta'\nset ylabel 'long-term average MMSE'")?;
    writeln!(gp, "set terminal pngcairo size 900,600\nset output 'sweep_beta.png'")?;
    let plots: Vec<String> = results
        .iter()
        .flat_map(|r| {
            let f = format!("sweep_beta_{}.csv", eps_tag(r.epsilon));
            [
                format!("'{f}' using 1:2 with lines title 'IIR eps={}'", r.epsilon),
                format!("'{f}' using 1:5 with lines dashtype 2 title 'FR eps={}'", r.epsilon),
            ]
        })
        .collect();
    writeln!(gp, "plot {}", plots.join(", \\\n     "))?;
    files.push(dir.join("sweep_beta.gp"));
    Ok(files)
}

fn optimum_cells(o: Option<Optimum>) -> String {
    match o {
        Some(o) => format!("{},{},{}", o.mmse, o.ell, o.n),
        None => ",,".into(),
    }
}

/// Writes `enhance_ratio_<eps>.csv`, `enhance_ratio_peaks.csv` and
/// `enhance_ratio.gp`. Ratios are in percent.
pub fn write_enhancement(results: &[EnhancementStudy], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let pct = |v: Option<f64>| opt(v.map(|r| 100.0 * r));
    for r in results {
        let name = format!("enhance_ratio_{}.csv", eps_tag(r.epsilon));
        let mut out = create(dir, &name)?;
        writeln!(out, "beta,ratio_iir_pct,ratio_fr_pct,mmse_iir_enh,mmse_iir_orig,mmse_fr_enh,mmse_fr_orig")?;
        for p in &r.points {
            let m = |o: Option<Optimum>| opt(o.map(|o| o.mmse));
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.beta,
                pct(p.ratio_iir),
                pct(p.ratio_fr),
                m(p.enhanced.iir),
                m(p.original.iir),
                m(p.enhanced.fr),
                m(p.original.fr)
            )?;
        }
        files.push(dir.join(name));
    }
    let mut out = create(dir, "enhance_ratio_peaks.csv")?;
    writeln!(out, "epsilon,beta_peak_iir,peak_iir_pct,beta_peak_fr,peak_fr_pct")?;
    for r in results {
        let cell = |p: Option<(f64, f64)>| match p {
            Some((b, v)) => format!("{b},{}", 100.0 * v),
            None => ",".into(),
        };
        writeln!(out, "{},{},{}", r.epsilon, cell(r.peak_iir), cell(r.peak_fr))?;
    }
    files.push(dir.join("enhance_ratio_peaks.csv"));

    let mut gp = create(dir, "enhance_ratio.gp")?;
    writeln!(gp, "set datafile separator ','\nset xlabel 'beta'\nset ylabel 'enhancement ratio (%)'")?;
    writeln!(gp, "set terminal pngcairo size 1200,500\nset output 'enhance_ratio.png'\nset multiplot layout 1,2")?;
    for (col, title) in [(2, "IIR"), (3, "FR")] {
        let plots: Vec<String> = results
            .iter()
            .map(|r| {
                format!("'enhance_ratio_{}.csv' using 1:{col} with lines title 'eps={}'", eps_tag(r.epsilon), r.epsilon)
            })
            .collect();
        writeln!(gp, "set title '{title}'\nplot {}", plots.join(", "))?;
    }
    writeln!(gp, "unset multiplot")?;
    files.push(dir.join("enhance_ratio.gp"));
    Ok(files)
}

/// Writes `codebook.csv`, `tracking_<scheme>.csv`, `tracking_summary.csv`
/// and `tracking.gp`.
pub fn write_tracking(report: &TrackReport, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    report.codebook.write_csv(create(dir, "codebook.csv")?)?;
    files.push(dir.join("codebook.csv"));
    for s in &report.schemes {
        let name = format!("tracking_{}.csv", s.scheme.label());
        s.single.write_csv(create(dir, &name)?)?;
        files.push(dir.join(name));
    }
    let mut out = create(dir, "tracking_summary.csv")?;
    writeln!(out, "scheme,seed,empirical_mse,seeds,mean_mse,std_mse,min_mse,max_mse,analytic_mmse")?;
    for s in &report.schemes {
        let sp = &s.seeds;
        writeln!(
            out,
            "{},{seed},{},{},{},{},{},{},{}",
            s.scheme.label(),
            s.single.empirical_mse,
            sp.count,
            sp.mean,
            sp.std_dev,
            sp.min,
            sp.max,
            s.analytic_mmse
        )?;
    }
    files.push(dir.join("tracking_summary.csv"));

    let mut gp = create(dir, "tracking.gp")?;
    writeln!(gp, "set datafile separator ','\nset xlabel 't'\nset ylabel 'X'")?;
    writeln!(gp, "set terminal pngcairo size 1200,500\nset output 'tracking.png'")?;
    let mut plots = Vec::new();
    if let Some(first) = report.schemes.first() {
        plots.push(format!("'tracking_{}.csv' using 1:2 with lines lw 2 title 'OU path'", first.scheme.label()));
    }
    for s in &report.schemes {
        let label = s.scheme.label();
        plots.push(format!("'tracking_{label}.csv' using 1:3 with lines title '{} estimate'", label.to_uppercase()));
    }
    writeln!(gp, "plot {}", plots.join(", \\\n     "))?;
    files.push(dir.join("tracking.gp"));
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn epsilon_accepts_scalar_or_list() {
        let a = ExperimentConfig::from_json(r#"{"epsilon": 0.4}"#).unwrap();
        assert_eq!(a.epsilon, vec![0.4]);
        let b = ExperimentConfig::from_json(r#"{"epsilon": [0.1, 0.4]}"#).unwrap();
        assert_eq!(b.epsilon, vec![0.1, 0.4]);
    }

    #[test]
    fn invalid_fields_are_rejected() {
        for bad in [
            r#"{"theta": -1}"#,
            r#"{"epsilon": 0.6}"#,
            r#"{"ell_range": [3, 2]}"#,
            r#"{"redundancy_range": [5, 1]}"#,
            r#"{"beta_grid": {"step": 0}}"#,
            r#"{"tracking": {"ell": 5, "n": 3}}"#,
            r#"{"no_such_field": 1}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn beta_grid_values() {
        let v = BetaGrid::default().values();
        assert_eq!(v.len(), 201);
        assert_eq!(v[0], 0.0);
        assert!((v[200] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ln_grid_respects_redundancy() {
        let c = ExperimentConfig { ell_range: [2, 3], redundancy_range: [0, 1], ..Default::default() };
        assert_eq!(c.ln_grid(), vec![(2, 2), (2, 3), (3, 3), (3, 4)]);
    }

    #[test]
    fn crossover_detection() {
        let o = |m| Some(Optimum { ell: 1, n: 3, mmse: m });
        let pts = [
            BetaPoint { beta: 0.0, iir: o(1.0), fr: o(2.0) },
            BetaPoint { beta: 0.1, iir: o(1.5), fr: o(1.6) },
            BetaPoint { beta: 0.2, iir: o(1.7), fr: o(1.65) },
        ];
        assert_eq!(crossover(&pts), Some(0.2));
        assert_eq!(crossover(&pts[..2]), None);
    }

    #[test]
    fn missing_codebook_without_training_is_an_error() {
        let mut c = ExperimentConfig::default();
        c.tracking.train = false;
        assert!(tracking_codebook(&c).is_err());
        c.tracking.codebook_path = Some(PathBuf::from("/nonexistent/codebook.csv"));
        assert!(tracking_codebook(&c).is_err());
    }
}
