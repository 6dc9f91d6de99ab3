//! Quantization: the rate-distortion error model used by the analytic
//! pipeline and an empirical Lloyd-Max scalar quantizer for tracking.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};
use crate::ou::{OuParams, SamplePath};

/// Steady-state mean square quantization error `σ²/2θ · 2^{-2ℓ}`.
pub fn rd_quantizer_mse(params: &OuParams, ell: u32) -> Result<f64> {
    if ell == 0 {
        return Err(invalid("ell", "a message needs at least one bit"));
    }
    Ok(params.steady_state_variance() * distortion_factor(ell))
}

/// `2^{-2ℓ}`.
pub(crate) fn distortion_factor(ell: u32) -> f64 {
    (-2.0 * ell as f64).exp2()
}

/// Sorted reconstruction levels with nearest-neighbor cell boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    levels: Vec<f64>,
    boundaries: Vec<f64>,
}

impl Codebook {
    /// Builds a codebook from strictly increasing levels; boundaries are the
    /// midpoints between neighbors.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("levels", "codebook needs at least one level"));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(invalid("levels", "levels must be finite"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("levels", "levels must be strictly increasing"));
        }
        let boundaries = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { levels, boundaries })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Nearest level to `x`; a point exactly on a boundary maps to the lower
    /// index.
    pub fn quantize(&self, x: f64) -> (usize, f64) {
        let index = self.boundaries.partition_point(|&b| b < x);
        (index, self.levels[index])
    }

    /// Mean square error of quantizing `samples`.
    pub fn mse(&self, samples: &[f64]) -> f64 {
        let total: f64 = samples
            .iter()
            .map(|&x| {
                let e = x - self.quantize(x).1;
                e * e
            })
            .sum();
        total / samples.len() as f64
    }

    /// Writes `index,level,lower_boundary,upper_boundary`; the outer cells
    /// are bounded by `-inf` and `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,level,lower_boundary,upper_boundary")?;
        for (i, level) in self.levels.iter().enumerate() {
            let lower = if i == 0 { f64::NEG_INFINITY } else { self.boundaries[i - 1] };
            let upper = self.boundaries.get(i).copied().unwrap_or(f64::INFINITY);
            writeln!(out, "{i},{level},{lower},{upper}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Codebook::write_csv`]. Boundaries are
    /// recomputed from the levels.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "index,level,lower_boundary,upper_boundary" {
            return Err(Error::Parse("codebook CSV header missing".into()));
        }
        let mut levels = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let index: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("row {row}: bad index")))?;
            if index != levels.len() {
                return Err(Error::Parse(format!("row {row}: index {index} out of order")));
            }
            let level: f64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("row {row}: bad level")))?;
            levels.push(level);
        }
        Self::from_levels(levels)
    }
}

/// Outcome of a single Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydFit {
    pub codebook: Codebook,
    /// Training MSE of the nearest-neighbor partition at each iterate,
    /// starting with the initial levels.
    pub mse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of empty-cell re-seeds performed.
    pub reseeds: usize,
}

impl LloydFit {
    /// True when no iteration increased the training MSE beyond rounding.
    pub fn mse_is_monotone(&self) -> bool {
        self.mse_history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1e-300))
    }
}

/// Sorted samples with prefix sums, so each Lloyd step costs
/// `O(levels · log N)`.
struct SortedSamples {
    xs: Vec<f64>,
    shift: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl SortedSamples {
    fn new(samples: &[f64]) -> Self {
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        // centering keeps the prefix sums well conditioned
        let shift = xs.iter().sum::<f64>() / xs.len() as f64;
        let mut sum = Vec::with_capacity(xs.len() + 1);
        let mut sum_sq = Vec::with_capacity(xs.len() + 1);
        let (mut s, mut s2) = (0.0, 0.0);
        sum.push(0.0);
        sum_sq.push(0.0);
        for &x in &xs {
            let c = x - shift;
            s += c;
            s2 += c * c;
            sum.push(s);
            sum_sq.push(s2);
        }
        Self { xs, shift, sum, sum_sq }
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    /// Cell `k` covers sorted indices `cuts[k]..cuts[k+1]`; a sample equal
    /// to a boundary falls in the lower cell.
    fn cuts(&self, boundaries: &[f64]) -> Vec<usize> {
        let mut cuts = Vec::with_capacity(boundaries.len() + 2);
        cuts.push(0);
        for &b in boundaries {
            cuts.push(self.xs.partition_point(|&x| x <= b));
        }
        cuts.push(self.xs.len());
        cuts
    }

    fn cell_sum(&self, lo: usize, hi: usize) -> f64 {
        self.sum[hi] - self.sum[lo]
    }

    /// Squared error of reconstructing cell `lo..hi` by `level`.
    fn cell_sse(&self, lo: usize, hi: usize, level: f64) -> f64 {
        let n = (hi - lo) as f64;
        let c = level - self.shift;
        let s = self.cell_sum(lo, hi);
        let s2 = self.sum_sq[hi] - self.sum_sq[lo];
        (s2 - 2.0 * c * s + n * c * c).max(0.0)
    }

    fn mse(&self, levels: &[f64], cuts: &[usize]) -> f64 {
        let total: f64 = levels
            .iter()
            .enumerate()
            .map(|(k, &l)| self.cell_sse(cuts[k], cuts[k + 1], l))
            .sum();
        total / self.len() as f64
    }

    /// Evenly spread initial levels: means of equal-count chunks, falling
    /// back to evenly spaced distinct values when chunks coincide.
    fn initial_levels(&self, count: usize) -> Result<Vec<f64>> {
        let n = self.len();
        let chunked: Vec<f64> = (0..count)
            .map(|k| {
                let lo = k * n / count;
                let hi = ((k + 1) * n / count).max(lo + 1);
                self.cell_sum(lo, hi) / (hi - lo) as f64 + self.shift
            })
            .collect();
        if chunked.windows(2).all(|w| w[0] < w[1]) {
            return Ok(chunked);
        }
        let mut distinct = self.xs.clone();
        distinct.dedup();
        if distinct.len() < count {
            return Err(invalid(
                "training",
                format!("{} distinct values cannot seed {count} levels", distinct.len()),
            ));
        }
        Ok((0..count)
            .map(|k| distinct[k * (distinct.len() - 1) / (count - 1).max(1)])
            .collect())
    }
}

/// Runs Lloyd's algorithm on one sample set.
///
/// Iterates nearest-neighbor partition and centroid update until no level
/// moves by more than `tol`, or `max_iter` is reached. An empty cell's level
/// is re-seeded at the midpoint of the largest splittable cell's sample
/// range.
pub fn lloyd_fit(samples: &[f64], levels: usize, max_iter: usize, tol: f64) -> Result<LloydFit> {
    if levels == 0 {
        return Err(invalid("levels", "need at least one level"));
    }
    require_positive("tol", tol)?;
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(invalid("training", "samples must be finite"));
    }
    let data = SortedSamples::new(samples);
    if data.len() < levels {
        return Err(invalid("training", format!("{} samples cannot seed {levels} levels", data.len())));
    }
    let initial = data.initial_levels(levels)?;
    run_lloyd(&data, initial, max_iter, tol)
}

fn run_lloyd(data: &SortedSamples, initial: Vec<f64>, max_iter: usize, tol: f64) -> Result<LloydFit> {
    let levels = initial.len();
    let mut current = initial;
    let mut cuts = data.cuts(&midpoints(&current));
    let mut history = vec![data.mse(&current, &cuts)];
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeds = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut next: Vec<f64> = (0..levels)
            .map(|k| {
                let (lo, hi) = (cuts[k], cuts[k + 1]);
                if hi > lo {
                    data.cell_sum(lo, hi) / (hi - lo) as f64 + data.shift
                } else {
                    f64::NAN
                }
            })
            .collect();

        let empty: Vec<usize> = (0..levels).filter(|&k| next[k].is_nan()).collect();
        if !empty.is_empty() {
            reseeds += empty.len();
            reseed_empty(data, &cuts, &mut next, &empty)?;
        }
        next.sort_by(f64::total_cmp);

        let shift = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        cuts = data.cuts(&midpoints(&current));
        history.push(data.mse(&current, &cuts));
        if shift <= tol {
            converged = true;
            break;
        }
    }

    Ok(LloydFit {
        codebook: Codebook::from_levels(current)?,
        mse_history: history,
        iterations,
        converged,
        reseeds,
    })
}

/// Moves each empty cell's level into a populated cell with more than one
/// distinct value, most populated first, at the midpoint of that cell's
/// sample range (or halfway between its centroid and its largest sample
/// when the midpoint is already a level). Any placement keeps the training
/// MSE from increasing, since the empty level served no samples.
fn reseed_empty(data: &SortedSamples, cuts: &[usize], next: &mut [f64], empty: &[usize]) -> Result<()> {
    let mut donors: Vec<usize> = (0..next.len())
        .filter(|&j| !next[j].is_nan() && data.xs[cuts[j]] < data.xs[cuts[j + 1] - 1])
        .collect();
    donors.sort_by_key(|&j| std::cmp::Reverse(cuts[j + 1] - cuts[j]));
    if donors.is_empty() {
        return Err(invalid("training", "no cell can be split to fill an empty cell"));
    }
    for (used, &k) in empty.iter().enumerate() {
        let j = donors[used % donors.len()];
        let (lo, hi) = (data.xs[cuts[j]], data.xs[cuts[j + 1] - 1]);
        let mut candidate = 0.5 * (lo + hi);
        let taken = |v: f64, next: &[f64]| next.contains(&v);
        if taken(candidate, next) {
            candidate = 0.5 * (next[j] + hi);
        }
        if taken(candidate, next) || !(candidate > lo && candidate < hi) {
            candidate = 0.5 * (lo + next[j]);
        }
        if taken(candidate, next) {
            return Err(invalid("training", "could not place a distinct level in an empty cell"));
        }
        next[k] = candidate;
    }
    Ok(())
}

fn midpoints(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Trains one `2^ℓ`-level codebook per path and averages them
/// element-wise. Boundaries of the averaged codebook are the midpoints of
/// the averaged levels.
pub fn lloyd_train(training: &[SamplePath], ell: u32, max_iter: usize, tol: f64) -> Result<Codebook> {
    Ok(lloyd_train_detailed(training, ell, max_iter, tol)?.0)
}

/// [`lloyd_train`] plus the per-path fits.
pub fn lloyd_train_detailed(
    training: &[SamplePath],
    ell: u32,
    max_iter: usize,
    tol: f64,
) -> Result<(Codebook, Vec<LloydFit>)> {
    if ell == 0 || ell > 20 {
        return Err(invalid("ell", format!("must be in 1..=20, got {ell}")));
    }
    if training.is_empty() {
        return Err(invalid("training", "no training paths"));
    }
    let levels = 1usize << ell;
    let fits: Vec<LloydFit> = training
        .par_iter()
        .map(|path| lloyd_fit(path.values(), levels, max_iter, tol))
        .collect::<Result<_>>()?;

    let mut averaged = vec![0.0; levels];
    for fit in &fits {
        // levels are sorted, so averaging index-by-index is well defined
        for (acc, level) in averaged.iter_mut().zip(fit.codebook.levels()) {
            *acc += level;
        }
    }
    let count = fits.len() as f64;
    averaged.iter_mut().for_each(|a| *a /= count);
    Ok((Codebook::from_levels(averaged)?, fits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rd_mse_examples() {
        let p = OuParams::new(0.5, 1.0).unwrap();
        assert_eq!(rd_quantizer_mse(&p, 2).unwrap(), 0.0625);
        let slow = OuParams::new(0.01, 1.0).unwrap();
        assert_relative_eq!(rd_quantizer_mse(&slow, 5).unwrap(), 50.0 / 1024.0);
        assert!(rd_quantizer_mse(&p, 60).unwrap() < 1e-30);
        assert!(rd_quantizer_mse(&p, 0).is_err());
    }

    #[test]
    fn rd_mse_decreases_in_bits() {
        let p = OuParams::new(0.3, 2.0).unwrap();
        let v: Vec<f64> = (1..12).map(|l| rd_quantizer_mse(&p, l).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(v[0] < p.steady_state_variance());
    }

    #[test]
    fn quantize_examples() {
        let cb = Codebook::from_levels(vec![-1.0, 1.0]).unwrap();
        assert_eq!(cb.quantize(0.3), (1, 1.0));
        assert_eq!(cb.quantize(0.0), (0, -1.0));
        assert_eq!(cb.quantize(-1.0), (0, -1.0));
        assert_eq!(cb.quantize(1.0), (1, 1.0));
    }

    #[test]
    fn rejects_unsorted_levels() {
        assert!(Codebook::from_levels(vec![1.0, 1.0]).is_err());
        assert!(Codebook::from_levels(vec![]).is_err());
    }

    #[test]
    fn two_point_data_is_a_fixed_point() {
        let data: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let fit = lloyd_fit(&data, 2, 50, 1e-12).unwrap();
        assert_eq!(fit.codebook.levels(), &[-1.0, 1.0]);
        assert!(fit.converged);
    }

    #[test]
    fn too_few_distinct_values_is_an_error() {
        let data = vec![3.0; 10];
        assert!(lloyd_fit(&data, 2, 10, 1e-9).is_err());
    }

    #[test]
    fn empty_cells_are_reseeded() {
        let mut data = Vec::new();
        for (value, count) in [(0.0, 40), (1.0, 40), (100.0, 10), (101.0, 10)] {
            data.extend(std::iter::repeat_n(value, count));
        }
        let sorted = SortedSamples::new(&data);
        // the level at 50 owns (25.5, 75): no data there
        let fit = run_lloyd(&sorted, vec![0.0, 1.0, 50.0, 100.5], 100, 1e-12).unwrap();
        assert!(fit.reseeds >= 1);
        assert!(fit.mse_is_monotone());
        let levels = fit.codebook.levels();
        assert_eq!(levels.len(), 4);
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        assert!(fit.mse_history.last().unwrap() < &fit.mse_history[0]);
    }

    #[test]
    fn csv_round_trip() {
        let cb = Codebook::from_levels(vec![-2.0, 0.5, 3.25]).unwrap();
        let mut buf = Vec::new();
        cb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,level,lower_boundary,upper_boundary\n0,-2,-inf,-0.75\n"));
        let back = Codebook::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, cb);
    }

    #[test]
    fn read_csv_rejects_garbage() {
        assert!(Codebook::read_csv(std::io::Cursor::new("nope\n")).is_err());
        let bad = "index,level,lower_boundary,upper_boundary\n1,0,-inf,inf\n";
        assert!(Codebook::read_csv(std::io::Cursor::new(bad)).is_err());
    }
}
