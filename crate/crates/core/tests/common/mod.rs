//! Oracles shared by the integration tests, written independently of the
//! library's own formulas.
#![allow(dead_code)]

use sqe::channel::DelayDistribution;

/// `h_ℓ(a) = V (1 - (1 - 4^{-ℓ}) e^{-2θa})` with `σ = 1`.
pub fn h(theta: f64, ell: u32, a: f64) -> f64 {
    let v = 1.0 / (2.0 * theta);
    v * (1.0 - (1.0 - 4f64.powi(-(ell as i32))) * (-2.0 * theta * a).exp())
}

/// Antiderivative of [`h`].
pub fn h_int(theta: f64, ell: u32, a: f64) -> f64 {
    let v = 1.0 / (2.0 * theta);
    v * (a + (1.0 - 4f64.powi(-(ell as i32))) * (-2.0 * theta * a).exp() / (2.0 * theta))
}

/// Long-term average of the threshold rule by enumerating `(Ȳ, Y)` pairs.
pub fn threshold_ratio(dist: &DelayDistribution, threshold: f64, integral: impl Fn(f64) -> f64) -> f64 {
    let (mut area, mut length) = (0.0, 0.0);
    for (ybar, pb) in dist.iter() {
        let w = (threshold - ybar).max(0.0);
        for (y, p) in dist.iter() {
            area += pb * p * (integral(ybar + w + y) - integral(ybar));
            length += pb * p * (w + y);
        }
    }
    area / length
}

/// Smallest [`threshold_ratio`] over 10⁴ evenly spaced thresholds in `[lo, hi]`.
pub fn grid_min(dist: &DelayDistribution, lo: f64, hi: f64, integral: impl Fn(f64) -> f64 + Copy) -> f64 {
    (0..10_000)
        .map(|i| threshold_ratio(dist, lo + (hi - lo) * i as f64 / 9_999.0, integral))
        .fold(f64::INFINITY, f64::min)
}

/// FR renewal average with no receiver queue: epochs of `M ~ Geom(p0)`
/// periods `K`, starting at age `A0`.
pub fn fr_oracle(theta: f64, ell: u32, p0: f64, period: f64, a0: f64) -> f64 {
    let (mut area, mut mass) = (0.0, p0);
    let mut m = 1.0;
    while mass > 1e-18 {
        area += mass * (h_int(theta, ell, a0 + m * period) - h_int(theta, ell, a0));
        mass *= 1.0 - p0;
        m += 1.0;
    }
    area / (period / p0)
}
