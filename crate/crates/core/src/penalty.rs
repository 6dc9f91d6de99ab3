//! Age penalties: the OU MMSE functional `h_ℓ` and user-supplied increasing
//! penalties, together with the delay expectation `G_ȳ(x) = E[g(ȳ+x+Y)]`
//! and its inverse.

use std::fmt;
use std::sync::Arc;

use crate::channel::DelayDistribution;
use crate::error::{invalid, Error, Result};
use crate::ou::OuParams;
use crate::quantizer::distortion_factor;

/// Absolute tolerance of the adaptive quadrature used for custom penalties.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Tolerance on the age returned by custom-penalty inversion.
pub const INVERSE_TOL: f64 = 1e-12;
/// Grid size of the monotonicity audit run on custom penalties.
pub const AUDIT_POINTS: usize = 1000;

type PenaltyFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `h_ℓ(a) = σ²/2θ · (1 - (1 - 2^{-2ℓ}) e^{-2θa})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsePenalty {
    params: OuParams,
    ell: u32,
    variance: f64,
    distortion: f64,
}

impl MmsePenalty {
    pub fn params(&self) -> &OuParams {
        &self.params
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    /// `σ²/2θ`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `2^{-2ℓ}`.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// `σ²/2θ · 2^{-2ℓ}`, the value at age zero.
    pub fn floor(&self) -> f64 {
        self.variance * self.distortion
    }

    fn two_theta(&self) -> f64 {
        2.0 * self.params.theta()
    }

    fn value(&self, age: f64) -> f64 {
        self.variance * (1.0 - (1.0 - self.distortion) * (-self.two_theta() * age).exp())
    }

    /// `∫_a^b h_ℓ`, written so that short intervals keep full precision.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let k = self.two_theta();
        let len = b - a;
        self.variance * (len + (1.0 - self.distortion) / k * (-k * a).exp() * (-k * len).exp_m1())
    }
}

/// A penalty given as a closure, audited for monotonicity on construction.
#[derive(Clone)]
pub struct CustomPenalty {
    name: String,
    f: PenaltyFn,
    supremum: Option<f64>,
    quad_tol: f64,
}

impl fmt::Debug for CustomPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPenalty")
            .field("name", &self.name)
            .field("supremum", &self.supremum)
            .field("quad_tol", &self.quad_tol)
            .finish()
    }
}

impl CustomPenalty {
    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone)]
pub enum AgePenalty {
    MmseOu(MmsePenalty),
    Custom(CustomPenalty),
}

impl AgePenalty {
    pub fn mmse_ou(params: OuParams, ell: u32) -> Result<Self> {
        if ell == 0 {
            return Err(invalid("ell", "a message needs at least one bit"));
        }
        Ok(Self::MmseOu(MmsePenalty {
            params,
            ell,
            variance: params.steady_state_variance(),
            distortion: distortion_factor(ell),
        }))
    }

    /// Wraps an increasing penalty. The function is evaluated on
    /// [`AUDIT_POINTS`] evenly spaced ages in `[0, audit_horizon]` and
    /// rejected if it decreases anywhere on that grid or is not finite.
    /// `supremum`, when known, bounds the contribution of truncated delay
    /// mass.
    pub fn custom<F>(name: impl Into<String>, f: F, audit_horizon: f64, supremum: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(audit_horizon.is_finite() && audit_horizon > 0.0) {
            return Err(invalid("audit_horizon", "must be finite and positive"));
        }
        let step = audit_horizon / (AUDIT_POINTS - 1) as f64;
        let mut prev = (0.0, f(0.0));
        if !prev.1.is_finite() {
            return Err(invalid("penalty", "g(0) is not finite"));
        }
        for i in 1..AUDIT_POINTS {
            let a = i as f64 * step;
            let v = f(a);
            if !v.is_finite() {
                return Err(invalid("penalty", format!("g({a}) is not finite")));
            }
            if v < prev.1 {
                return Err(Error::NonMonotonePenalty { left: prev.0, right: a, g_left: prev.1, g_right: v });
            }
            prev = (a, v);
        }
        Ok(Self::Custom(CustomPenalty {
            name: name.into(),
            f: Arc::new(f),
            supremum,
            quad_tol: DEFAULT_QUAD_TOL,
        }))
    }

    /// Sets the quadrature tolerance used by [`AgePenalty::integral`] for
    /// custom penalties; `h_ℓ` is integrated exactly and ignores it.
    pub fn with_quad_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(invalid("quad_tol", "must be positive"));
        }
        if let Self::Custom(c) = &mut self {
            c.quad_tol = tol;
        }
        Ok(self)
    }

    pub fn as_mmse(&self) -> Option<&MmsePenalty> {
        match self {
            Self::MmseOu(m) => Some(m),
            Self::Custom(_) => None,
        }
    }

    /// `g(age)`; negative ages are rejected.
    pub fn evaluate(&self, age: f64) -> Result<f64> {
        if !(age >= 0.0) {
            return Err(invalid("age", format!("must be >= 0, got {age}")));
        }
        Ok(self.value(age))
    }

    /// `g(age)` without validation, for hot loops over known ages.
    pub fn value(&self, age: f64) -> f64 {
        match self {
            Self::MmseOu(m) => m.value(age),
            Self::Custom(c) => (c.f)(age),
        }
    }

    /// `∫_a^b g(s) ds`: exact for `h_ℓ`, adaptive Simpson otherwise.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::MmseOu(m) => m.integral(a, b),
            Self::Custom(c) => adaptive_simpson(&*c.f, a, b, c.quad_tol),
        }
    }

    /// `sup_a g(a)`, or infinity when unknown.
    pub fn supremum(&self) -> f64 {
        match self {
            Self::MmseOu(m) => m.variance,
            Self::Custom(c) => c.supremum.unwrap_or(f64::INFINITY),
        }
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `G_ȳ(x) = E[g(ȳ + x + Y)]` for one penalty and delay law.
///
/// `G` depends on `(ȳ, x)` only through `ȳ + x`, so its inverse reduces to
/// a single threshold age `A(λ)` with `w*(ȳ) = [A(λ) - ȳ]⁺`.
#[derive(Debug, Clone)]
pub struct GFunction<'a> {
    penalty: &'a AgePenalty,
    dist: &'a DelayDistribution,
    /// `E[e^{-2θY}]` over the retained support, for `h_ℓ`.
    laplace: Option<f64>,
}

impl<'a> GFunction<'a> {
    pub fn new(penalty: &'a AgePenalty, dist: &'a DelayDistribution) -> Self {
        let laplace = penalty
            .as_mmse()
            .map(|m| dist.expect(|y| (-m.two_theta() * y).exp()));
        Self { penalty, dist, laplace }
    }

    pub fn penalty(&self) -> &AgePenalty {
        self.penalty
    }

    pub fn dist(&self) -> &DelayDistribution {
        self.dist
    }

    /// `E[e^{-2θY}]` (only for `h_ℓ`).
    pub fn laplace(&self) -> Option<f64> {
        self.laplace
    }

    /// `E[g(s + Y)]` at total age offset `s = ȳ + x`.
    pub fn at_offset(&self, s: f64) -> f64 {
        match (self.penalty, self.laplace) {
            (AgePenalty::MmseOu(m), Some(l)) => {
                m.variance * (1.0 - (1.0 - m.distortion) * (-m.two_theta() * s).exp() * l)
            }
            _ => self.dist.expect(|y| self.penalty.value(s + y)),
        }
    }

    /// `G_ȳ(x)`.
    pub fn value(&self, ybar: f64, x: f64) -> f64 {
        self.at_offset(ybar + x)
    }

    /// Upper bound on the error of any `G` value caused by the truncated
    /// tail of the delay law.
    pub fn tail_error_bound(&self) -> f64 {
        let mass = self.dist.truncated_mass();
        if mass == 0.0 {
            0.0
        } else {
            mass * self.penalty.supremum()
        }
    }

    /// Age `A(λ)` at which `E[g(A + Y)] = λ`. For `h_ℓ` this is the
    /// logarithmic closed form and may be negative; for custom penalties it
    /// is found by bisection and clamped at 0.
    pub fn threshold_age(&self, lambda: f64) -> Result<f64> {
        if !lambda.is_finite() {
            return Err(invalid("lambda", "must be finite"));
        }
        match (self.penalty, self.laplace) {
            (AgePenalty::MmseOu(m), Some(l)) => {
                if lambda >= m.variance {
                    return Err(Error::UnreachablePenalty { lambda, supremum: m.variance });
                }
                let arg = m.variance * (1.0 - m.distortion) * l / (m.variance - lambda);
                Ok(arg.ln() / m.two_theta())
            }
            _ => self.bisect_threshold(lambda),
        }
    }

    fn bisect_threshold(&self, lambda: f64) -> Result<f64> {
        if self.at_offset(0.0) >= lambda {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.at_offset(hi) < lambda {
            lo = hi;
            hi *= 2.0;
            if hi > 1e15 {
                return Err(Error::UnreachablePenalty { lambda, supremum: self.penalty.supremum() });
            }
        }
        while hi - lo > INVERSE_TOL * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.at_offset(mid) < lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `[G_ȳ^{-1}(λ)]⁺`: the optimal wait after an epoch that ended with
    /// age `ȳ`.
    pub fn inverse(&self, ybar: f64, lambda: f64) -> Result<f64> {
        Ok((self.threshold_age(lambda)? - ybar).max(0.0))
    }
}

/// `G_ȳ(x) = E[g(ȳ + x + Y)]`.
pub fn g_of(g: &AgePenalty, ybar: f64, x: f64, dist: &DelayDistribution) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid("x", format!("wait must be >= 0, got {x}")));
    }
    if ybar < dist.min_delay() * (1.0 - 1e-12) {
        return Err(invalid("ybar", format!("{ybar} is below the smallest delay {}", dist.min_delay())));
    }
    Ok(GFunction::new(g, dist).value(ybar, x))
}

/// `[G_ȳ^{-1}(λ)]⁺`.
pub fn g_inverse(g: &AgePenalty, ybar: f64, lambda: f64, dist: &DelayDistribution) -> Result<f64> {
    GFunction::new(g, dist).inverse(ybar, lambda)
}
