//! Exact simulation and moment formulas for the Ornstein-Uhlenbeck process
//!
//! `dX = -θ X dt + σ dW`, zero mean, stationary variance `σ²/2θ`. Paths are
//! generated with the exact Gaussian transition, so the step size introduces
//! no discretization bias.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Result};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    theta: f64,
    sigma: f64,
}

impl OuParams {
    pub fn new(theta: f64, sigma: f64) -> Result<Self> {
        require_positive("theta", theta)?;
        require_positive("sigma", sigma)?;
        let params = Self { theta, sigma };
        let var = params.steady_state_variance();
        if !(var.is_finite() && var > 0.0) {
            return Err(invalid("sigma", format!("steady-state variance {var} is not finite and positive")));
        }
        Ok(params)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `σ² / 2θ`.
    pub fn steady_state_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }

    /// Conditional-mean coefficient `e^{-θ dt}`.
    pub fn decay(&self, dt: f64) -> f64 {
        (-self.theta * dt).exp()
    }

    /// Conditional variance of `X_{t+dt}` given `X_t`: `σ²/2θ · (1 - e^{-2θ dt})`.
    pub fn transition_variance(&self, dt: f64) -> f64 {
        -self.steady_state_variance() * (-2.0 * self.theta * dt).exp_m1()
    }
}

pub fn steady_state_variance(params: &OuParams) -> f64 {
    params.steady_state_variance()
}

/// Advances the state by `dt` using the exact transition driven by the
/// standard normal draw `z`.
pub fn ou_step(x: f64, dt: f64, params: &OuParams, z: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid("x", format!("state must be finite, got {x}")));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(invalid("dt", format!("must be finite and >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(x);
    }
    Ok(x * params.decay(dt) + params.transition_variance(dt).sqrt() * z)
}

/// A uniformly sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !t0.is_finite() {
            return Err(invalid("t0", "must be finite"));
        }
        require_positive("dt", dt)?;
        if values.is_empty() {
            return Err(invalid("values", "path must contain at least one state"));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Index of the grid point nearest to `t`, clamped to the path.
    pub fn nearest_index(&self, t: f64) -> usize {
        let raw = ((t - self.t0) / self.dt).round();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.values.len() - 1)
        }
    }

    /// Value at the grid point nearest to `t`.
    pub fn value_near(&self, t: f64) -> f64 {
        self.values[self.nearest_index(t)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance of the path values.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    /// Writes `t,x`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x")?;
        for (i, x) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.time(i), x)?;
        }
        Ok(())
    }
}

/// Stationary path on `[0, horizon]` with step `dt`, seeded.
pub fn ou_path(params: &OuParams, horizon: f64, dt: f64, seed: u64) -> Result<SamplePath> {
    let mut rng = rng::stream(seed, rng::streams::PATH);
    ou_path_with(params, horizon, dt, &mut rng)
}

/// Same as [`ou_path`] but draws from a caller-owned stream.
pub fn ou_path_with(params: &OuParams, horizon: f64, dt: f64, rng: &mut SimRng) -> Result<SamplePath> {
    require_positive("horizon", horizon)?;
    require_positive("dt", dt)?;
    let steps = (horizon / dt).ceil() as usize;
    let decay = params.decay(dt);
    let scale = params.transition_variance(dt).sqrt();

    let mut values = Vec::with_capacity(steps + 1);
    let z0: f64 = rng.sample(StandardNormal);
    let mut x = params.steady_state_variance().sqrt() * z0;
    values.push(x);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        x = x * decay + scale * z;
        values.push(x);
    }
    SamplePath::new(0.0, dt, values)
}
