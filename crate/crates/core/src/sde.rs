//! Sample paths of the infective count.
//!
//! Two schemes are provided. The default integrates the log-odds process
//! `Y = ln(I/(N−I))`, which satisfies
//!
//! ```text
//! dY = [(βN − μ − γ − σ²N²/2) − (μ+γ)e^Y + σ²N² e^Y/(1+e^Y)] dt + σN dB
//! ```
//!
//! with a tamed Euler step (drift `b` replaced by `b/(1 + dt|b|)`), so the
//! mapped-back path never leaves `(0, N)`. The direct scheme applies
//! Euler–Maruyama to `I` itself and clamps into the interior.

use serde::Serialize;

use crate::error::{Result, SisError};
use crate::model::ModelParams;
use crate::noise::NoiseStream;

/// Relative margin used by the direct scheme's clamp.
pub const CLAMP_EPS: f64 = 1e-12;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Scheme {
    DirectEulerClamped,
    #[default]
    TransformedTamedEuler,
}

/// The log-odds map `g(x) = ln(x/(N−x))` and its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOdds {
    n: f64,
}

impl LogOdds {
    pub fn new(n_total: f64) -> Self {
        Self { n: n_total }
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < self.n) {
            return Err(SisError::Domain(format!("g({x}) undefined outside (0, {})", self.n)));
        }
        Ok((x / (self.n - x)).ln())
    }

    /// `g⁻¹(ξ) = N e^ξ/(1+e^ξ)`; saturates one representable step inside
    /// `(0, N)` when `|ξ|` is beyond double precision.
    #[inline]
    pub fn inverse(&self, xi: f64) -> f64 {
        saturate(self.n / (1.0 + (-xi).exp()), self.n)
    }
}

#[inline]
fn saturate(x: f64, n: f64) -> f64 {
    if x >= n {
        n.next_down()
    } else if x > 0.0 {
        x
    } else {
        f64::from_bits(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub dt: f64,
    pub seed: u64,
    pub i0: f64,
    pub n_total: f64,
    /// Steps where the direct scheme had to clamp; always 0 for the
    /// transformed scheme.
    pub clamp_events: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&self.i0)
    }
}

/// Validated simulation settings shared by single paths and ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub horizon: f64,
    pub i0: f64,
}

impl PathSpec {
    pub fn validate(&self, params: &ModelParams) -> Result<usize> {
        let n = params.n_total();
        if !(self.i0 > 0.0 && self.i0 < n) {
            return Err(SisError::InvalidParams(format!(
                "i0 = {} outside (0, {n})",
                self.i0
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SisError::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        let limit = 0.1 / params.removal_rate();
        if self.dt > limit {
            return Err(SisError::StepTooLarge { dt: self.dt, limit });
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(SisError::InvalidParams(format!(
                "horizon {} must be >= dt {}",
                self.horizon, self.dt
            )));
        }
        Ok((self.horizon / self.dt).round() as usize)
    }
}

/// Streaming integrator for one path; yields `I` after each step.
#[derive(Debug, Clone)]
pub struct PathStepper {
    scheme: Scheme,
    dt: f64,
    noise_amp: f64,
    n: f64,
    // log-odds drift pieces
    linear: f64,
    removal: f64,
    noise_sq: f64,
    // direct-scheme pieces
    beta: f64,
    beta_n_minus_removal: f64,
    lo: f64,
    hi: f64,
    // state
    y: f64,
    exp_y: f64,
    i: f64,
    noise: NoiseStream,
    clamp_events: u64,
}

impl PathStepper {
    pub fn new(params: &ModelParams, spec: &PathSpec, seed: u64, path: u64) -> Self {
        let n = params.n_total();
        let sqrt_dt = spec.dt.sqrt();
        let (noise_amp, y, exp_y) = match spec.scheme {
            Scheme::TransformedTamedEuler => {
                let y = (spec.i0 / (n - spec.i0)).ln();
                (params.sigma_n() * sqrt_dt, y, y.exp())
            }
            Scheme::DirectEulerClamped => (params.sigma() * sqrt_dt, 0.0, 1.0),
        };
        Self {
            scheme: spec.scheme,
            dt: spec.dt,
            noise_amp,
            n,
            linear: params.beta_n() - params.removal_rate() - 0.5 * params.noise_sq(),
            removal: params.removal_rate(),
            noise_sq: params.noise_sq(),
            beta: params.beta(),
            beta_n_minus_removal: params.beta_n() - params.removal_rate(),
            lo: CLAMP_EPS * n,
            hi: (1.0 - CLAMP_EPS) * n,
            y,
            exp_y,
            i: spec.i0,
            noise: NoiseStream::new(seed, path),
            clamp_events: 0,
        }
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub fn current(&self) -> f64 {
        self.i
    }

    /// Advances one step and returns the new `I`.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let z = self.noise.next_normal();
        match self.scheme {
            Scheme::TransformedTamedEuler => {
                let frac = logistic_from_exp(self.y, self.exp_y);
                let drift = self.linear - self.removal * self.exp_y + self.noise_sq * frac;
                let tamed = if drift.is_finite() {
                    drift / (1.0 + self.dt * drift.abs())
                } else {
                    drift.signum() / self.dt
                };
                self.y += tamed * self.dt + self.noise_amp * z;
                self.exp_y = self.y.exp();
                self.i = saturate(self.n * logistic_from_exp(self.y, self.exp_y), self.n);
            }
            Scheme::DirectEulerClamped => {
                let i = self.i;
                let drift = i * (self.beta_n_minus_removal - self.beta * i);
                let next = i + drift * self.dt + self.noise_amp * i * (self.n - i) * z;
                self.i = if next < self.lo {
                    self.clamp_events += 1;
                    self.lo
                } else if next > self.hi {
                    self.clamp_events += 1;
                    self.hi
                } else {
                    next
                };
            }
        }
        self.i
    }
}

/// `e^y/(1+e^y)` given a precomputed `e^y`.
#[inline]
fn logistic_from_exp(y: f64, exp_y: f64) -> f64 {
    if y <= 0.0 {
        exp_y / (1.0 + exp_y)
    } else {
        1.0 / (1.0 + 1.0 / exp_y)
    }
}

/// Simulates one path on the uniform grid `0, dt, …, T`.
pub fn simulate_path(
    params: &ModelParams,
    scheme: Scheme,
    dt: f64,
    horizon: f64,
    i0: f64,
    seed: u64,
) -> Result<Trajectory> {
    let spec = PathSpec {
        scheme,
        dt,
        horizon,
        i0,
    };
    simulate_indexed(params, &spec, seed, 0)
}

/// As [`simulate_path`] for path `path` of the stream family `seed`.
pub fn simulate_indexed(params: &ModelParams, spec: &PathSpec, seed: u64, path: u64) -> Result<Trajectory> {
    let steps = spec.validate(params)?;
    let mut stepper = PathStepper::new(params, spec, seed, path);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(spec.i0);
    for k in 1..=steps {
        times.push(k as f64 * spec.dt);
        values.push(stepper.step());
    }
    Ok(Trajectory {
        times,
        values,
        scheme: spec.scheme,
        dt: spec.dt,
        seed,
        i0: spec.i0,
        n_total: params.n_total(),
        clamp_events: stepper.clamp_events(),
    })
}

/// Tracks the first time a streamed path attains or crosses `level`.
#[derive(Debug, Clone, Copy)]
pub struct CrossingTracker {
    level: f64,
    start_above: bool,
    hit: Option<f64>,
}

impl CrossingTracker {
    pub fn new(level: f64, i0: f64) -> Self {
        Self {
            level,
            start_above: i0 > level,
            hit: (i0 == level).then_some(0.0),
        }
    }

    /// Feeds the step from `(t_prev, v_prev)` to `(t, v)`.
    #[inline]
    pub fn observe(&mut self, t_prev: f64, v_prev: f64, t: f64, v: f64) {
        if self.hit.is_some() {
            return;
        }
        let crossed = if self.start_above {
            v <= self.level
        } else {
            v >= self.level
        };
        if crossed {
            let frac = if v == v_prev {
                1.0
            } else {
                ((self.level - v_prev) / (v - v_prev)).clamp(0.0, 1.0)
            };
            self.hit = Some(t_prev + frac * (t - t_prev));
        }
    }

    pub fn hit(&self) -> Option<f64> {
        self.hit
    }
}

/// First time the path attains or crosses each level (linear
/// interpolation between grid points), or `None` within the horizon.
pub fn hit_times(traj: &Trajectory, levels: &[f64]) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        if !(level > 0.0 && level < traj.n_total) {
            return Err(SisError::Domain(format!("level {level} outside (0, N)")));
        }
        let mut tracker = CrossingTracker::new(level, traj.i0);
        for k in 1..traj.values.len() {
            tracker.observe(traj.times[k - 1], traj.values[k - 1], traj.times[k], traj.values[k]);
            if tracker.hit().is_some() {
                break;
            }
        }
        out.push(tracker.hit());
    }
    Ok(out)
}

/// Closed-form solution of the noise-free logistic equation for `I`.
pub fn logistic_solution(params: &ModelParams, i0: f64, t: f64) -> f64 {
    let r = params.beta_n() - params.removal_rate();
    if r == 0.0 {
        return i0 / (1.0 + params.beta() * i0 * t);
    }
    let k = r / params.beta();
    k / (1.0 + (k / i0 - 1.0) * (-r * t).exp())
}
