//! Scale function of the log-odds diffusion and the boundary test built on
//! it.
//!
//! With `a = c0(R0^S − 1)` the scale density has the closed form
//!
//! ```text
//! ln φ(ξ) = −aξ + c0(e^ξ − 1) − 2 ln((e^ξ + 1)/2)
//! ```
//!
//! and `ψ(x) = ∫₀^x φ`. The left boundary is attracting exactly when
//! `ψ(−∞)` is finite; `ψ(+∞)` always diverges.

use serde::Serialize;

use crate::density::softplus;
use crate::error::{Result, SisError};
use crate::model::{AsymptoticRegime, ModelParams};
use crate::quadrature::{integrate, Tolerance};

pub const MIN_PROBE_DEPTH: f64 = 20.0;

const CAUCHY_TOL: f64 = 1e-6;
const RATIO_TOL: f64 = 1e-6;
const MAX_DOUBLINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleEvaluator {
    params: ModelParams,
    /// Linear coefficient `a` of `−aξ`.
    slope: f64,
    c0: f64,
}

impl ScaleEvaluator {
    pub fn new(params: ModelParams) -> Result<Self> {
        let c0 = params.c0().ok_or(SisError::SigmaZero)?;
        let m = params.removal_rate();
        let slope = (2.0 / params.noise_sq()) * (params.beta_n() - m - 0.5 * params.noise_sq());
        Ok(Self { params, slope, c0 })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Coefficient `a` of the linear term; its sign decides the left
    /// boundary.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    #[inline]
    pub fn log_phi(&self, xi: f64) -> f64 {
        let two_ln2 = 2.0 * std::f64::consts::LN_2;
        -self.slope * xi + self.c0 * xi.exp_m1() - 2.0 * softplus(xi) + two_ln2
    }

    pub fn phi(&self, xi: f64) -> f64 {
        self.log_phi(xi).exp()
    }

    /// Limit of `φ(ξ)e^{aξ}` as `ξ → −∞`.
    pub fn left_asymptote(&self) -> f64 {
        (-self.c0 + 2.0 * std::f64::consts::LN_2).exp()
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        let r = integrate(|xi| self.phi(xi), 0.0, x, Tolerance::new(1e-300, 1e-12))?;
        if !r.value.is_finite() {
            return Err(SisError::QuadratureFailure(format!("ψ({x}) overflows")));
        }
        Ok(r.value)
    }

    /// `ln ∫_lo^hi φ` for `lo < hi`, robust to φ spanning many decades.
    fn log_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        let shift = (0..=64)
            .map(|k| self.log_phi(lo + (hi - lo) * k as f64 / 64.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let r = integrate(
            |xi| (self.log_phi(xi) - shift).exp(),
            lo,
            hi,
            Tolerance::new(1e-300, 1e-10),
        )?;
        Ok(shift + r.value.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundaryVerdict {
    /// The limit exists; carries the estimate.
    Finite(f64),
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryClassification {
    pub psi_minus_inf: BoundaryVerdict,
    pub psi_plus_inf: BoundaryVerdict,
    pub regime: AsymptoticRegime,
    /// Deepest probe `M·2^k` examined.
    pub depth: f64,
}

fn log_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Probes `ψ(−M·2^k)` over successive doublings. Window `k` covers
/// `[−M·2^{k+1}, −M·2^k]`; writing `W_k` for its integral and `A_k` for its
/// average height:
///
/// * finite when `W_k` is below `1e−6` of the accumulated `|ψ|` and `A_k` is
///   falling,
/// * divergent when `A_k` rises by more than `1e−6` over two consecutive
///   doublings (exponential growth), or stays flat to `1e−6` all the way down
///   (linear growth).
pub fn classify_boundaries(ev: &ScaleEvaluator, probe_depth: f64) -> Result<BoundaryClassification> {
    if !(probe_depth >= MIN_PROBE_DEPTH) {
        return Err(SisError::InvalidParams(format!(
            "probe depth {probe_depth} must be >= {MIN_PROBE_DEPTH}"
        )));
    }
    let mut log_total = ev.log_integral(-probe_depth, 0.0)?;
    let mut prev_log_avg: Option<f64> = None;
    let mut rising = 0usize;
    let mut flat = 0usize;
    let mut depth = probe_depth;

    for _ in 0..MAX_DOUBLINGS {
        let log_w = ev.log_integral(-2.0 * depth, -depth)?;
        if log_w.is_nan() {
            return Err(SisError::Inconclusive(format!("window at depth {depth} is NaN")));
        }
        let log_avg = log_w - depth.ln();
        let log_ratio = prev_log_avg.map(|p| log_avg - p);
        log_total = log_add(log_total, log_w);
        depth *= 2.0;

        let falling = log_ratio.is_some_and(|r| r < 0.0);
        if log_w - log_total <= CAUCHY_TOL.ln() && (falling || log_w == f64::NEG_INFINITY) {
            let remainder = psi_minus_inf_estimate(ev, depth)?;
            return Ok(BoundaryClassification {
                psi_minus_inf: BoundaryVerdict::Finite(-remainder),
                psi_plus_inf: BoundaryVerdict::Divergent,
                regime: AsymptoticRegime::ExtinctAlmostSurely,
                depth,
            });
        }
        match log_ratio {
            Some(r) if r > RATIO_TOL.ln_1p() => {
                rising += 1;
                flat = 0;
            }
            Some(r) if r.abs() <= RATIO_TOL.ln_1p() => {
                flat += 1;
                rising = 0;
            }
            Some(_) => {
                rising = 0;
                flat = 0;
            }
            None => {}
        }
        if rising >= 2 || !log_total.is_finite() {
            return Ok(divergent(depth));
        }
        prev_log_avg = Some(log_avg);
    }
    if flat >= 3 {
        return Ok(divergent(depth));
    }
    Err(SisError::Inconclusive(format!(
        "no decision after probing to depth {depth:e} (a = {:e})",
        ev.slope()
    )))
}

fn divergent(depth: f64) -> BoundaryClassification {
    BoundaryClassification {
        psi_minus_inf: BoundaryVerdict::Divergent,
        psi_plus_inf: BoundaryVerdict::Divergent,
        regime: AsymptoticRegime::Recurrent,
        depth,
    }
}

/// `∫_{−depth}^0 φ` once the tail beyond `depth` is negligible.
fn psi_minus_inf_estimate(ev: &ScaleEvaluator, depth: f64) -> Result<f64> {
    Ok(ev.log_integral(-depth, 0.0)?.exp())
}
