//! Model constants, reproduction numbers and threshold classifications.
//!
//! The stochastic SIS model reduces (via `S + I = N`) to the scalar SDE
//!
//! ```text
//! dI = I [ (βN − μ − γ − βI) dt + σ (N − I) dB ]
//! ```
//!
//! Everything in this module is closed-form arithmetic on the five
//! constants. The noise intensity is stored as its square so parameter
//! sets specified through `σ²` (e.g. `σ² = 2` for `R0^S = 1`) stay exact.

use serde::Serialize;

use crate::error::{Result, SisError};

/// The five model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    beta: f64,
    gamma: f64,
    mu: f64,
    sigma_sq: f64,
    n_total: f64,
}

impl ModelParams {
    /// Builds a parameter set from the noise standard deviation `sigma`.
    pub fn new(beta: f64, gamma: f64, mu: f64, sigma: f64, n_total: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(SisError::InvalidParams(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Self::with_noise_variance(beta, gamma, mu, sigma * sigma, n_total)
    }

    /// Builds a parameter set from the noise variance `σ²`.
    pub fn with_noise_variance(
        beta: f64,
        gamma: f64,
        mu: f64,
        sigma_sq: f64,
        n_total: f64,
    ) -> Result<Self> {
        let fields = [
            ("beta", beta),
            ("gamma", gamma),
            ("mu", mu),
            ("sigma", sigma_sq),
            ("N", n_total),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(SisError::InvalidParams(format!("{name} must be finite")));
            }
        }
        if beta <= 0.0 {
            return Err(SisError::InvalidParams("beta must be > 0".into()));
        }
        if gamma < 0.0 {
            return Err(SisError::InvalidParams("gamma must be >= 0".into()));
        }
        if mu < 0.0 {
            return Err(SisError::InvalidParams("mu must be >= 0".into()));
        }
        if mu + gamma <= 0.0 {
            return Err(SisError::InvalidParams("mu + gamma must be > 0".into()));
        }
        if sigma_sq < 0.0 {
            return Err(SisError::InvalidParams("sigma^2 must be >= 0".into()));
        }
        if n_total <= 0.0 {
            return Err(SisError::InvalidParams("N must be > 0".into()));
        }
        Ok(Self {
            beta,
            gamma,
            mu,
            sigma_sq,
            n_total,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn n_total(&self) -> f64 {
        self.n_total
    }

    /// `μ + γ`, the per-capita rate at which infectives leave the class.
    pub fn removal_rate(&self) -> f64 {
        self.mu + self.gamma
    }

    /// `βN`.
    pub fn beta_n(&self) -> f64 {
        self.beta * self.n_total
    }

    /// `σN`, the additive noise amplitude of the log-odds process.
    pub fn sigma_n(&self) -> f64 {
        self.sigma() * self.n_total
    }

    /// `σ²N²`.
    pub fn noise_sq(&self) -> f64 {
        self.sigma_sq * self.n_total * self.n_total
    }

    pub fn has_noise(&self) -> bool {
        self.sigma_sq > 0.0
    }

    /// `c0 = 2(μ+γ)/(σ²N²)`, absent when σ = 0.
    pub fn c0(&self) -> Option<f64> {
        self.has_noise()
            .then(|| 2.0 * self.removal_rate() / self.noise_sq())
    }

    /// Drift coefficient `x(βN − μ − γ − βx)` of the SDE for I.
    pub fn drift(&self, x: f64) -> f64 {
        x * (self.beta_n() - self.removal_rate() - self.beta * x)
    }

    /// Diffusion amplitude `σx(N − x)`.
    pub fn diffusion(&self, x: f64) -> f64 {
        self.sigma() * x * (self.n_total - x)
    }

    /// Returns the same parameter set with the noise replaced.
    pub fn with_sigma_sq(&self, sigma_sq: f64) -> Result<Self> {
        Self::with_noise_variance(self.beta, self.gamma, self.mu, sigma_sq, self.n_total)
    }

    /// `(β/k, σ/k, kN)`: the substitution under which every threshold is
    /// unchanged and trajectories scale by `k`.
    pub fn rescaled(&self, k: f64) -> Result<Self> {
        Self::with_noise_variance(
            self.beta / k,
            self.gamma,
            self.mu,
            self.sigma_sq / (k * k),
            self.n_total * k,
        )
    }
}

/// Almost-sure long-run behaviour of the infective count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AsymptoticRegime {
    ExtinctAlmostSurely,
    Recurrent,
}

/// Location of the mode of the invariant density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PersistenceClass {
    ExtinctLargeProb,
    PersistLargeProb,
    NotApplicable,
}

/// Noise-dependent thresholds; only defined for σ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StochasticThresholds {
    pub r0_stoch: f64,
    pub r0_pers: f64,
    pub c0: f64,
    pub asymptotic: AsymptoticRegime,
    pub persistence: PersistenceClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub r0_det: f64,
    /// `None` when σ = 0.
    pub stochastic: Option<StochasticThresholds>,
}

impl ThresholdReport {
    fn stoch(&self) -> Result<&StochasticThresholds> {
        self.stochastic.as_ref().ok_or(SisError::SigmaZero)
    }

    pub fn r0_stoch(&self) -> Result<f64> {
        self.stoch().map(|s| s.r0_stoch)
    }

    pub fn r0_pers(&self) -> Result<f64> {
        self.stoch().map(|s| s.r0_pers)
    }

    pub fn c0(&self) -> Result<f64> {
        self.stoch().map(|s| s.c0)
    }

    /// `|R0^S − 1|`, a conditioning indicator for the sharp threshold.
    pub fn distance_to_threshold(&self) -> Result<f64> {
        self.r0_stoch().map(|r| (r - 1.0).abs())
    }
}

/// Computes `R0^D`, `R0^S`, `R0^P`, `c0` and both classifications.
pub fn thresholds(params: &ModelParams) -> ThresholdReport {
    let m = params.removal_rate();
    let r0_det = params.beta_n() / m;
    if !params.has_noise() {
        return ThresholdReport {
            r0_det,
            stochastic: None,
        };
    }
    let s = params.noise_sq();
    let r0_stoch = r0_det - s / (2.0 * m);
    let r0_pers = (params.beta_n() - s) / m;
    let c0 = 2.0 * m / s;
    ThresholdReport {
        r0_det,
        stochastic: Some(StochasticThresholds {
            r0_stoch,
            r0_pers,
            c0,
            asymptotic: regime_for(r0_stoch),
            persistence: persistence_for(r0_stoch, r0_pers, c0),
        }),
    }
}

fn regime_for(r0_stoch: f64) -> AsymptoticRegime {
    if r0_stoch < 1.0 {
        AsymptoticRegime::ExtinctAlmostSurely
    } else {
        AsymptoticRegime::Recurrent
    }
}

fn persistence_for(r0_stoch: f64, r0_pers: f64, c0: f64) -> PersistenceClass {
    if r0_stoch <= 1.0 {
        PersistenceClass::NotApplicable
    } else if r0_pers < 1.0 || (r0_pers == 1.0 && c0 >= 4.0) {
        PersistenceClass::ExtinctLargeProb
    } else {
        PersistenceClass::PersistLargeProb
    }
}

/// Extinction with probability one iff `R0^S < 1`; the boundary value
/// `R0^S = 1` is recurrent. No tolerance band is applied.
pub fn classify_asymptotic(report: &ThresholdReport) -> Result<AsymptoticRegime> {
    report.r0_stoch().map(regime_for)
}

pub fn classify_persistence(report: &ThresholdReport) -> PersistenceClass {
    match report.stochastic {
        Some(s) => persistence_for(s.r0_stoch, s.r0_pers, s.c0),
        None => PersistenceClass::NotApplicable,
    }
}

/// Endemic equilibrium of the noise-free model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterministicLevels {
    /// `I* = N(1 − 1/R0^D)`, absent when `R0^D <= 1`.
    pub i_star: Option<f64>,
    /// `I*/N`.
    pub prevalence: Option<f64>,
}

pub fn deterministic_levels(params: &ModelParams) -> DeterministicLevels {
    let r0_det = params.beta_n() / params.removal_rate();
    if r0_det > 1.0 {
        let prevalence = 1.0 - 1.0 / r0_det;
        DeterministicLevels {
            i_star: Some(params.n_total() * prevalence),
            prevalence: Some(prevalence),
        }
    } else {
        DeterministicLevels {
            i_star: None,
            prevalence: None,
        }
    }
}

/// `Ĩ*(σ) = (√(β² − 2σ²(μ+γ)) − (β − σ²N)) / σ²`, the level the sample
/// paths oscillate around.
pub fn tilde_level(params: &ModelParams) -> Result<f64> {
    if !params.has_noise() {
        return Err(SisError::SigmaZero);
    }
    let s2 = params.sigma_sq();
    let disc = params.beta() * params.beta() - 2.0 * s2 * params.removal_rate();
    if disc < 0.0 {
        return Err(SisError::Domain(format!(
            "beta^2 < 2 sigma^2 (mu + gamma): discriminant {disc}"
        )));
    }
    Ok((disc.sqrt() - (params.beta() - s2 * params.n_total())) / s2)
}
