//! The invariant density of the SIS diffusion and everything derived from it.
//!
//! For `R0^S > 1` the stationary density on `(0, N)` is
//!
//! ```text
//! p(x) = C N³ x^(a−1) (N−x)^−(a+3) exp(−c0 x/(N−x)),   a = c0 (R0^S − 1)
//! ```
//!
//! and its image under the log-odds map `ξ = ln(x/(N−x))` is
//! `u(ξ) = C exp(aξ − c0 e^ξ + 2 ln(1+e^ξ))`. Both are evaluated in log
//! space; `c0` grows like `σ⁻²` and the powers overflow long before the
//! density itself does.
//!
//! Integrals are taken in the log-odds coordinate, where the integrand is
//! smooth and decays exponentially on the left and doubly exponentially on
//! the right. The window is truncated where a rigorous tail bound drops
//! below `1e-17`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SisError};
use crate::model::{self, ModelParams, ThresholdReport};
use crate::quadrature::{self, gk21, Integral, Panel, Tolerance};

const TAIL_EPS: f64 = 1e-17;
const DOUBLE_ROOT_TOL: f64 = 1e-12;
const LEVEL_TIE_TOL: f64 = 1e-12;

/// `ln C` for the normalization constant
/// `C⁻¹ = c0^(−a) [(R0^S)² + (R0^S − 1)/c0] Γ(a)`, `a = c0(R0^S − 1)`.
pub fn log_normalization(c0: f64, r0_stoch: f64) -> Result<f64> {
    if !(r0_stoch > 1.0) {
        return Err(SisError::NotNormalizable { r0_stoch });
    }
    let a = c0 * (r0_stoch - 1.0);
    let bracket = r0_stoch * r0_stoch + (r0_stoch - 1.0) / c0;
    Ok(a * c0.ln() - bracket.ln() - ln_gamma(a))
}

/// Immutable evaluation context for one parameter set with `R0^S > 1`.
///
/// The cumulative-distribution cache is built at construction.
#[derive(Debug, Clone)]
pub struct DensityQuery {
    params: ModelParams,
    report: ThresholdReport,
    c0: f64,
    r0_stoch: f64,
    r0_pers: f64,
    shape_exp: f64,
    log_norm: f64,
    window: (f64, f64),
    cdf: CdfTable,
}

#[derive(Debug, Clone)]
struct CdfTable {
    panels: Vec<Panel>,
    cumulative: Vec<f64>,
    total: f64,
}

impl DensityQuery {
    pub fn new(params: ModelParams) -> Result<Self> {
        let report = model::thresholds(&params);
        let s = report.stochastic.ok_or(SisError::SigmaZero)?;
        let log_norm = log_normalization(s.c0, s.r0_stoch)?;
        if !log_norm.is_finite() {
            return Err(SisError::NotNormalizable {
                r0_stoch: s.r0_stoch,
            });
        }
        let shape_exp = s.c0 * (s.r0_stoch - 1.0);
        let window = integration_window(log_norm, shape_exp, s.c0);
        let mut q = Self {
            params,
            report,
            c0: s.c0,
            r0_stoch: s.r0_stoch,
            r0_pers: s.r0_pers,
            shape_exp,
            log_norm,
            window,
            cdf: CdfTable {
                panels: vec![],
                cumulative: vec![],
                total: 1.0,
            },
        };
        q.cdf = q.build_cdf()?;
        Ok(q)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn report(&self) -> &ThresholdReport {
        &self.report
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// The normalization constant `C`.
    pub fn normalization(&self) -> f64 {
        self.log_norm.exp()
    }

    /// Exponent `a = c0(R0^S − 1)` of the gamma-like integrand.
    pub fn shape_exponent(&self) -> f64 {
        self.shape_exp
    }

    /// Log-odds window outside which the density carries < 1e-17 mass.
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn n(&self) -> f64 {
        self.params.n_total()
    }

    fn check_open(&self, x: f64) -> Result<()> {
        if x > 0.0 && x < self.n() {
            Ok(())
        } else {
            Err(SisError::Domain(format!(
                "x = {x} outside (0, {})",
                self.n()
            )))
        }
    }

    /// `h_σ(x)` with `N − x` supplied separately so points near `N` keep
    /// their relative accuracy.
    fn shape_split(&self, x: f64, n_minus_x: f64) -> f64 {
        let k = self.c0 * (self.r0_pers - 1.0);
        k * x.ln() - (k + 4.0) * n_minus_x.ln() - self.c0 * x / n_minus_x
    }

    /// `h_σ(x) = c0(R0^P−1) ln x − [c0(R0^P−1)+4] ln(N−x) − c0 x/(N−x)`,
    /// so that `p(x) = C N³ exp(h_σ(x))`.
    pub fn shape(&self, x: f64) -> Result<f64> {
        self.check_open(x)?;
        Ok(self.shape_split(x, self.n() - x))
    }

    /// Derivative of `h_σ`.
    pub fn shape_slope(&self, x: f64) -> Result<f64> {
        self.check_open(x)?;
        let n = self.n();
        let pc = self.r0_pers * self.c0;
        let num = -4.0 * x * x + (4.0 - pc) * n * x + (self.r0_pers - 1.0) * self.c0 * n * n;
        Ok(num / ((n - x) * (n - x) * x))
    }

    fn log_density_split(&self, x: f64, n_minus_x: f64) -> f64 {
        self.log_norm + 3.0 * self.n().ln() + self.shape_split(x, n_minus_x)
    }

    /// `p^s_σ(x)`, extended by its limits at the endpoints.
    pub fn density(&self, x: f64) -> Result<f64> {
        let n = self.n();
        if x == n {
            return Ok(0.0);
        }
        if x == 0.0 {
            return Ok(match self.limit_at_zero() {
                BoundaryLimit::Infinite => f64::INFINITY,
                BoundaryLimit::Finite(v) => v,
                BoundaryLimit::Zero => 0.0,
            });
        }
        self.check_open(x)?;
        Ok(self.log_density_split(x, n - x).exp())
    }

    /// `p^s_σ(x)` for interior `x` with `N − x` given separately.
    pub fn density_split(&self, x: f64, n_minus_x: f64) -> f64 {
        self.log_density_split(x, n_minus_x).exp()
    }

    /// `ln u^s_σ(ξ)`.
    pub fn log_transformed_density(&self, xi: f64) -> f64 {
        self.log_norm + self.shape_exp * xi - self.c0 * xi.exp() + 2.0 * softplus(xi)
    }

    /// `u^s_σ(ξ) = C exp(c0(R0^S−1)ξ − c0 e^ξ + 2 ln(e^ξ + 1))`, the
    /// stationary density of the log-odds process.
    pub fn transformed_density(&self, xi: f64) -> f64 {
        self.log_transformed_density(xi).exp()
    }

    /// `p` pulled back to the log-odds coordinate including the Jacobian
    /// `dx/dξ = x(N−x)/N`. Uses the x-space formula, not `u`.
    fn density_times_jacobian(&self, xi: f64) -> (f64, f64) {
        let n = self.n();
        let (x, nx) = logit_split(xi, n);
        if x <= 0.0 || nx <= 0.0 {
            return (0.0, x);
        }
        let log_j = x.ln() + nx.ln() - n.ln();
        ((self.log_density_split(x, nx) + log_j).exp(), x)
    }

    /// `∫₀ᴺ f(x) p(x) dx` by adaptive quadrature of the x-space density.
    pub fn expectation<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let (lo, hi) = self.window;
        let r = quadrature::integrate(
            |xi| {
                let (w, x) = self.density_times_jacobian(xi);
                if w == 0.0 {
                    0.0
                } else {
                    w * f(x)
                }
            },
            lo,
            hi,
            Tolerance::new(1e-15, 1e-13),
        )?;
        Ok(r.value)
    }

    /// `∫ g(ξ) u(ξ) dξ` over the log-odds line.
    pub fn transformed_expectation<F: FnMut(f64) -> f64>(&self, mut g: F) -> Result<f64> {
        let (lo, hi) = self.window;
        let r = quadrature::integrate(
            |xi| {
                let u = self.transformed_density(xi);
                if u == 0.0 {
                    0.0
                } else {
                    u * g(xi)
                }
            },
            lo,
            hi,
            Tolerance::new(1e-15, 1e-13),
        )?;
        Ok(r.value)
    }

    pub fn limit_at_zero(&self) -> BoundaryLimit {
        if self.r0_pers < 1.0 {
            BoundaryLimit::Infinite
        } else if self.r0_pers == 1.0 {
            BoundaryLimit::Finite(self.normalization() / self.n())
        } else {
            BoundaryLimit::Zero
        }
    }

    /// Closed-form mean and variance.
    pub fn moments(&self) -> Moments {
        let n = self.n();
        let r0_det = self.report.r0_det;
        let mean = (1.0 - 1.0 / (r0_det + 1.0 - r0_det / self.r0_stoch)) * n;
        let i_star = (1.0 - 1.0 / r0_det) * n;
        Moments {
            mean,
            variance: (i_star - mean) * mean,
        }
    }

    /// Mean and variance by quadrature of `x·p` and `x²·p`.
    pub fn quadrature_moments(&self) -> Result<Moments> {
        let m1 = self.expectation(|x| x)?;
        let m2 = self.expectation(|x| x * x)?;
        Ok(Moments {
            mean: m1,
            variance: m2 - m1 * m1,
        })
    }

    /// Roots of `−4x² + (4 − R0^P c0)Nx + (R0^P − 1)c0N²` inside `(0, N)`,
    /// ascending. A discriminant within 1e-12 of zero counts as no root.
    pub fn turning_points(&self) -> Vec<f64> {
        let n = self.n();
        let (lo, hi) = match quadratic_roots(self.r0_pers, self.c0) {
            Some(r) => r,
            None => return vec![],
        };
        [lo, hi]
            .into_iter()
            .filter(|t| *t > 0.0 && *t < 1.0)
            .map(|t| t * n)
            .collect()
    }

    pub fn profile(&self) -> DensityProfile {
        let n = self.n();
        let turning = self.turning_points();
        let mut breaks = vec![0.0];
        breaks.extend(&turning);
        breaks.push(n);

        let mut intervals: Vec<MonotoneInterval> = Vec::new();
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let slope = self.shape_slope(mid).unwrap_or(0.0);
            let direction = if slope > 0.0 {
                Direction::Increasing
            } else {
                Direction::Decreasing
            };
            match intervals.last_mut() {
                Some(last) if last.direction == direction => last.hi = w[1],
                _ => intervals.push(MonotoneInterval {
                    lo: w[0],
                    hi: w[1],
                    direction,
                }),
            }
        }

        let limit_at_zero = self.limit_at_zero();
        let mode = match (limit_at_zero, intervals.first()) {
            (BoundaryLimit::Infinite, _) => Mode::Boundary,
            (_, Some(first)) if first.direction == Direction::Increasing && intervals.len() > 1 => {
                Mode::Interior(first.hi)
            }
            _ => Mode::Boundary,
        };

        // Interior local minimum (I₋) and maximum (I₊) from direction changes.
        let mut i_minus = None;
        let mut i_plus = None;
        for w in intervals.windows(2) {
            match (w[0].direction, w[1].direction) {
                (Direction::Decreasing, Direction::Increasing) => i_minus = Some(w[0].hi),
                (Direction::Increasing, Direction::Decreasing) => i_plus = Some(w[0].hi),
                _ => {}
            }
        }

        let theorem_case = ProfileCase::classify(self.r0_pers, self.c0);
        let computed: Vec<Direction> = intervals.iter().map(|i| i.direction).collect();
        let discrepancy = computed != theorem_case.expected_directions();

        DensityProfile {
            norm_const: self.normalization(),
            c0: self.c0,
            limit_at_zero,
            limit_at_n: 0.0,
            monotone_intervals: intervals,
            mode,
            i_minus,
            i_plus,
            theorem_case,
            discrepancy,
            moments: self.moments(),
        }
    }

    /// Interior mode `I*(σ)` when `R0^P > 1`.
    pub fn mode_level(&self) -> Option<f64> {
        (self.r0_pers > 1.0)
            .then(|| quadratic_roots(self.r0_pers, self.c0).map(|(_, hi)| hi * self.n()))
            .flatten()
    }

    fn build_cdf(&self) -> Result<CdfTable> {
        let (lo, hi) = self.window;
        let Integral { value, panels, .. } = quadrature::integrate(
            |xi| self.transformed_density(xi),
            lo,
            hi,
            Tolerance::new(1e-15, 1e-14),
        )?;
        let mut cumulative = Vec::with_capacity(panels.len());
        let mut acc = 0.0;
        for p in &panels {
            cumulative.push(acc);
            acc += p.value;
        }
        Ok(CdfTable {
            panels,
            cumulative,
            total: value,
        })
    }

    /// Total quadrature mass of `u`; equals 1 up to quadrature error.
    pub fn transformed_mass(&self) -> f64 {
        self.cdf.total
    }

    /// `P(I <= ξ)` in the log-odds coordinate.
    fn cdf_logit(&self, xi: f64) -> f64 {
        let (lo, hi) = self.window;
        if xi <= lo {
            return 0.0;
        }
        if xi >= hi {
            return 1.0;
        }
        let panels = &self.cdf.panels;
        let k = panels.partition_point(|p| p.a <= xi).saturating_sub(1);
        let partial = self.partial_panel(k, xi);
        ((self.cdf.cumulative[k] + partial) / self.cdf.total).clamp(0.0, 1.0)
    }

    fn partial_panel(&self, k: usize, xi: f64) -> f64 {
        let p = &self.cdf.panels[k];
        if xi <= p.a {
            0.0
        } else if xi >= p.b {
            p.value
        } else {
            gk21(&mut |t| self.transformed_density(t), p.a, xi).value
        }
    }

    /// Cumulative distribution function of the invariant law.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.n();
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x >= n {
            return 1.0;
        }
        self.cdf_logit(logit(x, n))
    }

    /// Inverse of [`cdf`](Self::cdf): bracketed Newton on the panel that
    /// contains the target probability.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(SisError::Domain(format!("quantile level {u} outside (0, 1)")));
        }
        let target = u * self.cdf.total;
        let cum = &self.cdf.cumulative;
        let k = cum.partition_point(|c| *c <= target).saturating_sub(1);
        let panel = self.cdf.panels[k];
        let base = cum[k];
        let (mut lo, mut hi) = (panel.a, panel.b);
        let mut xi = if panel.value > 0.0 {
            lo + (hi - lo) * ((target - base) / panel.value).clamp(0.0, 1.0)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..200 {
            let g = base + self.partial_panel(k, xi) - target;
            if g.abs() <= 1e-14 * self.cdf.total {
                break;
            }
            if g > 0.0 {
                hi = xi;
            } else {
                lo = xi;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + xi.abs()) {
                break;
            }
            let slope = self.transformed_density(xi);
            let newton = xi - g / slope;
            xi = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(logistic(xi, self.n()))
    }

    /// Probability mass of each bin `[edges[i], edges[i+1]]`.
    pub fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        let cdfs: Vec<f64> = edges.iter().map(|&e| self.cdf(e)).collect();
        cdfs.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    }

    /// `n` inverse-CDF draws; identical `(seed, n)` give identical output.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = open_unit(rng.next_u64());
                self.quantile(u).expect("open_unit is inside (0, 1)")
            })
            .collect()
    }

    /// Orders `I*(σ)` against `I*` and `Ĩ*(σ)` against `I*(σ)`.
    pub fn compare_levels(&self) -> Result<LevelComparison> {
        if !(self.r0_pers > 1.0) {
            return Err(SisError::PreconditionFailed(format!(
                "level comparison needs R0^P > 1, got {}",
                self.r0_pers
            )));
        }
        let n = self.n();
        let r0_det = self.report.r0_det;
        let i_star_sigma = self.mode_level().expect("R0^P > 1 has an interior mode");
        let i_star = (1.0 - 1.0 / r0_det) * n;
        let tilde_i_star = model::tilde_level(&self.params)?;
        let tol = LEVEL_TIE_TOL * n;
        let prevalence_order = LevelOrder::compare(i_star_sigma, i_star, tol);
        let tilde_order = LevelOrder::compare(tilde_i_star, i_star_sigma, tol);

        let prevalence_predicted = LevelOrder::compare(r0_det, 2.0, LEVEL_TIE_TOL);
        let tilde_predicted = tilde_theorem_order(r0_det, self.c0);
        Ok(LevelComparison {
            r0_det,
            c0: self.c0,
            i_star_sigma,
            i_star,
            tilde_i_star,
            prevalence_order,
            tilde_order,
            prevalence_predicted,
            tilde_predicted,
            consistent: prevalence_order == prevalence_predicted
                && tilde_predicted.is_none_or(|t| t == tilde_order),
        })
    }
}

/// Probability mass of `p^s_σ` on `(I* − ε, I* + ε) ∩ (0, N)`.
pub fn concentration_mass(params: &ModelParams, epsilon: f64) -> Result<f64> {
    let levels = model::deterministic_levels(params);
    let i_star = levels.i_star.ok_or_else(|| {
        SisError::PreconditionFailed("concentration needs R0^D > 1".into())
    })?;
    if !(epsilon > 0.0) {
        return Err(SisError::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    let q = DensityQuery::new(*params)?;
    let lo = i_star - epsilon;
    let hi = i_star + epsilon;
    Ok((q.cdf(hi) - q.cdf(lo)).clamp(0.0, 1.0))
}

/// Which side of the comparison theorem's ranges `R0^D` falls in, if any.
fn tilde_theorem_order(r0_det: f64, c0: f64) -> Option<LevelOrder> {
    let lower = 10.0 / (3.0 * c0);
    let equal_at = 1.5 + 2.0 / (3.0 * c0);
    if (r0_det - equal_at).abs() <= LEVEL_TIE_TOL * equal_at && equal_at < 1.75 {
        Some(LevelOrder::Equal)
    } else if lower < r0_det && r0_det < equal_at {
        Some(LevelOrder::Greater)
    } else if 1.0 + 2.0 / c0 < r0_det && r0_det <= lower {
        Some(LevelOrder::Less)
    } else {
        None
    }
}

/// Roots (in units of `N`) of `−4t² + (4 − Pc)t + (P − 1)c`, computed
/// without cancellation. `None` when the discriminant is negative or
/// within the double-root tolerance.
fn quadratic_roots(r0_pers: f64, c0: f64) -> Option<(f64, f64)> {
    let pc = r0_pers * c0;
    let b = 4.0 - pc;
    let c = (r0_pers - 1.0) * c0;
    let disc = (4.0 + pc) * (4.0 + pc) - 16.0 * c0;
    if disc.abs() <= DOUBLE_ROOT_TOL || disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // product of the roots is −c/4
    let (r1, r2) = if b >= 0.0 {
        let big = (b + sq) / 8.0;
        (-c / (4.0 * big), big)
    } else {
        let small = (b - sq) / 8.0;
        (small, -c / (4.0 * small))
    };
    Some((r1.min(r2), r1.max(r2)))
}

fn integration_window(log_norm: f64, a: f64, c0: f64) -> (f64, f64) {
    let log_eps = TAIL_EPS.ln();
    let ln4 = 4f64.ln();
    // ξ ≤ 0: u ≤ 4C e^{aξ}, so the left tail is at most 4C e^{aL}/a.
    let left = ((log_eps + a.ln() - ln4 - log_norm) / a).min(-1.0);
    // y = e^ξ ≥ Y ≥ max(1, 2(a+1)/c0): tail ≤ 4C Y^{a+1} e^{−c0 Y}·2/c0.
    let mut y = (2.0 * (a + 1.0) / c0).max(1.0);
    loop {
        let log_tail = log_norm + ln4 + (a + 1.0) * y.ln() - c0 * y + (2.0 / c0).ln();
        if log_tail < log_eps {
            break;
        }
        y *= 1.25;
    }
    (left, y.ln())
}

/// Map a uniform 64-bit word into the open interval (0, 1).
pub(crate) fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logit(x: f64, n: f64) -> f64 {
    (x / (n - x)).ln()
}

fn logistic(xi: f64, n: f64) -> f64 {
    logit_split(xi, n).0
}

/// `(x, N − x)` for `x = N e^ξ/(1 + e^ξ)`, each to full relative precision.
fn logit_split(xi: f64, n: f64) -> (f64, f64) {
    (n / (1.0 + (-xi).exp()), n / (1.0 + xi.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundaryLimit {
    Infinite,
    Finite(f64),
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneInterval {
    pub lo: f64,
    pub hi: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mode {
    /// The density is maximal (possibly unbounded) at 0.
    Boundary,
    Interior(f64),
}

impl Mode {
    pub fn location(&self) -> f64 {
        match self {
            Mode::Boundary => 0.0,
            Mode::Interior(x) => *x,
        }
    }
}

/// Case labels of the profile classification by `R0^P` and `c0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileCase {
    /// `R0^P < 1`, `R0^P <= 4(√c0 − 1)/c0`: decreasing.
    SubcriticalMonotone,
    /// `R0^P < 1`, `R0^P > 4(√c0 − 1)/c0`: decreasing, increasing, decreasing.
    SubcriticalBimodal,
    /// `R0^P = 1`, `c0 >= 4`: decreasing.
    CriticalMonotone,
    /// `R0^P = 1`, `c0 < 4`: increasing then decreasing.
    CriticalUnimodal,
    /// `R0^P > 1`: increasing then decreasing.
    Persistent,
}

impl ProfileCase {
    pub fn classify(r0_pers: f64, c0: f64) -> Self {
        if r0_pers < 1.0 {
            if r0_pers <= 4.0 * (c0.sqrt() - 1.0) / c0 {
                Self::SubcriticalMonotone
            } else {
                Self::SubcriticalBimodal
            }
        } else if r0_pers == 1.0 {
            if c0 >= 4.0 {
                Self::CriticalMonotone
            } else {
                Self::CriticalUnimodal
            }
        } else {
            Self::Persistent
        }
    }

    pub fn expected_directions(&self) -> Vec<Direction> {
        use Direction::*;
        match self {
            Self::SubcriticalMonotone | Self::CriticalMonotone => vec![Decreasing],
            Self::SubcriticalBimodal => vec![Decreasing, Increasing, Decreasing],
            Self::CriticalUnimodal | Self::Persistent => vec![Increasing, Decreasing],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub norm_const: f64,
    pub c0: f64,
    pub limit_at_zero: BoundaryLimit,
    pub limit_at_n: f64,
    pub monotone_intervals: Vec<MonotoneInterval>,
    pub mode: Mode,
    /// Interior local minimum.
    pub i_minus: Option<f64>,
    /// Interior local maximum; equals `I*(σ)` when `R0^P > 1`.
    pub i_plus: Option<f64>,
    pub theorem_case: ProfileCase,
    /// Set when the computed monotonicity differs from `theorem_case`.
    pub discrepancy: bool,
    pub moments: Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LevelOrder {
    Less,
    Equal,
    Greater,
}

impl LevelOrder {
    pub fn compare(a: f64, b: f64, tol: f64) -> Self {
        if (a - b).abs() <= tol {
            Self::Equal
        } else if a < b {
            Self::Less
        } else {
            Self::Greater
        }
    }

    pub fn sign(&self) -> i8 {
        match self {
            Self::Less => -1,
            Self::Equal => 0,
            Self::Greater => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelComparison {
    pub r0_det: f64,
    pub c0: f64,
    /// Mode of the invariant density.
    pub i_star_sigma: f64,
    /// Deterministic endemic level.
    pub i_star: f64,
    pub tilde_i_star: f64,
    /// `I*(σ)` vs `I*`.
    pub prevalence_order: LevelOrder,
    /// `Ĩ*(σ)` vs `I*(σ)`.
    pub tilde_order: LevelOrder,
    /// `sign(R0^D − 2)`.
    pub prevalence_predicted: LevelOrder,
    /// Ordering implied by the `R0^D` ranges, when one applies.
    pub tilde_predicted: Option<LevelOrder>,
    pub consistent: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p0() -> DensityQuery {
        DensityQuery::new(ModelParams::new(2.0, 0.5, 0.5, 0.5, 1.0).unwrap()).unwrap()
    }

    fn with_var(beta: f64, s2: f64) -> DensityQuery {
        DensityQuery::new(ModelParams::with_noise_variance(beta, 0.5, 0.5, s2, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn p0_normalization_matches_gamma_seven() {
        // Γ(7) = 720; C⁻¹ = 720·3.625/8⁷
        let exact = 8f64.powi(7) / (720.0 * 3.625);
        assert_relative_eq!(p0().normalization(), exact, max_relative = 1e-13);
        assert!((p0().normalization() - 803.5065).abs() < 1e-4);
        assert_relative_eq!(ln_gamma(7.0).exp(), 720.0, max_relative = 1e-13);
    }

    #[test]
    fn not_normalizable_at_threshold() {
        let p = ModelParams::with_noise_variance(2.0, 0.5, 0.5, 2.0, 1.0).unwrap();
        assert!(matches!(
            DensityQuery::new(p),
            Err(SisError::NotNormalizable { .. })
        ));
        assert!(matches!(
            log_normalization(1.0, 1.0),
            Err(SisError::NotNormalizable { .. })
        ));
        let quiet = ModelParams::new(2.0, 0.5, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(DensityQuery::new(quiet).unwrap_err(), SisError::SigmaZero);
    }

    #[test]
    fn shape_at_half() {
        let h = p0().shape(0.5).unwrap();
        assert_relative_eq!(h, 4.0 * 2f64.ln() - 8.0, max_relative = 1e-14);
        assert!(p0().shape(0.0).is_err());
        assert!(p0().shape(1.0).is_err());
        assert!(p0().shape(1.0 - 1e-9).unwrap() < -1e8);
    }

    #[test]
    fn shape_at_zero_for_critical_persistence() {
        // R0^P = 1: h(0⁺) = −4 ln N
        let n = 2.0;
        let p = ModelParams::with_noise_variance(1.0, 0.5, 0.5, 0.25, n).unwrap();
        let q = DensityQuery::new(p).unwrap();
        assert_eq!(q.report().r0_pers().unwrap(), 1.0);
        assert!((q.shape(1e-12).unwrap() + 4.0 * n.ln()).abs() < 1e-9);
        match q.limit_at_zero() {
            BoundaryLimit::Finite(v) => assert_relative_eq!(v, q.normalization() / n),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn p0_density_values() {
        let q = p0();
        let expected = q.normalization() * (4.0 * 2f64.ln() - 8.0).exp();
        assert_relative_eq!(q.density(0.5).unwrap(), expected, max_relative = 1e-13);
        assert!((q.density(0.5).unwrap() - 4.3128).abs() < 1e-4);
        assert_eq!(q.density(1.0).unwrap(), 0.0);
        assert_eq!(q.density(0.0).unwrap(), 0.0);
        assert!(q.density(1.5).is_err());
        assert!(q.density(1.0 - 1e-6).unwrap() < 1e-100);
    }

    #[test]
    fn transformed_density_at_origin() {
        let q = p0();
        let u0 = q.transformed_density(0.0);
        assert_relative_eq!(u0, 4.0 * q.normalization() * (-8f64).exp(), max_relative = 1e-13);
        assert!((u0 - 1.0782).abs() < 1e-4);
        assert_relative_eq!(4.0 * u0, q.density(0.5).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn p0_profile() {
        let prof = p0().profile();
        assert_eq!(prof.mode, Mode::Interior(0.5));
        assert_eq!(prof.limit_at_zero, BoundaryLimit::Zero);
        assert_eq!(prof.limit_at_n, 0.0);
        assert_eq!(prof.monotone_intervals.len(), 2);
        assert_eq!(prof.monotone_intervals[0].direction, Direction::Increasing);
        assert_eq!(prof.monotone_intervals[0].hi, 0.5);
        assert_eq!(prof.monotone_intervals[1].direction, Direction::Decreasing);
        assert_eq!(prof.i_plus, Some(0.5));
        assert_eq!(prof.i_minus, None);
        assert_eq!(prof.theorem_case, ProfileCase::Persistent);
        assert!(!prof.discrepancy);
    }

    #[test]
    fn bimodal_profile() {
        // c0 = 1, R0^P = 0.5
        let prof = with_var(2.5, 2.0).profile();
        assert_eq!(prof.limit_at_zero, BoundaryLimit::Infinite);
        assert_eq!(prof.mode, Mode::Boundary);
        let lo = (3.5 - 4.25f64.sqrt()) / 8.0;
        let hi = (3.5 + 4.25f64.sqrt()) / 8.0;
        assert!((prof.i_minus.unwrap() - lo).abs() < 1e-14);
        assert!((prof.i_plus.unwrap() - hi).abs() < 1e-14);
        assert!((lo - 0.17981).abs() < 1e-5 && (hi - 0.69519).abs() < 1e-5);
        let dirs: Vec<_> = prof.monotone_intervals.iter().map(|i| i.direction).collect();
        assert_eq!(
            dirs,
            vec![Direction::Decreasing, Direction::Increasing, Direction::Decreasing]
        );
        assert_eq!(prof.theorem_case, ProfileCase::SubcriticalBimodal);
        assert!(!prof.discrepancy);
    }

    #[test]
    fn critical_unimodal_profile() {
        // c0 = 1, R0^P = 1
        let q = with_var(3.0, 2.0);
        let prof = q.profile();
        assert!(matches!(prof.limit_at_zero, BoundaryLimit::Finite(_)));
        assert_eq!(prof.monotone_intervals.len(), 2);
        assert_eq!(prof.monotone_intervals[0].direction, Direction::Increasing);
        assert!((prof.monotone_intervals[0].hi - 0.75).abs() < 1e-15);
        assert_eq!(prof.theorem_case, ProfileCase::CriticalUnimodal);
        assert_eq!(prof.mode, Mode::Interior(prof.monotone_intervals[0].hi));
    }

    #[test]
    fn flags_subcritical_case_with_roots_outside_domain() {
        // c0 = 8, R0^P = 0.95: labelled bimodal, but both roots are negative
        let q = with_var(1.2, 0.25);
        assert_relative_eq!(q.report().r0_pers().unwrap(), 0.95, max_relative = 1e-14);
        let prof = q.profile();
        assert_eq!(prof.theorem_case, ProfileCase::SubcriticalBimodal);
        assert_eq!(prof.monotone_intervals.len(), 1);
        assert_eq!(prof.monotone_intervals[0].direction, Direction::Decreasing);
        assert!(prof.discrepancy);
    }

    #[test]
    fn p0_moments_exact() {
        let m = p0().moments();
        assert_relative_eq!(m.mean, 14.0 / 29.0, max_relative = 1e-15);
        assert_relative_eq!(m.variance, 14.0 / 1682.0, max_relative = 1e-14);
        assert_relative_eq!(m.second_moment(), 7.0 / 29.0, max_relative = 1e-14);
    }

    #[test]
    fn quadrature_agrees_with_closed_form_moments() {
        let q = p0();
        let a = q.moments();
        let b = q.quadrature_moments().unwrap();
        assert_relative_eq!(a.mean, b.mean, max_relative = 1e-10);
        assert_relative_eq!(a.variance, b.variance, max_relative = 1e-9);
    }

    #[test]
    fn both_densities_integrate_to_one() {
        for q in [p0(), with_var(2.5, 2.0), with_var(3.0, 2.0)] {
            assert!((q.expectation(|_| 1.0).unwrap() - 1.0).abs() < 1e-10);
            assert!((q.transformed_expectation(|_| 1.0).unwrap() - 1.0).abs() < 1e-10);
            assert!((q.transformed_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cdf_boundaries_and_quantile() {
        let q = p0();
        assert_eq!(q.cdf(0.0), 0.0);
        assert_eq!(q.cdf(1.0), 1.0);
        assert!(q.cdf(1e-9) < 1e-12);
        assert!(q.cdf(1.0 - 1e-9) > 1.0 - 1e-12);
        let m = q.quantile(0.5).unwrap();
        assert!((q.cdf(m) - 0.5).abs() < 1e-10);
        // mean 14/29 < mode 0.5: more than half the mass sits left of the mode
        assert!(q.cdf(0.5) > 0.5);
        assert!(q.quantile(0.0).is_err());
        assert!(q.quantile(1.0).is_err());
        assert!(q.quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let q = with_var(2.5, 2.0);
        for &x in &[1e-6, 0.01, 0.2, 0.5, 0.7, 0.95] {
            let back = q.quantile(q.cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "{x} -> {back}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let q = p0();
        assert!(q.sample(1, 0).is_empty());
        let a = q.sample(42, 100);
        let b = q.sample(42, 100);
        assert_eq!(a, b);
        assert_ne!(a, q.sample(43, 100));
        assert!(a.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn compare_levels_examples() {
        let c = p0().compare_levels().unwrap();
        assert_eq!(c.prevalence_order, LevelOrder::Equal);
        assert_eq!(c.i_star_sigma, 0.5);
        assert_eq!(c.i_star, 0.5);

        // c0 = 4, R0^P = 2.5
        let c = with_var(3.0, 0.5).compare_levels().unwrap();
        assert!((c.i_star_sigma - (-6.0 + 132f64.sqrt()) / 8.0).abs() < 1e-15);
        assert!((c.i_star_sigma - 0.68614).abs() < 1e-5);
        assert_eq!(c.prevalence_order, LevelOrder::Greater);
        assert!(c.consistent);

        // c0 = 3, β = 31/18: both levels equal 1/3
        let c = with_var(31.0 / 18.0, 2.0 / 3.0).compare_levels().unwrap();
        assert!((c.i_star_sigma - 1.0 / 3.0).abs() < 1e-14);
        assert!((c.tilde_i_star - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(c.tilde_order, LevelOrder::Equal);
        assert_eq!(c.tilde_predicted, Some(LevelOrder::Equal));

        // R0^P <= 1
        assert!(matches!(
            with_var(2.5, 2.0).compare_levels(),
            Err(SisError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn concentration_full_support_and_guards() {
        let p = ModelParams::new(2.0, 0.5, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(concentration_mass(&p, 0.5).unwrap(), 1.0);
        let sub = ModelParams::new(0.8, 0.5, 0.5, 0.1, 1.0).unwrap();
        assert!(matches!(
            concentration_mass(&sub, 0.1),
            Err(SisError::PreconditionFailed(_))
        ));
        let noisy = ModelParams::new(2.0, 0.5, 0.5, 1.5, 1.0).unwrap();
        assert!(matches!(
            concentration_mass(&noisy, 0.1),
            Err(SisError::NotNormalizable { .. })
        ));
    }

    #[test]
    fn quadratic_roots_are_stable_for_large_c0() {
        // c0 = 2000: naive (b + √Δ)/8 loses digits to cancellation
        let (r0_pers, c0) = (1.9, 2000.0);
        let (_, hi) = quadratic_roots(r0_pers, c0).unwrap();
        let residual = -4.0 * hi * hi + (4.0 - r0_pers * c0) * hi + (r0_pers - 1.0) * c0;
        assert!(residual.abs() < 1e-10 * c0);
    }
}
