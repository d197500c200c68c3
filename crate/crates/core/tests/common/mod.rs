//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sis_lab_core::ModelParams;

/// Tanh–sinh quadrature of `f(x, N − x)` over `(0, N)`. The second argument
/// is computed without cancellation so integrands singular at `N` stay
/// accurate. Halves the step until two levels agree to `rel`.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F, n: f64, rel: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let t_max = 6.0;
    let node = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let x = n / (1.0 + (-2.0 * u).exp());
        let y = n / (1.0 + (2.0 * u).exp());
        if x == 0.0 || y == 0.0 {
            return 0.0;
        }
        let jac = n * FRAC_PI_2 * t.cosh() / (2.0 * u.cosh() * u.cosh());
        f(x, y) * jac
    };
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        sum += node(k as f64 * h) + node(-(k as f64) * h);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..10 {
        h *= 0.5;
        // only the new odd nodes
        let mut k = 1;
        while k as f64 * h <= t_max {
            sum += node(k as f64 * h) + node(-(k as f64) * h);
            k += 2;
        }
        let next = sum * h;
        if (next - estimate).abs() <= rel * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Parameters from `(m, N, c0, R0^S)` with `γ = μ = m/2`.
pub fn from_thresholds(m: f64, n: f64, c0: f64, r0_stoch: f64) -> ModelParams {
    let s = 2.0 * m / c0;
    let beta = (m * r0_stoch + 0.5 * s) / n;
    ModelParams::with_noise_variance(beta, 0.5 * m, 0.5 * m, s / (n * n), n).unwrap()
}

/// Random persistent parameter sets, kept away from `a = c0(R0^S−1) → 0`
/// where an x-space oracle would need mass below the smallest double.
pub fn persistent_grid(seed: u64, count: usize) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = rng.random_range(0.2..2.0);
            let n = rng.random_range(0.5..10.0);
            let c0 = rng.random_range(1.0..20.0);
            let r0s = rng.random_range(1.3..5.0);
            from_thresholds(m, n, c0, r0s)
        })
        .collect()
}

/// Mean and variance by direct formulas in `R0^D`, `R0^S`.
pub fn closed_moments(p: &ModelParams) -> (f64, f64) {
    let n = p.n_total();
    let m = p.gamma() + p.mu();
    let r0d = p.beta() * n / m;
    let r0s = r0d - p.sigma_sq() * n * n / (2.0 * m);
    let mean = (1.0 - 1.0 / (r0d + 1.0 - r0d / r0s)) * n;
    let i_star = (1.0 - 1.0 / r0d) * n;
    (mean, (i_star - mean) * mean)
}

/// Interior stationary point of the density: the root in `(0, N)` of
/// `−4x² + (4 − c0R0^P)Nx + (R0^P − 1)c0N²`, from the textbook formula.
pub fn interior_mode(p: &ModelParams) -> f64 {
    let n = p.n_total();
    let m = p.gamma() + p.mu();
    let s = p.sigma_sq() * n * n;
    let c0 = 2.0 * m / s;
    let r0p = (p.beta() * n - s) / m;
    let (a, b, c) = (-4.0, (4.0 - r0p * c0) * n, (r0p - 1.0) * c0 * n * n);
    let disc = (b * b - 4.0 * a * c).sqrt();
    [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
        .into_iter()
        .find(|x| *x > 0.0 && *x < n)
        .expect("interior root")
}

/// `Ĩ*(σ)` straight from its definition.
pub fn tilde(p: &ModelParams) -> f64 {
    let m = p.gamma() + p.mu();
    let s2 = p.sigma_sq();
    let b = p.beta();
    ((b * b - 2.0 * s2 * m).sqrt() - (b - s2 * p.n_total())) / s2
}
