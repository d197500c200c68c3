//! Globally adaptive Gauss–Kronrod (10/21-point) quadrature.
//!
//! Bisects the panel with the largest error estimate until the summed
//! estimate meets `max(abs_tol, rel_tol·|I|)`. The leaf panels can be kept
//! and reused, which is how the cumulative distribution is cached.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Result, SisError};

// Kronrod abscissae (descending) for the 21-point rule; odd-indexed
// entries are the 10-point Gauss abscissae.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One application of the 21-point rule on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

/// Applies the Gauss–Kronrod pair once, returning the Kronrod value and
/// `|K − G|` as the error estimate.
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Panel { a, b, value, error }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_panels: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }
}

/// Result of an adaptive integration; `panels` is sorted by position.
#[derive(Debug, Clone)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: Vec<Panel>,
}

struct ByError(Panel);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.0.error == other.0.error
    }
}

impl Eq for ByError {}

impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.error.total_cmp(&other.0.error)
    }
}

/// Adaptive integration of `f` over `[a, b]` (`a <= b`).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(SisError::QuadratureFailure(format!(
            "non-finite interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            panels: vec![],
        });
    }
    if a > b {
        let mut r = integrate(f, b, a, tol)?;
        r.value = -r.value;
        return Ok(r);
    }

    let first = gk21(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    heap.push(ByError(first));

    loop {
        if !value.is_finite() {
            return Err(SisError::QuadratureFailure(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            break;
        }
        if heap.len() >= tol.max_panels {
            return Err(SisError::QuadratureFailure(format!(
                "panel budget {} exhausted on [{a}, {b}] (error {error:e}, value {value:e})",
                tol.max_panels
            )));
        }
        let ByError(worst) = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point; accept it.
            heap.push(ByError(Panel {
                error: 0.0,
                ..worst
            }));
            error -= worst.error;
            continue;
        }
        let left = gk21(&mut f, worst.a, mid);
        let right = gk21(&mut f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(ByError(left));
        heap.push(ByError(right));
    }

    let mut panels: Vec<Panel> = heap.into_iter().map(|p| p.0).collect();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    // Resum in positional order so the total is independent of heap order.
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        // both rules are exact through degree 19, so no split is needed
        let r = integrate(|x| x.powi(19), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0 / 20.0).abs() < 1e-15);
        assert_eq!(r.panels.len(), 1);
    }

    #[test]
    fn smooth_transcendental() {
        let r = integrate(f64::exp, -3.0, 2.0, Tolerance::default()).unwrap();
        let exact = 2f64.exp() - (-3f64).exp();
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::new(1e-10, 1e-10)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn reversed_and_empty_intervals() {
        let r = integrate(|x| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((r.value + 0.5).abs() < 1e-15);
        assert_eq!(integrate(|x| x, 2.0, 2.0, Tolerance::default()).unwrap().value, 0.0);
    }

    #[test]
    fn panels_tile_the_interval() {
        let r = integrate(|x: f64| (10.0 * x).sin().abs(), 0.0, 3.0, Tolerance::default()).unwrap();
        assert_eq!(r.panels.first().unwrap().a, 0.0);
        assert_eq!(r.panels.last().unwrap().b, 3.0);
        for w in r.panels.windows(2) {
            assert_eq!(w[0].b, w[1].a);
        }
    }

    #[test]
    fn non_finite_integrand_fails() {
        let r = integrate(|x: f64| if x > 0.5 { f64::INFINITY } else { 1.0 }, 0.0, 1.0, Tolerance::default());
        assert!(matches!(r, Err(SisError::QuadratureFailure(_))));
    }
}
