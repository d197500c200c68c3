//! Parallel Monte Carlo over independent paths.
//!
//! Paths are indexed `0..n_paths` and path `j` draws its noise from stream
//! `j` of the master seed, so every path is fully determined by
//! `(master_seed, j)`. Workers return per-path statistics which are reduced
//! in index order, making the summary bit-identical for any pool size.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::DensityQuery;
use crate::error::{Result, SisError};
use crate::model::ModelParams;
use crate::sde::{CrossingTracker, PathSpec, PathStepper, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub params: ModelParams,
    pub path: PathSpec,
    pub n_paths: usize,
    /// Start of the time-average window.
    pub burn_in: f64,
    /// Levels whose first crossing is recorded per path.
    pub levels: Vec<f64>,
    /// Terminal values below this count as extinct.
    pub extinction_threshold: f64,
    pub bins: usize,
    pub master_seed: u64,
}

impl EnsembleConfig {
    /// Defaults: burn-in `T/10`, extinction threshold `1e-6·N`, 50 bins.
    pub fn new(params: ModelParams, path: PathSpec, n_paths: usize, master_seed: u64) -> Self {
        Self {
            params,
            path,
            n_paths,
            burn_in: path.horizon / 10.0,
            levels: vec![],
            extinction_threshold: 1e-6 * params.n_total(),
            bins: 50,
            master_seed,
        }
    }
}

/// Occupation histogram over `(0, N)` with uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn uniform_edges(n_total: f64, bins: usize) -> Vec<f64> {
        (0..=bins)
            .map(|k| n_total * k as f64 / bins as f64)
            .collect()
    }

    /// Normalized histogram of a sample.
    pub fn from_samples(samples: &[f64], n_total: f64, bins: usize) -> Self {
        let mut masses = vec![0.0; bins];
        for &x in samples {
            masses[bin_index(x, n_total, bins)] += 1.0;
        }
        let total = samples.len().max(1) as f64;
        masses.iter_mut().for_each(|m| *m /= total);
        Self {
            edges: Self::uniform_edges(n_total, bins),
            masses,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

#[inline]
fn bin_index(x: f64, n_total: f64, bins: usize) -> usize {
    ((x / n_total * bins as f64) as usize).min(bins - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub i0: f64,
    pub occupation: Histogram,
    /// Path-averaged time average of `I` over `[burn_in, T]`.
    pub time_avg_mean: f64,
    /// Path-averaged time average of `I²` over `[burn_in, T]`.
    pub time_avg_second: f64,
    pub extinction_threshold: f64,
    pub extinction_fraction: f64,
    pub levels: Vec<f64>,
    /// Fraction of paths that reached each level within `[0, T]`. A finite
    /// horizon proxy for recurrence, not recurrence itself.
    pub crossing_fraction: Vec<f64>,
    pub master_seed: u64,
    pub clamp_events: u64,
}

/// Trapezoidal weights over the grid indices `first..=last`.
#[derive(Debug, Clone, Copy)]
struct Window {
    first: usize,
    last: usize,
}

impl Window {
    fn new(burn_in: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(burn_in >= 0.0) {
            return Err(SisError::Domain(format!("burn-in {burn_in} must be >= 0")));
        }
        let first = (burn_in / dt - 1e-9).ceil().max(0.0) as usize;
        if first >= steps {
            return Err(SisError::Domain(format!(
                "empty averaging window: burn-in {burn_in} >= horizon {}",
                steps as f64 * dt
            )));
        }
        Ok(Self { first, last: steps })
    }

    #[inline]
    fn weight(&self, k: usize) -> f64 {
        if k < self.first {
            0.0
        } else if k == self.first || k == self.last {
            0.5
        } else {
            1.0
        }
    }

    fn total(&self) -> f64 {
        (self.last - self.first) as f64
    }
}

/// Trapezoidal time average of `f(I)` over `[burn_in, T]`.
pub fn time_average<F: Fn(f64) -> f64>(traj: &Trajectory, f: F, burn_in: f64) -> Result<f64> {
    let steps = traj.values.len().saturating_sub(1);
    let window = Window::new(burn_in, traj.dt, steps)?;
    let mut acc = 0.0;
    let mut weights = 0.0;
    for (k, &v) in traj.values.iter().enumerate().skip(window.first) {
        let w = window.weight(k);
        acc += w * f(v);
        weights += w;
    }
    Ok(acc / weights)
}

#[derive(Debug, Clone)]
struct PathStats {
    occupation: Vec<f64>,
    mean: f64,
    second: f64,
    terminal: f64,
    hits: Vec<bool>,
    clamp_events: u64,
}

fn run_path(cfg: &EnsembleConfig, steps: usize, window: Window, index: usize) -> PathStats {
    let n = cfg.params.n_total();
    let dt = cfg.path.dt;
    let bins = cfg.bins;
    let mut stepper = PathStepper::new(&cfg.params, &cfg.path, cfg.master_seed, index as u64);
    let mut trackers: Vec<CrossingTracker> = cfg
        .levels
        .iter()
        .map(|&l| CrossingTracker::new(l, cfg.path.i0))
        .collect();
    let mut occupation = vec![0.0; bins];
    let (mut s1, mut s2) = (0.0, 0.0);

    let mut accumulate = |k: usize, v: f64, occupation: &mut [f64]| {
        let w = window.weight(k);
        if w > 0.0 {
            s1 += w * v;
            s2 += w * v * v;
            occupation[bin_index(v, n, bins)] += w;
        }
    };

    let mut prev = cfg.path.i0;
    accumulate(0, prev, &mut occupation);
    for k in 1..=steps {
        let v = stepper.step();
        let t = k as f64 * dt;
        for tr in trackers.iter_mut() {
            tr.observe(t - dt, prev, t, v);
        }
        accumulate(k, v, &mut occupation);
        prev = v;
    }

    let total = window.total();
    occupation.iter_mut().for_each(|m| *m /= total);
    PathStats {
        occupation,
        mean: s1 / total,
        second: s2 / total,
        terminal: prev,
        hits: trackers.iter().map(|t| t.hit().is_some()).collect(),
        clamp_events: stepper.clamp_events(),
    }
}

/// Simulates the ensemble on the current rayon pool.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    if cfg.n_paths == 0 {
        return Err(SisError::InvalidParams("n_paths must be >= 1".into()));
    }
    if cfg.bins == 0 {
        return Err(SisError::InvalidParams("bins must be >= 1".into()));
    }
    let n = cfg.params.n_total();
    for &l in &cfg.levels {
        if !(l > 0.0 && l < n) {
            return Err(SisError::Domain(format!("level {l} outside (0, {n})")));
        }
    }
    let steps = cfg.path.validate(&cfg.params)?;
    if !(cfg.path.horizon > cfg.burn_in) {
        return Err(SisError::InvalidParams(format!(
            "horizon {} must exceed burn-in {}",
            cfg.path.horizon, cfg.burn_in
        )));
    }
    let window = Window::new(cfg.burn_in, cfg.path.dt, steps)?;

    let per_path: Vec<PathStats> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|j| run_path(cfg, steps, window, j))
        .collect();

    let count = cfg.n_paths as f64;
    let mut occupation = vec![0.0; cfg.bins];
    let (mut mean, mut second, mut extinct) = (0.0, 0.0, 0usize);
    let mut hits = vec![0usize; cfg.levels.len()];
    let mut clamp_events = 0;
    for s in &per_path {
        for (o, m) in occupation.iter_mut().zip(&s.occupation) {
            *o += m;
        }
        mean += s.mean;
        second += s.second;
        if s.terminal < cfg.extinction_threshold {
            extinct += 1;
        }
        for (h, &hit) in hits.iter_mut().zip(&s.hits) {
            *h += usize::from(hit);
        }
        clamp_events += s.clamp_events;
    }
    occupation.iter_mut().for_each(|m| *m /= count);

    Ok(EnsembleSummary {
        n_paths: cfg.n_paths,
        horizon: cfg.path.horizon,
        burn_in: cfg.burn_in,
        dt: cfg.path.dt,
        i0: cfg.path.i0,
        occupation: Histogram {
            edges: Histogram::uniform_edges(n, cfg.bins),
            masses: occupation,
        },
        time_avg_mean: mean / count,
        time_avg_second: second / count,
        extinction_threshold: cfg.extinction_threshold,
        extinction_fraction: extinct as f64 / count,
        levels: cfg.levels.clone(),
        crossing_fraction: hits.iter().map(|&h| h as f64 / count).collect(),
        master_seed: cfg.master_seed,
        clamp_events,
    })
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(cfg: &EnsembleConfig, workers: usize) -> Result<EnsembleSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SisError::InvalidParams(format!("thread pool: {e}")))?;
    pool.install(|| run_ensemble(cfg))
}

/// `Σ |empirical − analytic|` over the histogram bins.
pub fn histogram_l1(hist: &Histogram, q: &DensityQuery) -> Result<f64> {
    let n = q.params().n_total();
    let top = *hist.edges.last().unwrap_or(&0.0);
    if (top - n).abs() > 1e-12 * n {
        return Err(SisError::Domain(format!(
            "histogram spans (0, {top}) but the density lives on (0, {n})"
        )));
    }
    let analytic = q.bin_masses(&hist.edges);
    Ok(hist
        .masses
        .iter()
        .zip(&analytic)
        .map(|(e, a)| (e - a).abs())
        .sum())
}

/// L1 distance between the occupation histogram and the invariant law.
pub fn histogram_distance(summary: &EnsembleSummary, q: &DensityQuery) -> Result<f64> {
    histogram_l1(&summary.occupation, q)
}
