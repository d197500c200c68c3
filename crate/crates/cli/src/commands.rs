use std::fmt;

use serde::Serialize;
use sis_lab_core::density::{concentration_mass, DensityQuery, Mode};
use sis_lab_core::ensemble::{histogram_distance, run_ensemble, run_ensemble_with_workers, EnsembleConfig};
use sis_lab_core::feller::{classify_boundaries, ScaleEvaluator};
use sis_lab_core::fpe::steady_state;
use sis_lab_core::model::{deterministic_levels, thresholds, tilde_level, ModelParams};
use sis_lab_core::sde::{simulate_path, PathSpec};
use sis_lab_core::SisError;

use crate::config::{validate, Config, ConfigError, RawConfig};
use crate::output::{csv, to_json, Cell, OutputDir};
use crate::{Axis, Command};

#[derive(Debug)]
pub enum Failure {
    Core(SisError),
    Config(ConfigError),
    Io(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => e.fmt(f),
            Failure::Config(e) => e.fmt(f),
            Failure::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<SisError> for Failure {
    fn from(e: SisError) -> Self {
        Failure::Core(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

pub struct Context<'a> {
    pub raw: &'a RawConfig,
    pub config: &'a Config,
    pub axes: &'a [Axis],
    pub quantities: &'a [String],
    pub threads: Option<usize>,
}

/// Quantities `sweep` can record.
pub const QUANTITIES: [&str; 15] = [
    "r0_det",
    "r0_stoch",
    "r0_pers",
    "c0",
    "i_star",
    "i_star_sigma",
    "tilde_i_star",
    "prevalence",
    "mean",
    "variance",
    "mode",
    "norm_const",
    "prevalence_order",
    "tilde_order",
    "discrepancy",
];

const DEFAULT_QUANTITIES: [&str; 4] = ["r0_det", "r0_stoch", "r0_pers", "c0"];

/// Validates every point of the sweep grid; returns the first point's config.
pub fn check_sweep(raw: &RawConfig, axes: &[Axis]) -> Result<Config, ConfigError> {
    let mut first = None;
    for point in grid(axes) {
        let c = validate(&apply(raw, axes, &point)?)?;
        first.get_or_insert(c);
    }
    first.ok_or_else(|| ConfigError::Validation("empty sweep".into()))
}

fn grid(axes: &[Axis]) -> Vec<Vec<f64>> {
    match axes {
        [a] => a.values.iter().map(|&x| vec![x]).collect(),
        [a, b] => a
            .values
            .iter()
            .flat_map(|&x| b.values.iter().map(move |&y| vec![x, y]))
            .collect(),
        _ => vec![vec![]],
    }
}

fn apply(raw: &RawConfig, axes: &[Axis], point: &[f64]) -> Result<RawConfig, ConfigError> {
    let mut r = raw.clone();
    for (axis, &v) in axes.iter().zip(point) {
        r.set_axis(&axis.name, v)?;
    }
    Ok(r)
}

pub fn execute(command: Command, ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let p = ctx.config.params;
    match command {
        Command::Thresholds => thresholds_cmd(&p, out),
        Command::Density => density_cmd(ctx, out),
        Command::Moments => moments_cmd(&p, out),
        Command::Simulate => simulate_cmd(ctx, out),
        Command::Ensemble => ensemble_cmd(ctx, out),
        Command::Fpe => fpe_cmd(ctx, out),
        Command::Feller => feller_cmd(ctx, out),
        Command::Compare => compare_cmd(ctx, out),
        Command::Sweep => sweep_cmd(ctx, out),
        Command::Concentration => concentration_cmd(ctx, out),
    }
}

#[derive(Serialize)]
struct ThresholdsOut {
    r0_det: f64,
    r0_stoch: Option<f64>,
    r0_pers: Option<f64>,
    c0: Option<f64>,
    asymptotic: Option<sis_lab_core::AsymptoticRegime>,
    persistence: Option<sis_lab_core::PersistenceClass>,
    i_star: Option<f64>,
    prevalence: Option<f64>,
    tilde_i_star: Option<f64>,
}

fn thresholds_cmd(p: &ModelParams, out: &mut OutputDir) -> Outcome {
    let r = thresholds(p);
    let s = r.stochastic;
    let levels = deterministic_levels(p);
    let doc = ThresholdsOut {
        r0_det: r.r0_det,
        r0_stoch: s.map(|s| s.r0_stoch),
        r0_pers: s.map(|s| s.r0_pers),
        c0: s.map(|s| s.c0),
        asymptotic: s.map(|s| s.asymptotic),
        persistence: s.map(|s| s.persistence),
        i_star: levels.i_star,
        prevalence: levels.prevalence,
        tilde_i_star: tilde_level(p).ok(),
    };
    out.write("thresholds.json", &to_json(&doc)?)?;
    Ok(())
}

fn density_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let q = DensityQuery::new(ctx.config.params)?;
    let n = ctx.config.params.n_total();
    let points = ctx.config.run.points;
    let mut rows = Vec::with_capacity(points);
    for k in 1..points {
        let x = n * k as f64 / points as f64;
        rows.push(vec![Cell::Num(x), Cell::Num(q.density(x)?)]);
    }
    out.write("density.csv", &csv(&["x", "p"], rows))?;
    out.write("profile.json", &to_json(&q.profile())?)?;
    Ok(())
}

#[derive(Serialize)]
struct MomentsOut {
    analytic_mean: f64,
    analytic_variance: f64,
    quadrature_mean: f64,
    quadrature_variance: f64,
    mean_relative_error: f64,
    variance_relative_error: f64,
}

fn moments_cmd(p: &ModelParams, out: &mut OutputDir) -> Outcome {
    let q = DensityQuery::new(*p)?;
    let a = q.moments();
    let b = q.quadrature_moments()?;
    let doc = MomentsOut {
        analytic_mean: a.mean,
        analytic_variance: a.variance,
        quadrature_mean: b.mean,
        quadrature_variance: b.variance,
        mean_relative_error: ((b.mean - a.mean) / a.mean).abs(),
        variance_relative_error: ((b.variance - a.variance) / a.variance).abs(),
    };
    out.write("moments.json", &to_json(&doc)?)?;
    Ok(())
}

fn path_spec(ctx: &Context<'_>) -> PathSpec {
    let r = &ctx.config.run;
    PathSpec {
        scheme: r.scheme,
        dt: r.dt,
        horizon: r.horizon,
        i0: r.i0,
    }
}

fn simulate_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let r = &ctx.config.run;
    let traj = simulate_path(&ctx.config.params, r.scheme, r.dt, r.horizon, r.i0, r.seed)?;
    let rows = traj
        .times
        .iter()
        .zip(&traj.values)
        .map(|(&t, &v)| vec![Cell::Num(t), Cell::Num(v)]);
    out.write("trajectory.csv", &csv(&["t", "i"], rows))?;
    Ok(())
}

#[derive(Serialize)]
struct EnsembleOut<'a> {
    #[serde(flatten)]
    summary: &'a sis_lab_core::EnsembleSummary,
    histogram_l1: Option<f64>,
}

fn ensemble_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let r = &ctx.config.run;
    let mut cfg = EnsembleConfig::new(ctx.config.params, path_spec(ctx), r.paths, r.seed);
    cfg.burn_in = r.burn_in;
    cfg.levels = r.levels.clone();
    cfg.bins = r.bins;
    cfg.extinction_threshold = r.threshold;
    let summary = match ctx.threads {
        Some(w) => run_ensemble_with_workers(&cfg, w)?,
        None => run_ensemble(&cfg)?,
    };
    let q = match DensityQuery::new(ctx.config.params) {
        Ok(q) => Some(q),
        Err(SisError::NotNormalizable { .. } | SisError::SigmaZero) => None,
        Err(e) => return Err(e.into()),
    };
    let analytic = q.as_ref().map(|q| q.bin_masses(&summary.occupation.edges));
    let doc = EnsembleOut {
        summary: &summary,
        histogram_l1: q.as_ref().map(|q| histogram_distance(&summary, q)).transpose()?,
    };
    out.write("summary.json", &to_json(&doc)?)?;
    let h = &summary.occupation;
    let rows = (0..h.masses.len()).map(|k| {
        vec![
            Cell::Num(h.edges[k]),
            Cell::Num(h.edges[k + 1]),
            Cell::Num(h.masses[k]),
            analytic.as_ref().map_or(Cell::Empty, |a| Cell::Num(a[k])),
        ]
    });
    out.write("histogram.csv", &csv(&["bin_left", "bin_right", "mass", "analytic_mass"], rows))?;
    Ok(())
}

#[derive(Serialize)]
struct FpeOut {
    n_cells: usize,
    l1_vs_analytic: Option<f64>,
    boundary_mass: f64,
    residual_flux: f64,
    increment: f64,
    time: f64,
    total_mass: f64,
    clip_budget: f64,
}

fn fpe_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let r = &ctx.config.run;
    let p = ctx.config.params;
    let ss = steady_state(&p, r.n_cells, r.tol, r.max_time)?;
    let analytic = match DensityQuery::new(p) {
        Ok(q) => Some(q.bin_masses(&ss.state.edges)),
        Err(_) => None,
    };
    let rows = ss.state.centers().into_iter().enumerate().map(|(k, x)| {
        vec![
            Cell::Num(x),
            Cell::Num(ss.state.masses[k]),
            analytic.as_ref().map_or(Cell::Empty, |a| Cell::Num(a[k])),
        ]
    });
    out.write("steady_state.csv", &csv(&["x_center", "cell_mass", "analytic_mass"], rows))?;
    let doc = FpeOut {
        n_cells: ss.state.n_cells(),
        l1_vs_analytic: ss.l1_vs_analytic,
        boundary_mass: ss.boundary_mass,
        residual_flux: ss.residual_flux,
        increment: ss.increment,
        time: ss.state.time,
        total_mass: ss.state.total_mass(),
        clip_budget: ss.state.clip_budget,
    };
    out.write("fpe_error.json", &to_json(&doc)?)?;
    Ok(())
}

#[derive(Serialize)]
struct FellerOut {
    #[serde(flatten)]
    classification: sis_lab_core::BoundaryClassification,
    slope: f64,
    r0_stoch: f64,
}

fn feller_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let p = ctx.config.params;
    let ev = ScaleEvaluator::new(p)?;
    let classification = classify_boundaries(&ev, ctx.config.run.probe_depth)?;
    let doc = FellerOut {
        classification,
        slope: ev.slope(),
        r0_stoch: thresholds(&p).r0_stoch()?,
    };
    out.write("feller.json", &to_json(&doc)?)?;
    Ok(())
}

const COMPARE_FIELDS: [&str; 10] = [
    "r0_det",
    "c0",
    "i_star_sigma",
    "i_star",
    "tilde_i_star",
    "prevalence_order",
    "tilde_order",
    "prevalence_predicted",
    "tilde_predicted",
    "consistent",
];

fn compare_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    if ctx.axes.is_empty() {
        let cmp = DensityQuery::new(ctx.config.params)?.compare_levels()?;
        out.write("compare.json", &to_json(&cmp)?)?;
        return Ok(());
    }
    let mut header: Vec<&str> = ctx.axes.iter().map(|a| a.name.as_str()).collect();
    header.extend(COMPARE_FIELDS);
    let mut rows = vec![];
    for point in grid(ctx.axes) {
        let cfg = validate(&apply(ctx.raw, ctx.axes, &point)?)?;
        let mut row: Vec<Cell> = point.iter().map(|&v| Cell::Num(v)).collect();
        // points where no interior mode exists are left blank
        match DensityQuery::new(cfg.params).and_then(|q| q.compare_levels()) {
            Ok(c) => {
                let sign = |o: sis_lab_core::LevelOrder| Cell::Int(o.sign().into());
                row.extend([
                    Cell::Num(c.r0_det),
                    Cell::Num(c.c0),
                    Cell::Num(c.i_star_sigma),
                    Cell::Num(c.i_star),
                    Cell::Num(c.tilde_i_star),
                    sign(c.prevalence_order),
                    sign(c.tilde_order),
                    sign(c.prevalence_predicted),
                    c.tilde_predicted.map_or(Cell::Empty, sign),
                    Cell::Text(c.consistent.to_string()),
                ]);
            }
            Err(SisError::PreconditionFailed(_) | SisError::NotNormalizable { .. }) => {
                row.extend((0..COMPARE_FIELDS.len()).map(|_| Cell::Empty));
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    out.write("compare.csv", &csv(&header, rows))?;
    Ok(())
}

/// Value of a named quantity; NaN where it is undefined.
fn quantity(name: &str, p: &ModelParams) -> f64 {
    let r = thresholds(p);
    let s = r.stochastic;
    let levels = deterministic_levels(p);
    let q = || DensityQuery::new(*p).ok();
    let cmp = || q().and_then(|q| q.compare_levels().ok());
    let nan = f64::NAN;
    match name {
        "r0_det" => r.r0_det,
        "r0_stoch" => s.map_or(nan, |s| s.r0_stoch),
        "r0_pers" => s.map_or(nan, |s| s.r0_pers),
        "c0" => s.map_or(nan, |s| s.c0),
        "i_star" => levels.i_star.unwrap_or(nan),
        "prevalence" => levels.prevalence.unwrap_or(nan),
        "tilde_i_star" => tilde_level(p).unwrap_or(nan),
        "i_star_sigma" | "mode" => q().map_or(nan, |q| match q.profile().mode {
            Mode::Interior(x) => x,
            Mode::Boundary => 0.0,
        }),
        "mean" => q().map_or(nan, |q| q.moments().mean),
        "variance" => q().map_or(nan, |q| q.moments().variance),
        "norm_const" => q().map_or(nan, |q| q.normalization()),
        "prevalence_order" => cmp().map_or(nan, |c| c.prevalence_order.sign().into()),
        "tilde_order" => cmp().map_or(nan, |c| c.tilde_order.sign().into()),
        "discrepancy" => q().map_or(nan, |q| if q.profile().discrepancy { 1.0 } else { 0.0 }),
        _ => nan,
    }
}

fn sweep_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let names: Vec<&str> = if ctx.quantities.is_empty() {
        DEFAULT_QUANTITIES.to_vec()
    } else {
        ctx.quantities.iter().map(String::as_str).collect()
    };
    let mut rows = vec![];
    for point in grid(ctx.axes) {
        let cfg = validate(&apply(ctx.raw, ctx.axes, &point)?)?;
        for name in &names {
            rows.push(vec![
                Cell::Num(point[0]),
                point.get(1).map_or(Cell::Empty, |&v| Cell::Num(v)),
                Cell::Text(name.to_string()),
                Cell::Num(quantity(name, &cfg.params)),
            ]);
        }
    }
    out.write("sweep.csv", &csv(&["axis1", "axis2", "quantity", "value"], rows))?;
    Ok(())
}

fn concentration_cmd(ctx: &Context<'_>, out: &mut OutputDir) -> Outcome {
    let p = ctx.config.params;
    let mut rows = vec![];
    for &sigma in &ctx.config.run.sigmas {
        let ps = ModelParams::new(p.beta(), p.gamma(), p.mu(), sigma, p.n_total())?;
        let mass = concentration_mass(&ps, ctx.config.run.epsilon)?;
        rows.push(vec![Cell::Num(sigma), Cell::Num(mass)]);
    }
    out.write("concentration.csv", &csv(&["sigma", "mass"], rows))?;
    Ok(())
}
