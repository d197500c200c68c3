//! `sis-lab`: command-line front end for the stochastic SIS toolkit.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, validate, RawConfig, AXES};
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "sis-lab", version, about = "Stochastic SIS epidemic model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file, or an inline JSON object.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "sis-lab-out")]
    out: PathBuf,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    paths: Option<usize>,

    #[arg(long, global = true)]
    horizon: Option<f64>,

    #[arg(long, global = true)]
    dt: Option<f64>,

    #[arg(long, global = true)]
    cells: Option<usize>,

    /// Sweep axis `NAME=LO:HI:COUNT[:log]`; at most two.
    #[arg(long, global = true, value_parser = parse_axis)]
    sweep: Vec<Axis>,

    /// Quantity recorded by `sweep`; repeatable.
    #[arg(long, global = true)]
    quantity: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Deterministic and stochastic reproduction numbers.
    Thresholds,
    /// Invariant density on a grid plus its shape profile.
    Density,
    /// Closed-form against quadrature moments.
    Moments,
    /// One sample path.
    Simulate,
    /// Monte Carlo ensemble summary and occupation histogram.
    Ensemble,
    /// Fokker-Planck steady state against the exact bin masses.
    Fpe,
    /// Boundary classification through the scale function.
    Feller,
    /// Prevalence and level orderings; one row per sweep point.
    Compare,
    /// Long-format table of quantities over one or two axes.
    Sweep,
    /// Mass near the deterministic level as the noise shrinks.
    Concentration,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Density => "density",
            Command::Moments => "moments",
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Fpe => "fpe",
            Command::Feller => "feller",
            Command::Compare => "compare",
            Command::Sweep => "sweep",
            Command::Concentration => "concentration",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

fn parse_axis(text: &str) -> Result<Axis, String> {
    let (name, range) = text
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=LO:HI:COUNT[:log], got `{text}`"))?;
    if !AXES.contains(&name) {
        return Err(format!("unknown axis `{name}` (expected one of {})", AXES.join(", ")));
    }
    let parts: Vec<&str> = range.split(':').collect();
    let log = match parts.as_slice() {
        [_, _, _] => false,
        [_, _, _, "log"] => true,
        _ => return Err(format!("expected LO:HI:COUNT[:log], got `{range}`")),
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let (lo, hi) = (num(parts[0])?, num(parts[1])?);
    let count: usize = parts[2].parse().map_err(|e| format!("`{}`: {e}", parts[2]))?;
    if count == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err("sweep needs finite bounds and COUNT >= 1".into());
    }
    if log && !(lo > 0.0 && hi > 0.0) {
        return Err("log sweep needs positive bounds".into());
    }
    let values = (0..count)
        .map(|k| {
            let t = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect();
    Ok(Axis {
        name: name.to_string(),
        values,
    })
}

fn usage(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut raw = match &cli.config {
        Some(source) => match load_config(source) {
            Ok(raw) => raw,
            Err(e) => return usage(e),
        },
        None => RawConfig::default(),
    };
    raw.seed = cli.seed.or(raw.seed);
    raw.paths = cli.paths.or(raw.paths);
    raw.horizon = cli.horizon.or(raw.horizon);
    raw.dt = cli.dt.or(raw.dt);
    raw.n_cells = cli.cells.or(raw.n_cells);

    let sweeps = matches!(cli.command, Command::Compare | Command::Sweep);
    if !cli.sweep.is_empty() && !sweeps {
        return usage("--sweep applies only to compare and sweep");
    }
    if cli.command == Command::Sweep && cli.sweep.is_empty() {
        return usage("sweep needs at least one --sweep axis");
    }
    if cli.sweep.len() > 2 {
        return usage("at most two --sweep axes");
    }
    if cli.sweep.len() == 2 && cli.sweep[0].name == cli.sweep[1].name {
        return usage(format!("duplicate sweep axis `{}`", cli.sweep[0].name));
    }
    for q in &cli.quantity {
        if !commands::QUANTITIES.contains(&q.as_str()) {
            return usage(format!(
                "unknown quantity `{q}` (expected one of {})",
                commands::QUANTITIES.join(", ")
            ));
        }
    }
    let threads = match std::env::var("SIS_LAB_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return usage(format!("SIS_LAB_THREADS must be a positive integer, got `{v}`")),
        },
        Err(_) => None,
    };

    // Without sweeps the config must validate on its own; with sweeps each
    // point is validated after the axes are applied.
    let config = if sweeps && !cli.sweep.is_empty() {
        match commands::check_sweep(&raw, &cli.sweep) {
            Ok(c) => c,
            Err(e) => return usage(e),
        }
    } else {
        match validate(&raw) {
            Ok(c) => c,
            Err(e) => return usage(e),
        }
    };

    let mut out = match OutputDir::open(&cli.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", cli.out.display());
            return ExitCode::from(1);
        }
    };
    let ctx = commands::Context {
        raw: &raw,
        config: &config,
        axes: &cli.sweep,
        quantities: &cli.quantity,
        threads,
    };
    let echo = serde_json::to_value(&raw).expect("config serializes");
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let result = commands::execute(cli.command, &ctx, &mut out).and_then(|()| {
        out.finish(command, echo, config.run.seed)
            .map_err(|e| commands::Failure::Io(e.to_string()))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.rollback();
            eprintln!("error: {} failed: {e}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
