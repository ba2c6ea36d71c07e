//! `lfrb`: generate systems, select reduced bases, approximate and compare
//! lead fields, estimate conductivities.

mod commands;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lfrb::parallel::Workers;
use lfrb::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use commands::*;
use run::{load_params, Common, Run};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "lfrb", version, about = "Reduced-basis lead fields for conductivity-parametrized EEG models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// One conductivity point; an alias so clap treats it as a single value.
type Point = Vec<f64>;

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"))).collect()
}

#[derive(Subcommand)]
enum Command {
    /// Generate a parametrized system (mini-head or synthetic).
    Gen {
        /// mini-head | synthetic
        #[arg(long)]
        kind: Option<String>,
        /// Mini-head grid shape, e.g. 16,16,16
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
        /// Shell thicknesses in cells, outermost first
        #[arg(long, value_delimiter = ',')]
        shells: Option<Vec<usize>>,
        #[arg(long)]
        electrodes: Option<usize>,
        #[arg(long)]
        sources: Option<usize>,
        /// Synthetic system size
        #[arg(long)]
        unknowns: Option<usize>,
    },
    /// Greedy support selection over a conductivity grid.
    Select {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        /// One axis per compartment, `lo:hi:count:mode`
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long)]
        eps_abs: Option<f64>,
        #[arg(long)]
        eps_delta: Option<f64>,
        #[arg(long)]
        max_supports: Option<usize>,
        /// corners | center | explicit
        #[arg(long)]
        init: Option<String>,
    },
    /// Online reduced-basis lead fields.
    Approx {
        #[arg(long)]
        basis: Option<std::path::PathBuf>,
        /// Comma-separated conductivities, repeatable
        #[arg(long, value_parser = parse_point)]
        sigma: Vec<Point>,
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// System for exact timing
        #[arg(long)]
        system: Option<std::path::PathBuf>,
    },
    /// Exact lead fields by direct solves.
    Exact {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long, value_parser = parse_point)]
        sigma: Vec<Point>,
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Error bound over a grid, optionally with true errors.
    Errmap {
        #[arg(long)]
        basis: Option<std::path::PathBuf>,
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long)]
        with_exact: bool,
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Synthetic measurements from one source.
    Simulate {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long, value_parser = parse_point)]
        sigma: Option<Point>,
        #[arg(long)]
        source: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        amplitudes: Option<Vec<f64>>,
        #[arg(long)]
        noise_std: Option<f64>,
    },
    /// Conductivity estimation by grid search of dipole-fit residuals.
    Estimate {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long)]
        basis: Option<std::path::PathBuf>,
        #[arg(long)]
        data: Option<std::path::PathBuf>,
        /// exact | approx
        #[arg(long)]
        mode: Option<String>,
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long)]
        normalize: bool,
    },
    /// Reduced basis against polynomial interpolation along one dimension.
    ComparePoly {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
        #[arg(long)]
        log_variant: bool,
    },
    /// Exact versus online timing.
    Bench {
        #[arg(long)]
        system: Option<std::path::PathBuf>,
        #[arg(long)]
        basis: Option<std::path::PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn set_axes(slot: &mut Option<Vec<String>>, axes: Vec<String>) {
    if !axes.is_empty() {
        *slot = Some(axes);
    }
}

/// Defaults, then the config file, then flags; runs `body` and snapshots.
fn with_params<P, F>(name: &'static str, common: &Common, flags: impl FnOnce(&mut P) -> Result<()>, body: F) -> Result<()>
where
    P: DeserializeOwned + Default + Serialize,
    F: FnOnce(&mut P, &mut Run, &Workers, Option<u64>) -> Result<()>,
{
    let (mut params, snap_seed) = load_params::<P>(name, common.config.as_deref())?;
    flags(&mut params)?;
    let seed = common.seed.or(snap_seed);
    let workers = Workers::new(common.jobs)?;
    let mut run = Run::new(name, common, seed.unwrap_or(0))?;
    body(&mut params, &mut run, &workers, seed)?;
    run.finish(&params)
}

fn dispatch(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Gen { kind, shape, shells, electrodes, sources, unknowns } => with_params(
            "gen",
            c,
            |p: &mut GenParams| {
                set(&mut p.kind, kind);
                if let Some(s) = shape {
                    p.layout.shape = <[usize; 3]>::try_from(s)
                        .map_err(|_| Error::config("--shape takes three comma-separated sizes"))?;
                }
                set(&mut p.layout.shells, shells);
                set(&mut p.layout.n_electrodes, electrodes);
                set(&mut p.synthetic.n_electrodes, electrodes);
                set(&mut p.layout.n_sources, sources);
                set(&mut p.synthetic.n_sources, sources);
                set(&mut p.synthetic.n_unknowns, unknowns);
                Ok(())
            },
            |p, run, _, seed| gen(p, run, seed),
        ),
        Command::Select { system, axes, eps_abs, eps_delta, max_supports, init } => with_params(
            "select",
            c,
            |p: &mut SelectParams| {
                set_opt(&mut p.system, system);
                set_axes(&mut p.grid, axes);
                set(&mut p.eps_abs, eps_abs);
                set(&mut p.eps_delta, eps_delta);
                set(&mut p.max_supports, max_supports);
                set(&mut p.init, init);
                Ok(())
            },
            |p, run, w, _| select(p, run, w).map(|_| ()),
        ),
        Command::Approx { basis, sigma, axes, system } => with_params(
            "approx",
            c,
            |p: &mut ApproxParams| {
                set_opt(&mut p.basis, basis);
                if !sigma.is_empty() {
                    p.sigma = sigma;
                }
                set_axes(&mut p.grid, axes);
                set_opt(&mut p.system, system);
                Ok(())
            },
            |p, run, _, _| approx(p, run),
        ),
        Command::Exact { system, sigma, axes } => with_params(
            "exact",
            c,
            |p: &mut ExactParams| {
                set_opt(&mut p.system, system);
                if !sigma.is_empty() {
                    p.sigma = sigma;
                }
                set_axes(&mut p.grid, axes);
                Ok(())
            },
            |p, run, w, _| exact(p, run, w),
        ),
        Command::Errmap { basis, system, with_exact, axes } => with_params(
            "errmap",
            c,
            |p: &mut ErrmapParams| {
                set_opt(&mut p.basis, basis);
                set_opt(&mut p.system, system);
                p.with_exact |= with_exact;
                set_axes(&mut p.grid, axes);
                Ok(())
            },
            |p, run, w, _| errmap(p, run, w),
        ),
        Command::Simulate { system, sigma, source, amplitudes, noise_std } => with_params(
            "simulate",
            c,
            |p: &mut SimulateParams| {
                set_opt(&mut p.system, system);
                set(&mut p.sigma, sigma);
                set(&mut p.source, source);
                set(&mut p.amplitudes, amplitudes);
                set(&mut p.noise_std, noise_std);
                set(&mut p.seed, c.seed);
                Ok(())
            },
            |p, run, _, _| simulate(p, run),
        ),
        Command::Estimate { system, basis, data, mode, axes, normalize } => with_params(
            "estimate",
            c,
            |p: &mut EstimateParams| {
                set_opt(&mut p.system, system);
                set_opt(&mut p.basis, basis);
                set_opt(&mut p.data, data);
                set(&mut p.mode, mode);
                set_axes(&mut p.grid, axes);
                p.normalize |= normalize;
                Ok(())
            },
            |p, run, w, _| estimate(p, run, w),
        ),
        Command::ComparePoly { system, dim, n_values, log_variant } => with_params(
            "compare-poly",
            c,
            |p: &mut ComparePolyParams| {
                set_opt(&mut p.system, system);
                set(&mut p.dim, dim);
                set(&mut p.n_values, n_values);
                p.log_variant |= log_variant;
                Ok(())
            },
            |p, run, w, _| compare_poly(p, run, w),
        ),
        Command::Bench { system, basis, repetitions } => with_params(
            "bench",
            c,
            |p: &mut BenchParams| {
                set_opt(&mut p.system, system);
                set_opt(&mut p.basis, basis);
                set(&mut p.repetitions, repetitions);
                Ok(())
            },
            |p, run, _, _| bench_cmd(p, run),
        ),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical { .. } => EXIT_NUMERICAL,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
