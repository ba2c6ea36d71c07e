//! Subcommand implementations. Each takes its merged parameters and a [`Run`].

use std::path::{Path, PathBuf};

use lfrb::basis::{
    error_sweep, exact_sweep, greedy_select, load_basis, save_basis, sweep_csv, GreedyConfig,
    InitialSupports, StopRule, SupportBasis,
};
use lfrb::bench::{bench, median, time_per_point};
use lfrb::estimation::{error_map, estimate_conductivity, LeadfieldSource};
use lfrb::generators::{build_mini_head, build_synthetic, simulate_measurement, MiniHeadSpec, SynthSpec};
use lfrb::grid::{ConductivityGrid, GridAxis};
use lfrb::io::{self, load_system, read_matrix, save_system, write_matrix};
use lfrb::model::ConductivityPoint;
use lfrb::numerics::forward::{constant_from, exact_forward};
use lfrb::parallel::Workers;
use lfrb::poly::{compare_methods, comparison_csv, CompareConfig};
use lfrb::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::run::Run;

type Matrix = lfrb::faer::Mat<f64>;

fn axes_from(strings: &[String]) -> Result<Vec<GridAxis>> {
    strings.iter().map(|s| s.parse()).collect()
}

fn axis_strings(axes: &[GridAxis]) -> Vec<String> {
    axes.iter().map(ToString::to_string).collect()
}

fn points(values: &[Vec<f64>]) -> Result<Vec<ConductivityPoint>> {
    values.iter().map(|v| ConductivityPoint::new(v.clone())).collect()
}

/// Grid from explicit axes, falling back to the system's declared domain.
fn resolve_grid(explicit: &Option<Vec<String>>, system_dir: Option<&Path>) -> Result<ConductivityGrid> {
    if let Some(axes) = explicit {
        return ConductivityGrid::new(axes_from(axes)?);
    }
    let dir = system_dir.ok_or_else(|| Error::config("a grid is required (no system domain to fall back on)"))?;
    let manifest: io::SystemManifest = io::read_toml(&dir.join(io::SYSTEM_MANIFEST))?;
    if manifest.domain.is_empty() {
        return Err(Error::config("the system declares no domain; pass a grid"));
    }
    ConductivityGrid::new(manifest.domain_axes()?)
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(format!("missing required parameter '{name}'")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    pub shape: [usize; 3],
    pub shells: Vec<usize>,
    pub n_electrodes: usize,
    pub n_sources: usize,
    pub spacing: f64,
    pub domain: Vec<String>,
    pub deflate: bool,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            shape: [16, 16, 16],
            shells: vec![2, 2],
            n_electrodes: 32,
            n_sources: 128,
            spacing: 0.01,
            domain: axis_strings(&lfrb::generators::default_domain()),
            deflate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    /// `mini-head` or `synthetic`
    pub kind: String,
    /// Nested-box layout, used unless an explicit `mini_head` table is given.
    pub layout: LayoutParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mini_head: Option<MiniHeadSpec>,
    pub synthetic: SynthSpec,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            kind: "mini-head".into(),
            layout: LayoutParams::default(),
            mini_head: None,
            synthetic: SynthSpec::default(),
        }
    }
}

pub fn gen(p: &mut GenParams, run: &mut Run, seed: Option<u64>) -> Result<()> {
    let out = run.out.clone();
    match p.kind.as_str() {
        "mini-head" => {
            let spec = match &p.mini_head {
                Some(s) => s.clone(),
                None => {
                    let l = &p.layout;
                    let mut s = MiniHeadSpec::nested(
                        l.shape,
                        &l.shells,
                        l.n_electrodes,
                        l.n_sources,
                        l.spacing,
                        axes_from(&l.domain)?,
                    )?;
                    s.deflate = l.deflate;
                    s
                }
            };
            let head = run.phase("build", || build_mini_head(&spec))?;
            run.timing_value("n_unknowns", json!(head.system.n_unknowns()));
            let files = run.phase("write", || save_system(&out, "mini-head", &head.system, &head.domain))?;
            run.artifacts(&files);
        }
        "synthetic" => {
            if let Some(s) = seed {
                p.synthetic.seed = s;
            }
            let spec = p.synthetic.clone();
            let sys = run.phase("build", || build_synthetic(&spec))?;
            let files = run.phase("write", || save_system(&out, "synthetic", &sys, &spec.domain))?;
            run.artifacts(&files);
        }
        other => return Err(Error::config(format!("kind: unknown system kind '{other}'"))),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectParams {
    pub system: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    /// `corners`, `center` or `explicit`
    pub init: String,
    pub init_points: Vec<Vec<f64>>,
    pub eps_abs: f64,
    pub eps_delta: f64,
    pub max_supports: usize,
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams {
            system: None,
            grid: None,
            init: "corners".into(),
            init_points: Vec::new(),
            eps_abs: 1e-6,
            eps_delta: 0.0,
            max_supports: 30,
        }
    }
}

pub fn select(p: &SelectParams, run: &mut Run, workers: &Workers) -> Result<SupportBasis> {
    let dir = required(&p.system, "system")?;
    let (sys, _) = run.phase("load", || load_system(dir))?;
    let grid = resolve_grid(&p.grid, Some(dir))?;
    let initial = match p.init.as_str() {
        "corners" => InitialSupports::Corners,
        "center" => InitialSupports::Center,
        "explicit" => InitialSupports::Explicit(p.init_points.clone()),
        other => return Err(Error::config(format!("init: unknown initialization '{other}'"))),
    };
    let cfg = GreedyConfig {
        initial,
        stop: StopRule {
            eps_abs: Some(p.eps_abs),
            eps_delta: (p.eps_delta > 0.0).then_some(p.eps_delta),
            max_supports: p.max_supports.min(grid.len()),
        },
    };
    let basis = run.phase("greedy", || greedy_select(&sys, &grid, &cfg, workers))?;
    let out = run.out.clone();
    let files = run.phase("write", || save_basis(&out, &basis))?;
    run.artifacts(&files);
    let last = basis.provenance.trace.last().expect("trace is never empty");
    run.write_json(
        "select.json",
        &json!({
            "n_supports": basis.len(),
            "final_max_rel_upper_bound": last.max_bound,
            "stop_reason": basis.provenance.stop_reason,
            "grid_id": basis.provenance.grid_id,
            "trace_length": basis.provenance.trace.len(),
        }),
    )?;
    Ok(basis)
}

/// Points from an explicit list, else from a grid (explicit or the basis domain).
fn query_points(sigma: &[Vec<f64>], grid: &Option<Vec<String>>, system: Option<&Path>) -> Result<Vec<ConductivityPoint>> {
    if !sigma.is_empty() {
        return points(sigma);
    }
    Ok(resolve_grid(grid, system)?.samples().to_vec())
}

fn sigma_columns(dims: usize) -> String {
    (0..dims).map(|d| format!("sigma_{d},")).collect()
}

fn sigma_cells(s: &ConductivityPoint) -> String {
    s.values().iter().map(|v| format!("{v:e},")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxParams {
    pub basis: Option<PathBuf>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    /// System directory; enables exact timing for the speedup ratio.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<PathBuf>,
    pub exact_points: usize,
    pub repetitions: usize,
    pub write_leadfields: bool,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            basis: None,
            sigma: Vec::new(),
            grid: None,
            system: None,
            exact_points: 3,
            repetitions: 5,
            write_leadfields: true,
        }
    }
}

pub fn approx(p: &ApproxParams, run: &mut Run) -> Result<()> {
    let bdir = required(&p.basis, "basis")?;
    let basis = run.phase("load", || load_basis(bdir))?;
    let pts = if p.sigma.is_empty() && p.grid.is_none() {
        let axes: Vec<String> = basis.provenance.grid_id.split(" x ").map(str::to_string).collect();
        ConductivityGrid::new(axes_from(&axes)?)?.samples().to_vec()
    } else {
        query_points(&p.sigma, &p.grid, None)?
    };
    let results = run.phase("approximate", || pts.iter().map(|s| basis.approximate(s)).collect::<Result<Vec<_>>>())?;
    let mut csv = format!("index,{}rel_upper_bound,out_of_domain,regularized,leadfield\n", sigma_columns(basis.bounds.len()));
    let mut warnings = 0;
    for (k, (s, a)) in pts.iter().zip(&results).enumerate() {
        let name = format!("approx_{k:04}.lfrb");
        if p.write_leadfields {
            let path = run.path(&name);
            write_matrix(&path, &a.leadfield)?;
            run.artifact(&path);
        }
        if a.out_of_domain {
            warnings += 1;
            eprintln!("warning: sigma {:?} lies outside the basis domain", s.values());
        }
        csv.push_str(&format!(
            "{k},{}{:e},{},{},{}\n",
            sigma_cells(s),
            a.alpha.relative_upper_bound,
            a.out_of_domain,
            a.alpha.regularized,
            if p.write_leadfields { name.as_str() } else { "" }
        ));
    }
    run.write_text("approx.csv", &csv)?;
    run.write_json(
        "approx.json",
        &json!({ "n_points": pts.len(), "n_supports": basis.len(), "out_of_domain": warnings }),
    )?;

    let reps = p.repetitions.max(5);
    let online = time_per_point(&pts, reps, |s| basis.approximate(s).map(|_| ()))?;
    let online_median = median(&online);
    run.timing_value("online_seconds_per_sigma", json!(online_median));
    run.timing_value("online_repetitions", json!(online));
    if let Some(sdir) = &p.system {
        let (sys, _) = load_system(sdir)?;
        let k = p.exact_points.clamp(1, pts.len());
        let exact = time_per_point(&pts[..k], reps, |s| exact_forward(&sys, s).map(|_| ()))?;
        let exact_median = median(&exact);
        run.timing_value("exact_seconds_per_sigma", json!(exact_median));
        run.timing_value("exact_repetitions", json!(exact));
        run.timing_value("speedup", json!(exact_median / online_median));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactParams {
    pub system: Option<PathBuf>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    pub write_leadfields: bool,
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams { system: None, sigma: Vec::new(), grid: None, write_leadfields: true }
    }
}

pub fn exact(p: &ExactParams, run: &mut Run, workers: &Workers) -> Result<()> {
    let dir = required(&p.system, "system")?;
    let (sys, _) = run.phase("load", || load_system(dir))?;
    let pts = query_points(&p.sigma, &p.grid, Some(dir))?;
    let fwd = run.phase("solve", || {
        workers.map(&pts, |_, s| exact_forward(&sys, s)).into_iter().collect::<Result<Vec<_>>>()
    })?;
    let mut csv = format!("index,{}leadfield_norm,bound_constant,residual,leadfield\n", sigma_columns(sys.n_compartments()));
    for (k, (s, f)) in pts.iter().zip(&fwd).enumerate() {
        let name = format!("exact_{k:04}.lfrb");
        if p.write_leadfields {
            let path = run.path(&name);
            write_matrix(&path, &f.leadfield)?;
            run.artifact(&path);
        }
        csv.push_str(&format!(
            "{k},{}{:e},{:e},{:e},{}\n",
            sigma_cells(s),
            f.leadfield.norm_l2(),
            constant_from(f, s)?,
            f.residual,
            if p.write_leadfields { name.as_str() } else { "" }
        ));
    }
    run.write_text("exact.csv", &csv)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrmapParams {
    pub basis: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<PathBuf>,
    pub with_exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
}

pub fn errmap(p: &ErrmapParams, run: &mut Run, workers: &Workers) -> Result<()> {
    let bdir = required(&p.basis, "basis")?;
    let basis = run.phase("load", || load_basis(bdir))?;
    let grid = match &p.grid {
        Some(g) => ConductivityGrid::new(axes_from(g)?)?,
        None => {
            let axes: Vec<String> = basis.provenance.grid_id.split(" x ").map(str::to_string).collect();
            ConductivityGrid::new(axes_from(&axes)?)?
        }
    };
    let exact = if p.with_exact {
        let sdir = required(&p.system, "system")?;
        let (sys, _) = load_system(sdir)?;
        Some(run.phase("exact", || Ok(exact_sweep(&sys, &grid, workers)))?)
    } else {
        None
    };
    let rows = run.phase("sweep", || error_sweep(&basis, &grid, exact.as_deref(), workers))?;
    run.write_text("errmap.csv", &sweep_csv(&rows))?;
    let fold_max = |f: &dyn Fn(&lfrb::basis::SweepRow) -> Option<f64>| {
        rows.iter().filter_map(f).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    };
    let invalid = exact.as_ref().map_or(0, |e| e.iter().filter(|r| r.is_err()).count());
    run.write_json(
        "errmap.json",
        &json!({
            "n_supports": basis.len(),
            "grid_id": grid.id(),
            "max_rel_upper_bound": fold_max(&|r| Some(r.rel_upper_bound)),
            "max_upper_bound": fold_max(&|r| Some(r.upper_bound)),
            "max_true_rel_error": fold_max(&|r| r.true_rel_error),
            "max_bound_violation": fold_max(&|r| Some(r.true_rel_error? - r.bound_constant? * r.upper_bound)),
            "max_bound_constant": fold_max(&|r| r.bound_constant),
            "invalid_samples": invalid,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub system: Option<PathBuf>,
    pub sigma: Vec<f64>,
    pub source: usize,
    /// One amplitude per time sample.
    pub amplitudes: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams { system: None, sigma: Vec::new(), source: 0, amplitudes: vec![1.0], noise_std: 0.0, seed: 0 }
    }
}

pub fn simulate(p: &SimulateParams, run: &mut Run) -> Result<()> {
    let dir = required(&p.system, "system")?;
    let (sys, manifest) = run.phase("load", || load_system(dir))?;
    let sigma = if p.sigma.is_empty() {
        ConductivityGrid::new(manifest.domain_axes()?)?.domain_center()
    } else {
        ConductivityPoint::new(p.sigma.clone())?
    };
    let y = run.phase("simulate", || simulate_measurement(&sys, &sigma, p.source, &p.amplitudes, p.noise_std, p.seed))?;
    let path = run.path("data.lfrb");
    write_matrix(&path, &y)?;
    run.artifact(&path);
    run.write_json(
        "simulate.json",
        &json!({
            "sigma": sigma.values(),
            "source": p.source,
            "amplitudes": p.amplitudes,
            "noise_std": p.noise_std,
            "seed": p.seed,
            "data": "data.lfrb",
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<PathBuf>,
    pub data: Option<PathBuf>,
    /// `exact` or `approx`
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<String>>,
    pub normalize: bool,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams { system: None, basis: None, data: None, mode: "exact".into(), grid: None, normalize: false }
    }
}

pub fn estimate(p: &EstimateParams, run: &mut Run, workers: &Workers) -> Result<()> {
    let data = read_matrix(required(&p.data, "data")?)?;
    let (map, grid_id) = match p.mode.as_str() {
        "exact" => {
            let dir = required(&p.system, "system")?;
            let (sys, _) = run.phase("load", || load_system(dir))?;
            check_electrodes(&data, sys.n_electrodes())?;
            let grid = resolve_grid(&p.grid, Some(dir))?;
            (run.phase("map", || Ok(error_map(&grid, &data, LeadfieldSource::Exact(&sys), workers)))?, grid.id())
        }
        "approx" => {
            let bdir = required(&p.basis, "basis")?;
            let basis = run.phase("load", || load_basis(bdir))?;
            check_electrodes(&data, basis.n_electrodes())?;
            let grid = match &p.grid {
                Some(g) => ConductivityGrid::new(axes_from(g)?)?,
                None => {
                    let axes: Vec<String> = basis.provenance.grid_id.split(" x ").map(str::to_string).collect();
                    ConductivityGrid::new(axes_from(&axes)?)?
                }
            };
            (run.phase("map", || Ok(error_map(&grid, &data, LeadfieldSource::Approx(&basis), workers)))?, grid.id())
        }
        other => return Err(Error::config(format!("mode: unknown mode '{other}'"))),
    };
    let map = if p.normalize { map.normalized()? } else { map };
    let est = estimate_conductivity(&map)?;
    run.write_text("map.csv", &map.to_csv())?;
    let invalid = map.samples.iter().filter(|s| s.value.is_none()).count();
    run.write_json(
        "estimate.json",
        &json!({
            "mode": p.mode,
            "grid_id": grid_id,
            "argmin_index": est.index,
            "argmin_sigma": est.sigma,
            "min_value": est.value,
            "flat": est.flat,
            "spread": est.spread,
            "normalization": est.normalization,
            "profile": est.profile,
            "invalid_samples": invalid,
        }),
    )
}

fn check_electrodes(data: &Matrix, n_e: usize) -> Result<()> {
    if data.nrows() != n_e || data.ncols() == 0 {
        return Err(Error::config(format!(
            "data is {}x{}, expected {n_e} x T topographies",
            data.nrows(),
            data.ncols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparePolyParams {
    pub system: Option<PathBuf>,
    /// Values of the fixed dimensions; defaults to the domain center.
    pub base: Vec<f64>,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub n_values: Vec<usize>,
    pub eval_count: usize,
    pub rb_grid_count: usize,
    pub log_variant: bool,
}

impl Default for ComparePolyParams {
    fn default() -> Self {
        let c = CompareConfig::default();
        ComparePolyParams {
            system: None,
            base: Vec::new(),
            dim: c.dim,
            lo: c.lo,
            hi: c.hi,
            n_values: c.n_values,
            eval_count: c.eval_count,
            rb_grid_count: c.rb_grid_count,
            log_variant: c.log_variant,
        }
    }
}

pub fn compare_poly(p: &ComparePolyParams, run: &mut Run, workers: &Workers) -> Result<()> {
    let dir = required(&p.system, "system")?;
    let (sys, manifest) = run.phase("load", || load_system(dir))?;
    let base = if p.base.is_empty() {
        ConductivityGrid::new(manifest.domain_axes()?)?.domain_center()
    } else {
        ConductivityPoint::new(p.base.clone())?
    };
    let cfg = CompareConfig {
        dim: p.dim,
        lo: p.lo,
        hi: p.hi,
        n_values: p.n_values.clone(),
        eval_count: p.eval_count,
        rb_grid_count: p.rb_grid_count,
        log_variant: p.log_variant,
    };
    let cmp = run.phase("compare", || compare_methods(&sys, &base, &cfg, workers))?;
    run.write_text("comparison.csv", &comparison_csv(&cmp.rows))?;
    if p.log_variant {
        run.write_text("sensitivity.csv", &comparison_csv(&cmp.sensitivity))?;
    }
    run.write_json(
        "comparison.json",
        &json!({ "base": base.values(), "rb_supports": cmp.rb_supports, "rows": cmp.rows, "sensitivity": cmp.sensitivity }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchParams {
    pub system: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    /// Query points for online timing, spread over the basis grid.
    pub points: usize,
    pub exact_points: usize,
    pub repetitions: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams { system: None, basis: None, points: 25, exact_points: 3, repetitions: 5 }
    }
}

pub fn bench_cmd(p: &BenchParams, run: &mut Run) -> Result<()> {
    let (sys, _) = load_system(required(&p.system, "system")?)?;
    let basis = load_basis(required(&p.basis, "basis")?)?;
    let axes: Vec<String> = basis.provenance.grid_id.split(" x ").map(str::to_string).collect();
    let grid = ConductivityGrid::new(axes_from(&axes)?)?;
    let k = p.points.clamp(1, grid.len());
    let pts: Vec<ConductivityPoint> = (0..k).map(|i| grid.samples()[i * grid.len() / k].clone()).collect();
    let report = run.phase("bench", || bench(&sys, &basis, &pts, p.exact_points, p.repetitions))?;
    let mut csv = format!("index,{}\n", sigma_columns(grid.dims()).trim_end_matches(','));
    for (i, s) in pts.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", sigma_cells(s).trim_end_matches(',')));
    }
    run.write_text("bench_points.csv", &csv)?;
    run.timing_value("bench", serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}
