//! Greedy support selection (offline) and lead-field approximation (online).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ConductivityGrid;
use crate::io::{self, read_matrix, read_toml, write_matrix, write_toml};
use crate::model::{ConductivityPoint, Multipliers, ParametrizedSystem};
use crate::numerics::alpha::{normal_system, solve_alpha_prefix, AlphaSolution};
use crate::numerics::dd::Dd;
use crate::numerics::dense;
use crate::numerics::forward::{constant_from, reduced_rows, ExactForward, ReducedRows};
use crate::numerics::gram::{extend_gram, GramData};
use crate::parallel::Workers;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSupports {
    /// All domain corners.
    Corners,
    /// The middle grid sample.
    Center,
    /// Explicit conductivity points inside the grid bounds.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    /// Stop once the largest normalized bound drops below this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_abs: Option<f64>,
    /// Stop once successive maxima differ by less than this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_delta: Option<f64>,
    pub max_supports: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { eps_abs: Some(1e-6), eps_delta: None, max_supports: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub initial: InitialSupports,
    pub stop: StopRule,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { initial: InitialSupports::Corners, stop: StopRule::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EpsAbs,
    EpsDelta,
    MaxSupports,
    /// The largest bound over the grid is exactly zero.
    Exact,
    /// The worst sample is already a support: every other sample is
    /// represented to within rounding.
    ArgmaxIsSupport,
}

/// One greedy iteration: the basis had `n` supports and the largest
/// normalized bound over the grid was `max_bound`, attained at `argmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub n: usize,
    pub max_bound: f64,
    pub argmax: usize,
    pub argmax_sigma: Vec<f64>,
    /// Grid samples whose α solve dropped a numerically dependent support.
    pub regularized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid_id: String,
    pub stop: StopRule,
    pub stop_reason: Option<StopReason>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct SupportBasis {
    pub supports: Vec<ConductivityPoint>,
    /// Grid index of each support when it came from the selection grid.
    pub support_indices: Vec<Option<usize>>,
    pub reduced: Vec<ReducedRows>,
    pub gram: GramData,
    /// `lbar[i][j] = R_i D̄_j`
    pub lbar: Vec<Vec<Mat<f64>>>,
    pub multipliers: Multipliers,
    /// Domain bounds; queries outside are flagged.
    pub bounds: Vec<[f64; 2]>,
    pub provenance: Provenance,
    pub n_unknowns: usize,
}

#[derive(Debug, Clone)]
pub struct Approximation {
    pub leadfield: Mat<f64>,
    pub alpha: AlphaSolution,
    pub out_of_domain: bool,
}

impl SupportBasis {
    pub fn empty(sys: &ParametrizedSystem, grid: &ConductivityGrid, stop: StopRule) -> Self {
        SupportBasis {
            supports: Vec::new(),
            support_indices: Vec::new(),
            reduced: Vec::new(),
            gram: GramData::empty(sys),
            lbar: Vec::new(),
            multipliers: sys.multipliers().clone(),
            bounds: grid.bounds(),
            provenance: Provenance {
                grid_id: grid.id(),
                stop,
                stop_reason: None,
                trace: Vec::new(),
            },
            n_unknowns: sys.n_unknowns(),
        }
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn n_electrodes(&self) -> usize {
        self.lbar.first().map_or(0, |l| l[0].nrows())
    }

    pub fn n_sources(&self) -> usize {
        self.lbar.first().map_or(0, |l| l[0].ncols())
    }

    /// Exact solve at `sigma`, then extend the Gram data and `L̄`.
    pub fn add_support(
        &mut self,
        sys: &ParametrizedSystem,
        sigma: &ConductivityPoint,
        grid_index: Option<usize>,
    ) -> Result<()> {
        if self.supports.contains(sigma) {
            return Err(Error::config(format!("{:?} is already a support", sigma.values())));
        }
        if !self.gram.has_columns() {
            self.gram.restore_columns(sys, &self.reduced);
        }
        let rows = reduced_rows(sys, sigma)?;
        extend_gram(&mut self.gram, sys, &rows);
        let lbar = sys
            .d_components()
            .iter()
            .map(|c| dense::product(rows.matrix.as_ref(), c.matrix.as_ref()))
            .collect();
        self.lbar.push(lbar);
        self.reduced.push(rows);
        self.supports.push(sigma.clone());
        self.support_indices.push(grid_index);
        Ok(())
    }

    pub fn in_domain(&self, sigma: &ConductivityPoint) -> bool {
        sigma.len() == self.bounds.len()
            && self.bounds.iter().zip(sigma.values()).all(|(b, &v)| {
                let slack = 1e-12 * b[1].abs();
                v >= b[0] - slack && v <= b[1] + slack
            })
    }

    /// α and the bound using only the first `n` supports.
    pub fn solve_prefix(&self, sigma: &ConductivityPoint, n: usize) -> Result<AlphaSolution> {
        let gamma = self.multipliers.gamma_at(sigma)?;
        Ok(solve_alpha_prefix(&self.gram, &gamma, n))
    }

    pub fn solve(&self, sigma: &ConductivityPoint) -> Result<AlphaSolution> {
        self.solve_prefix(sigma, self.len())
    }

    /// `L_n(σ) = Σ_i Σ_j α_i λ_j(σ) L̄_ij` using the first `n` supports.
    pub fn approximate_prefix(&self, sigma: &ConductivityPoint, n: usize) -> Result<Approximation> {
        if n == 0 || n > self.len() {
            return Err(Error::config(format!("basis has {} supports, asked for {n}", self.len())));
        }
        let alpha = self.solve_prefix(sigma, n)?;
        let lambda = self.multipliers.lambda_at(sigma)?;
        let mut l = Mat::<f64>::zeros(self.n_electrodes(), self.n_sources());
        for (i, &a) in alpha.alpha.iter().enumerate() {
            for (j, &lam) in lambda.iter().enumerate() {
                dense::axpy(&mut l, a * lam, &self.lbar[i][j]);
            }
        }
        Ok(Approximation { leadfield: l, alpha, out_of_domain: !self.in_domain(sigma) })
    }

    pub fn approximate(&self, sigma: &ConductivityPoint) -> Result<Approximation> {
        self.approximate_prefix(sigma, self.len())
    }

    /// `min_σ λ_min(G_σ) / trace(G_σ)` over the given points for the first `n` supports.
    pub fn conditioning(&self, points: &[ConductivityPoint], n: usize) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for p in points {
            let gamma = self.multipliers.gamma_at(p)?;
            let (g, _) = normal_system(&self.gram, &gamma, n);
            let m = Mat::<f64>::from_fn(n, n, |a, b| g[a][b].to_f64());
            let trace: f64 = (0..n).map(|k| m[(k, k)]).sum();
            let eig = m
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|_| Error::numerical(Some(p.values()), "eigenvalue solver failed"))?;
            worst = worst.min(eig[0] / trace);
        }
        Ok(worst)
    }
}

fn initial_points(grid: &ConductivityGrid, init: &InitialSupports) -> Result<Vec<(ConductivityPoint, Option<usize>)>> {
    let from_idx = |i: usize| (grid.samples()[i].clone(), Some(i));
    match init {
        InitialSupports::Corners => Ok(grid.corner_indices().into_iter().map(from_idx).collect()),
        InitialSupports::Center => Ok(vec![from_idx(grid.center_index())]),
        InitialSupports::Explicit(points) => {
            let mut out: Vec<(ConductivityPoint, Option<usize>)> = Vec::new();
            for p in points {
                let p = ConductivityPoint::new(p.clone())?;
                if !grid.contains(&p) {
                    return Err(Error::config(format!(
                        "initial support {:?} lies outside the grid bounds",
                        p.values()
                    )));
                }
                if out.iter().all(|(q, _)| *q != p) {
                    let idx = grid.position(&p);
                    out.push((p, idx));
                }
            }
            if out.is_empty() {
                return Err(Error::config("explicit initial support list is empty"));
            }
            Ok(out)
        }
    }
}

/// The greedy support selection loop.
pub fn greedy_select(
    sys: &ParametrizedSystem,
    grid: &ConductivityGrid,
    cfg: &GreedyConfig,
    workers: &Workers,
) -> Result<SupportBasis> {
    if grid.is_empty() {
        return Err(Error::config("grid is empty"));
    }
    let stop = cfg.stop;
    if stop.max_supports == 0 {
        return Err(Error::config("max_supports must be at least 1"));
    }
    if stop.max_supports > grid.len() {
        return Err(Error::config(format!(
            "max_supports = {} exceeds the grid size {}",
            stop.max_supports,
            grid.len()
        )));
    }
    if stop.eps_abs.is_some_and(|e| !(e >= 0.0)) || stop.eps_delta.is_some_and(|e| !(e >= 0.0)) {
        return Err(Error::config("stop tolerances must be nonnegative"));
    }
    let init = initial_points(grid, &cfg.initial)?;
    if init.len() > stop.max_supports {
        return Err(Error::config(format!(
            "{} initial supports exceed max_supports = {}",
            init.len(),
            stop.max_supports
        )));
    }
    let gammas: Vec<Vec<f64>> = grid
        .samples()
        .iter()
        .map(|s| sys.multipliers().gamma_at(s))
        .collect::<Result<_>>()?;

    let mut basis = SupportBasis::empty(sys, grid, stop);
    for (p, idx) in init {
        basis.add_support(sys, &p, idx)?;
    }
    loop {
        let n = basis.len();
        let bounds: Vec<(f64, bool)> = workers.map(&gammas, |_, g| {
            let s = solve_alpha_prefix(&basis.gram, g, n);
            (s.relative_upper_bound, s.regularized)
        });
        let (argmax, max_bound) = argmax_lowest(bounds.iter().map(|b| b.0));
        let regularized = bounds.iter().filter(|b| b.1).count();
        let prev = basis.provenance.trace.last().map(|t| t.max_bound);
        basis.provenance.trace.push(TraceEntry {
            n,
            max_bound,
            argmax,
            argmax_sigma: grid.samples()[argmax].values().to_vec(),
            regularized,
        });
        let reason = if max_bound <= 0.0 {
            Some(StopReason::Exact)
        } else if stop.eps_abs.is_some_and(|e| max_bound < e) {
            Some(StopReason::EpsAbs)
        } else if stop
            .eps_delta
            .zip(prev)
            .is_some_and(|(e, p)| (max_bound - p).abs() < e)
        {
            Some(StopReason::EpsDelta)
        } else if n >= stop.max_supports {
            Some(StopReason::MaxSupports)
        } else if basis.support_indices.contains(&Some(argmax)) {
            Some(StopReason::ArgmaxIsSupport)
        } else {
            None
        };
        if let Some(r) = reason {
            basis.provenance.stop_reason = Some(r);
            return Ok(basis);
        }
        let sigma = grid.samples()[argmax].clone();
        basis.add_support(sys, &sigma, Some(argmax))?;
    }
}

/// Largest value and its first index.
pub fn argmax_lowest(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// One grid sample of an approximation sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sigma: Vec<f64>,
    pub upper_bound: f64,
    pub rel_upper_bound: f64,
    pub regularized: bool,
    /// Relative Frobenius error against the exact lead field, when requested.
    pub true_rel_error: Option<f64>,
    pub bound_constant: Option<f64>,
}

/// Exact forward solves over a grid; failures are kept per sample.
pub fn exact_sweep(sys: &ParametrizedSystem, grid: &ConductivityGrid, workers: &Workers) -> Vec<Result<ExactForward>> {
    workers.map(grid.samples(), |_, s| crate::numerics::forward::exact_forward(sys, s))
}

pub fn relative_error(approx: &Mat<f64>, exact: &Mat<f64>) -> f64 {
    dense::relative_distance(approx, exact)
}

/// Bound (and optionally true error) of the first `n` supports over a grid.
pub fn error_sweep_prefix(
    basis: &SupportBasis,
    grid: &ConductivityGrid,
    exact: Option<&[Result<ExactForward>]>,
    n: usize,
    workers: &Workers,
) -> Result<Vec<SweepRow>> {
    if let Some(e) = exact {
        assert_eq!(e.len(), grid.len());
    }
    workers
        .map(grid.samples(), |k, s| {
            let approx = basis.approximate_prefix(s, n)?;
            let (true_rel_error, bound_constant) = match exact.map(|e| &e[k]) {
                Some(Ok(fwd)) => (
                    Some(relative_error(&approx.leadfield, &fwd.leadfield)),
                    Some(constant_from(fwd, s)?),
                ),
                _ => (None, None),
            };
            Ok(SweepRow {
                sigma: s.values().to_vec(),
                upper_bound: approx.alpha.upper_bound,
                rel_upper_bound: approx.alpha.relative_upper_bound,
                regularized: approx.alpha.regularized,
                true_rel_error,
                bound_constant,
            })
        })
        .into_iter()
        .collect()
}

pub fn error_sweep(
    basis: &SupportBasis,
    grid: &ConductivityGrid,
    exact: Option<&[Result<ExactForward>]>,
    workers: &Workers,
) -> Result<Vec<SweepRow>> {
    error_sweep_prefix(basis, grid, exact, basis.len(), workers)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let dims = rows.first().map_or(0, |r| r.sigma.len());
    let mut out = String::new();
    for d in 0..dims {
        let _ = write!(out, "sigma_{d},");
    }
    out.push_str("upper_bound,rel_upper_bound,true_rel_error,bound_constant,regularized\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        for v in &r.sigma {
            let _ = write!(out, "{v:e},");
        }
        let _ = writeln!(
            out,
            "{:e},{:e},{},{},{}",
            r.upper_bound,
            r.rel_upper_bound,
            opt(r.true_rel_error),
            opt(r.bound_constant),
            r.regularized
        );
    }
    out
}

pub fn trace_csv(basis: &SupportBasis) -> String {
    let dims = basis.bounds.len();
    let mut out = String::from("iteration,n_supports,max_rel_upper_bound,argmax_index");
    for d in 0..dims {
        let _ = write!(out, ",argmax_sigma_{d}");
    }
    out.push_str(",regularized\n");
    for (it, t) in basis.provenance.trace.iter().enumerate() {
        let _ = write!(out, "{it},{},{:e},{}", t.n, t.max_bound, t.argmax);
        for v in &t.argmax_sigma {
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(out, ",{}", t.regularized);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SupportEntry {
    sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_index: Option<usize>,
    reduced: String,
    lbar: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasisManifest {
    n_unknowns: usize,
    n_electrodes: usize,
    n_sources: usize,
    n_h: usize,
    /// Gram column `(i, j)` sits at `i * n_h + j`.
    column_order: String,
    s_norm_sq: [f64; 2],
    gram: [String; 2],
    rhs: [String; 2],
    trace_csv: String,
    bounds: Vec<[f64; 2]>,
    multipliers: Multipliers,
    provenance: Provenance,
    supports: Vec<SupportEntry>,
}

pub const BASIS_MANIFEST: &str = "basis.toml";
const COLUMN_ORDER: &str = "support-major";

/// Writes the manifest, per-support reduced rows and `L̄`, Gram hi/lo parts and the trace.
pub fn save_basis(dir: &Path, basis: &SupportBasis) -> Result<Vec<PathBuf>> {
    io::create_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, m: &Mat<f64>| -> Result<String> {
        let p = dir.join(&name);
        write_matrix(&p, m)?;
        written.push(p);
        Ok(name)
    };
    let mut supports = Vec::new();
    for (i, s) in basis.supports.iter().enumerate() {
        let reduced = put(format!("reduced_{i:03}.lfrb"), &basis.reduced[i].matrix)?;
        let lbar = basis.lbar[i]
            .iter()
            .enumerate()
            .map(|(j, m)| put(format!("lbar_{i:03}_{j:02}.lfrb"), m))
            .collect::<Result<_>>()?;
        supports.push(SupportEntry {
            sigma: s.values().to_vec(),
            grid_index: basis.support_indices[i],
            reduced,
            lbar,
        });
    }
    let (g_hi, g_lo) = basis.gram.gram_matrices();
    let rhs = basis.gram.rhs();
    let r_hi = dense::column_vector(&rhs.iter().map(|d| d.hi).collect::<Vec<_>>());
    let r_lo = dense::column_vector(&rhs.iter().map(|d| d.lo).collect::<Vec<_>>());
    let gram = [put("gram_hi.lfrb".into(), &g_hi)?, put("gram_lo.lfrb".into(), &g_lo)?];
    let rhs = [put("rhs_hi.lfrb".into(), &r_hi)?, put("rhs_lo.lfrb".into(), &r_lo)?];
    let trace_path = dir.join("trace.csv");
    io::write_text(&trace_path, &trace_csv(basis))?;
    written.push(trace_path);
    let s2 = basis.gram.s_norm_sq();
    let manifest = BasisManifest {
        n_unknowns: basis.n_unknowns,
        n_electrodes: basis.n_electrodes(),
        n_sources: basis.n_sources(),
        n_h: basis.gram.n_h(),
        column_order: COLUMN_ORDER.into(),
        s_norm_sq: [s2.hi, s2.lo],
        gram,
        rhs,
        trace_csv: "trace.csv".into(),
        bounds: basis.bounds.clone(),
        multipliers: basis.multipliers.clone(),
        provenance: basis.provenance.clone(),
        supports,
    };
    let p = dir.join(BASIS_MANIFEST);
    write_toml(&p, &manifest)?;
    written.push(p);
    Ok(written)
}

pub fn load_basis(dir: &Path) -> Result<SupportBasis> {
    let mpath = dir.join(BASIS_MANIFEST);
    let m: BasisManifest = read_toml(&mpath)?;
    if m.column_order != COLUMN_ORDER {
        return Err(Error::format(&mpath, format!("unknown column order '{}'", m.column_order)));
    }
    let load = |name: &str, rows: usize, cols: usize| -> Result<Mat<f64>> {
        let p = dir.join(name);
        let mat = read_matrix(&p)?;
        if mat.nrows() != rows || mat.ncols() != cols {
            return Err(Error::format(
                &p,
                format!("expected {rows}x{cols}, found {}x{}", mat.nrows(), mat.ncols()),
            ));
        }
        Ok(mat)
    };
    let n_cols = m.supports.len() * m.n_h;
    let g_hi = load(&m.gram[0], n_cols, n_cols)?;
    let g_lo = load(&m.gram[1], n_cols, n_cols)?;
    let r_hi = load(&m.rhs[0], n_cols, 1)?;
    let r_lo = load(&m.rhs[1], n_cols, 1)?;
    let rhs: Vec<Dd> = (0..n_cols).map(|p| Dd::new(r_hi[(p, 0)], r_lo[(p, 0)])).collect();
    let gram = GramData::from_parts(m.n_h, &g_hi, &g_lo, &rhs, Dd::new(m.s_norm_sq[0], m.s_norm_sq[1]));
    let mut supports = Vec::new();
    let mut support_indices = Vec::new();
    let mut reduced = Vec::new();
    let mut lbar = Vec::new();
    for s in &m.supports {
        let sigma = ConductivityPoint::new(s.sigma.clone())?;
        reduced.push(ReducedRows {
            matrix: load(&s.reduced, m.n_electrodes, m.n_unknowns)?,
            sigma: sigma.clone(),
        });
        if s.lbar.len() != m.multipliers.lambda.len() {
            return Err(Error::format(&mpath, "lbar count does not match the lambda multipliers"));
        }
        lbar.push(
            s.lbar
                .iter()
                .map(|f| load(f, m.n_electrodes, m.n_sources))
                .collect::<Result<Vec<_>>>()?,
        );
        supports.push(sigma);
        support_indices.push(s.grid_index);
    }
    if m.multipliers.gamma.len() != m.n_h {
        return Err(Error::format(&mpath, "n_h does not match the gamma multipliers"));
    }
    Ok(SupportBasis {
        supports,
        support_indices,
        reduced,
        gram,
        lbar,
        multipliers: m.multipliers,
        bounds: m.bounds,
        provenance: m.provenance,
        n_unknowns: m.n_unknowns,
    })
}
