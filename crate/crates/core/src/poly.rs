//! Entrywise polynomial interpolation of the lead field along one
//! conductivity dimension, and its comparison against the reduced basis.

use std::collections::HashMap;
use std::fmt::Write as _;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{greedy_select, relative_error, GreedyConfig, InitialSupports, StopRule};
use crate::error::{Error, Result};
use crate::grid::{ConductivityGrid, GridAxis};
use crate::model::{ConductivityPoint, ParametrizedSystem};
use crate::numerics::dense;
use crate::numerics::forward::exact_leadfield;
use crate::parallel::Workers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeTransform {
    /// Interpolate in σ.
    Linear,
    /// Interpolate in ln σ.
    Log,
}

impl NodeTransform {
    fn apply(self, x: f64) -> f64 {
        match self {
            NodeTransform::Linear => x,
            NodeTransform::Log => x.ln(),
        }
    }
}

/// Barycentric interpolant through `n` node lead fields; degree `n − 1`.
#[derive(Debug, Clone)]
pub struct PolyModel {
    pub nodes: Vec<f64>,
    pub transform: NodeTransform,
    pub values: Vec<Mat<f64>>,
    t_nodes: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolyEval {
    pub leadfield: Mat<f64>,
    pub extrapolated: bool,
}

/// Barycentric weights `1 / Π_{m≠k}(t_k − t_m)`, scaled so the largest is ±1.
fn barycentric_weights(t: &[f64]) -> Vec<f64> {
    let logs: Vec<(f64, f64)> = (0..t.len())
        .map(|k| {
            let mut log = 0.0;
            let mut sign = 1.0;
            for (m, &tm) in t.iter().enumerate() {
                if m != k {
                    let d = t[k] - tm;
                    log -= d.abs().ln();
                    if d < 0.0 {
                        sign = -sign;
                    }
                }
            }
            (sign, log)
        })
        .collect();
    let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|&(s, l)| s * (l - top).exp()).collect()
}

impl PolyModel {
    pub fn from_values(nodes: Vec<f64>, values: Vec<Mat<f64>>, transform: NodeTransform) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::config("polynomial model needs at least one node"));
        }
        if nodes.len() != values.len() {
            return Err(Error::config("one lead field per node is required"));
        }
        if nodes.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::config("nodes must be positive conductivities"));
        }
        let shape = (values[0].nrows(), values[0].ncols());
        if values.iter().any(|v| (v.nrows(), v.ncols()) != shape) {
            return Err(Error::config("node lead fields differ in shape"));
        }
        let t_nodes: Vec<f64> = nodes.iter().map(|&x| transform.apply(x)).collect();
        for a in 0..t_nodes.len() {
            for b in 0..a {
                if t_nodes[a] == t_nodes[b] {
                    return Err(Error::config(format!("coincident nodes at {}", nodes[a])));
                }
            }
        }
        let weights = barycentric_weights(&t_nodes);
        Ok(PolyModel { nodes, transform, values, t_nodes, weights })
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn eval(&self, x: f64) -> PolyEval {
        let lo = self.nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let extrapolated = x < lo || x > hi;
        let t = self.transform.apply(x);
        if let Some(k) = self.t_nodes.iter().position(|&tk| tk == t) {
            return PolyEval { leadfield: self.values[k].clone(), extrapolated };
        }
        let c: Vec<f64> = self.t_nodes.iter().zip(&self.weights).map(|(&tk, &w)| w / (t - tk)).collect();
        let denom: f64 = c.iter().sum();
        let first = &self.values[0];
        let mut out = Mat::<f64>::zeros(first.nrows(), first.ncols());
        for (ck, v) in c.iter().zip(&self.values) {
            dense::axpy(&mut out, ck / denom, v);
        }
        PolyEval { leadfield: out, extrapolated }
    }
}

/// Exact lead fields at `nodes` along dimension `dim` of `base`, then interpolate.
pub fn poly_fit(
    sys: &ParametrizedSystem,
    base: &ConductivityPoint,
    dim: usize,
    nodes: &[f64],
    transform: NodeTransform,
) -> Result<PolyModel> {
    let values = nodes
        .iter()
        .map(|&x| exact_leadfield(sys, &base.with_value(dim, x)?))
        .collect::<Result<_>>()?;
    PolyModel::from_values(nodes.to_vec(), values, transform)
}

pub fn poly_eval(model: &PolyModel, x: f64) -> PolyEval {
    model.eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub n: usize,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Varying dimension.
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub n_values: Vec<usize>,
    pub eval_count: usize,
    /// Size of the uniform 1-D grid the reduced basis is selected on.
    pub rb_grid_count: usize,
    /// Also run the log-spaced polynomial variant.
    pub log_variant: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            dim: 1,
            lo: 1e-4,
            hi: 1e-1,
            n_values: (2..=14).collect(),
            eval_count: 40,
            rb_grid_count: 25,
            log_variant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `rb` and `poly` rows, both per `n`.
    pub rows: Vec<ComparisonRow>,
    /// `poly-log` rows when the log variant was requested.
    pub sensitivity: Vec<ComparisonRow>,
    /// Number of supports the greedy run actually produced.
    pub rb_supports: usize,
}

/// Caches exact lead fields by conductivity value along the sweep.
struct ExactCache<'a> {
    sys: &'a ParametrizedSystem,
    base: &'a ConductivityPoint,
    dim: usize,
    map: HashMap<u64, Mat<f64>>,
}

impl ExactCache<'_> {
    fn fill(&mut self, xs: &[f64], workers: &Workers) -> Result<()> {
        let mut missing: Vec<f64> = xs.iter().copied().filter(|x| !self.map.contains_key(&x.to_bits())).collect();
        missing.sort_by(f64::total_cmp);
        missing.dedup();
        let (sys, base, dim) = (self.sys, self.base, self.dim);
        let solved = workers.map(&missing, |_, &x| exact_leadfield(sys, &base.with_value(dim, x)?));
        for (x, l) in missing.into_iter().zip(solved) {
            self.map.insert(x.to_bits(), l?);
        }
        Ok(())
    }

    fn get(&self, x: f64) -> &Mat<f64> {
        &self.map[&x.to_bits()]
    }
}

fn summarize(method: &str, n: usize, errors: &[f64]) -> ComparisonRow {
    ComparisonRow {
        method: method.into(),
        n,
        mean_rel_error: errors.iter().sum::<f64>() / errors.len() as f64,
        max_rel_error: errors.iter().cloned().fold(0.0, f64::max),
    }
}

/// Reduced basis against polynomial interpolation on a 1-D conductivity sweep.
pub fn compare_methods(
    sys: &ParametrizedSystem,
    base: &ConductivityPoint,
    cfg: &CompareConfig,
    workers: &Workers,
) -> Result<Comparison> {
    if cfg.dim >= base.len() {
        return Err(Error::config("varying dimension out of range"));
    }
    if cfg.n_values.is_empty() || cfg.n_values.contains(&0) {
        return Err(Error::config("n_values must be a nonempty list of positive integers"));
    }
    if cfg.eval_count < 2 {
        return Err(Error::config("eval_count must be at least 2"));
    }
    let max_n = *cfg.n_values.iter().max().unwrap();
    if max_n > cfg.rb_grid_count {
        return Err(Error::config("largest n exceeds the reduced-basis grid size"));
    }
    let axes_with = |axis: GridAxis| -> Vec<GridAxis> {
        (0..base.len())
            .map(|d| if d == cfg.dim { axis } else { GridAxis::fixed(base.get(d)) })
            .collect()
    };
    let eval_axis = GridAxis::linear(cfg.lo, cfg.hi, cfg.eval_count);
    let eval_x = eval_axis.values();
    let mut cache = ExactCache { sys, base, dim: cfg.dim, map: HashMap::new() };
    cache.fill(&eval_x, workers)?;

    let rb_grid = ConductivityGrid::new(axes_with(GridAxis::linear(cfg.lo, cfg.hi, cfg.rb_grid_count)))?;
    let greedy = GreedyConfig {
        initial: InitialSupports::Corners,
        stop: StopRule { eps_abs: None, eps_delta: None, max_supports: max_n.max(2) },
    };
    let basis = greedy_select(sys, &rb_grid, &greedy, workers)?;
    let eval_points: Vec<ConductivityPoint> =
        eval_x.iter().map(|&x| base.with_value(cfg.dim, x)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut sensitivity = Vec::new();
    for &n in &cfg.n_values {
        let k = n.min(basis.len());
        let rb_err = workers
            .map(&eval_points, |i, p| {
                basis
                    .approximate_prefix(p, k)
                    .map(|a| relative_error(&a.leadfield, cache.get(eval_x[i])))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize("rb", n, &rb_err));

        let mut variants = vec![(NodeTransform::Linear, "poly")];
        if cfg.log_variant {
            variants.push((NodeTransform::Log, "poly-log"));
        }
        for (transform, name) in variants {
            let node_axis = match transform {
                NodeTransform::Linear => GridAxis::linear(cfg.lo, cfg.hi, n),
                NodeTransform::Log => GridAxis::log(cfg.lo, cfg.hi, n),
            };
            let nodes = if n == 1 { vec![node_axis.center()] } else { node_axis.values() };
            cache.fill(&nodes, workers)?;
            let values = nodes.iter().map(|&x| cache.get(x).clone()).collect();
            let model = PolyModel::from_values(nodes, values, transform)?;
            let err: Vec<f64> = workers.map(&eval_x, |_, &x| relative_error(&model.eval(x).leadfield, cache.get(x)));
            let row = summarize(name, n, &err);
            if transform == NodeTransform::Linear {
                rows.push(row);
            } else {
                sensitivity.push(row);
            }
        }
    }
    Ok(Comparison { rows, sensitivity, rb_supports: basis.len() })
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,n,mean_rel_error,max_rel_error\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:e},{:e}", r.method, r.n, r.mean_rel_error, r.max_rel_error);
    }
    out
}
