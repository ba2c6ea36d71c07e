//! Brute-force oracles: explicit inverses and a materialized basis matrix K.

mod common;

use common::*;
use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use lfrb::generators::{build_synthetic, GammaFamily, LambdaFamily, SynthSpec};
use lfrb::grid::{ConductivityGrid, GridAxis};
use lfrb::model::ConductivityPoint;
use lfrb::numerics::dense::{product, relative_distance};
use lfrb::numerics::exact_leadfield;

fn point(v: &[f64]) -> ConductivityPoint {
    ConductivityPoint::new(v.to_vec()).unwrap()
}

#[test]
fn exact_leadfield_matches_explicit_inverse() {
    let (sys, _) = synthetic(48, 3);
    for s in [[1.0, 0.1, 1.0], [0.5, 0.01, 1.0], [2.0, 1.0, 1.0]] {
        let sigma = point(&s);
        let hinv = gauss_jordan_inverse(&sys.assemble_h(&sigma).unwrap());
        let d = sys.assemble_d(&sigma).unwrap();
        let oracle = product(product(sys.selection().as_ref(), hinv.as_ref()).as_ref(), d.as_ref());
        let l = exact_leadfield(&sys, &sigma).unwrap();
        assert!(relative_distance(&l, &oracle) < 1e-10);
    }
}

/// Columns `vec(R_i H̄_j)` in support-major order, `R_i = S H(σ_i)⁻¹`.
fn materialize_k(sys: &lfrb::model::ParametrizedSystem, supports: &[ConductivityPoint]) -> Vec<Vec<f64>> {
    let mut cols = Vec::new();
    for s in supports {
        let r = product(sys.selection().as_ref(), gauss_jordan_inverse(&sys.assemble_h(s).unwrap()).as_ref());
        for c in sys.h_components() {
            let a = product(r.as_ref(), c.matrix.as_ref());
            cols.push((0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect());
        }
    }
    cols
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn gram_quantities_match_materialized_basis() {
    let (sys, _) = synthetic(64, 7);
    let grid = small_grid();
    let basis = greedy(&sys, &grid, 6);
    let k = materialize_k(&sys, &basis.supports);
    let g = basis.gram.gram_f64();
    for p in 0..k.len() {
        for q in 0..k.len() {
            let scale = (dot(&k[p], &k[p]) * dot(&k[q], &k[q])).sqrt();
            assert!((g[(p, q)] - dot(&k[p], &k[q])).abs() <= 1e-10 * scale, "G[{p},{q}]");
        }
    }
    let s = sys.selection();
    let s_vec: Vec<f64> = (0..s.nrows()).flat_map(|i| (0..s.ncols()).map(move |j| s[(i, j)])).collect();
    for (p, col) in k.iter().enumerate() {
        let b = basis.gram.rhs()[p].to_f64();
        assert!((b - dot(col, &s_vec)).abs() <= 1e-10 * dot(col, col).sqrt() * dot(&s_vec, &s_vec).sqrt());
    }

    let n_h = sys.h_components().len();
    for sigma in [point(&[1.1, 0.05, 1.0]), point(&[0.7, 0.3, 1.0]), grid.samples()[7].clone()] {
        let gamma = sys.multipliers().gamma_at(&sigma).unwrap();
        let n = basis.len();
        let k_sigma = Mat::from_fn(s_vec.len(), n, |r, i| (0..n_h).map(|j| gamma[j] * k[i * n_h + j][r]).sum::<f64>());
        let rhs = Mat::from_fn(s_vec.len(), 1, |r, _| s_vec[r]);
        let alpha_bf = k_sigma.qr().solve_lstsq(&rhs);
        let sol = basis.solve(&sigma).unwrap();
        for i in 0..n {
            let rel = (sol.alpha[i] - alpha_bf[(i, 0)]).abs() / alpha_bf[(i, 0)].abs().max(1e-300);
            assert!(rel < 1e-10, "alpha[{i}] {} vs {}", sol.alpha[i], alpha_bf[(i, 0)]);
        }
        let resid: f64 = (0..s_vec.len())
            .map(|r| {
                let v = s_vec[r] - (0..n).map(|i| sol.alpha[i] * k_sigma[(r, i)]).sum::<f64>();
                v * v
            })
            .sum::<f64>()
            .sqrt();
        assert!((sol.upper_bound - resid).abs() <= 1e-10 * resid, "{} vs {resid}", sol.upper_bound);
    }
}

#[test]
fn homogeneous_model_scales_inversely() {
    let spec = SynthSpec {
        n_unknowns: 20,
        n_compartments: 1,
        gamma_family: vec![GammaFamily::Sigma],
        lambda_family: vec![LambdaFamily::One],
        domain: vec![GridAxis::log(0.1, 10.0, 9)],
        ..SynthSpec::default()
    };
    let sys = build_synthetic(&spec).unwrap();
    let l1 = exact_leadfield(&sys, &point(&[1.0])).unwrap();
    let l3 = exact_leadfield(&sys, &point(&[3.0])).unwrap();
    assert!(relative_distance(&(l3 * 3.0), &l1) < 1e-12);

    let grid = ConductivityGrid::new(spec.domain.clone()).unwrap();
    let basis = lfrb::basis::greedy_select(
        &sys,
        &grid,
        &lfrb::basis::GreedyConfig {
            initial: lfrb::basis::InitialSupports::Center,
            stop: lfrb::basis::StopRule { eps_abs: Some(1e-9), eps_delta: None, max_supports: 5 },
        },
        &lfrb::parallel::Workers::serial(),
    )
    .unwrap();
    assert_eq!(basis.len(), 1);
    let c = basis.supports[0].get(0);
    let sol = basis.solve(&point(&[4.0])).unwrap();
    assert!((sol.alpha[0] - c / 4.0).abs() < 1e-12);
}
