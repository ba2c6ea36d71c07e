#![allow(dead_code)]

use lfrb::basis::{greedy_select, GreedyConfig, InitialSupports, StopRule, SupportBasis};
use lfrb::generators::{build_synthetic, SynthSpec};
use lfrb::grid::{ConductivityGrid, GridAxis};
use lfrb::model::ParametrizedSystem;
use lfrb::parallel::Workers;

pub fn synthetic(n: usize, seed: u64) -> (ParametrizedSystem, SynthSpec) {
    let spec = SynthSpec { n_unknowns: n, seed, ..SynthSpec::default() };
    (build_synthetic(&spec).unwrap(), spec)
}

pub fn small_grid() -> ConductivityGrid {
    ConductivityGrid::new(vec![GridAxis::linear(0.5, 2.0, 5), GridAxis::log(1e-2, 1.0, 5), GridAxis::fixed(1.0)])
        .unwrap()
}

pub fn greedy(sys: &ParametrizedSystem, grid: &ConductivityGrid, max: usize) -> SupportBasis {
    let cfg = GreedyConfig {
        initial: InitialSupports::Corners,
        stop: StopRule { eps_abs: Some(0.0), eps_delta: None, max_supports: max },
    };
    greedy_select(sys, grid, &cfg, &Workers::serial()).unwrap()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &faer::Mat<f64>) -> faer::Mat<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..2 * n).map(|j| if j < n { a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 }).collect())
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in &mut m[c] {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    faer::Mat::from_fn(n, n, |i, j| m[i][n + j])
}
