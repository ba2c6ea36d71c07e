//! The small least-squares solve for `α` and the closed-form upper bound.
//!
//! With `Γ_σ = I_n ⊗ γ(σ)`, the normal equations are `G_σ α = b_σ` where
//! `G_σ = Γᵀ(KᵀK)Γ` and `b_σ = Γᵀ(Kᵀvec S)`, and the bound is
//! `E² = ‖S‖² − 2αᵀb_σ + αᵀG_σα`. Nothing here touches `N_V`-sized data.

use faer::Mat;

use crate::error::Result;
use crate::model::{ConductivityPoint, Multipliers, ParametrizedSystem};
use crate::numerics::dd::Dd;
use crate::numerics::dense;
use crate::numerics::forward::ReducedRows;
use crate::numerics::gram::GramData;

/// A column whose Schur pivot falls below this fraction of its own diagonal
/// entry is numerically in the span of the earlier ones and is skipped.
pub const PIVOT_TOL: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSolution {
    pub alpha: Vec<f64>,
    pub upper_bound: f64,
    pub relative_upper_bound: f64,
    /// At least one support was dropped as numerically dependent.
    pub regularized: bool,
}

/// `G_σ` (full, symmetric) and `b_σ` restricted to the first `n` supports.
pub fn normal_system(gram: &GramData, gamma: &[f64], n: usize) -> (Vec<Vec<Dd>>, Vec<Dd>) {
    let n_h = gram.n_h();
    assert_eq!(gamma.len(), n_h, "gamma length must equal N_H");
    assert!(n <= gram.n_supports());
    let mut g = vec![vec![Dd::ZERO; n]; n];
    for a in 0..n {
        for b in 0..=a {
            let mut acc = Dd::ZERO;
            for (j, &gj) in gamma.iter().enumerate() {
                let p = a * n_h + j;
                let mut inner = Dd::ZERO;
                for (l, &gl) in gamma.iter().enumerate() {
                    inner += gram.entry(p, b * n_h + l).mul_f64(gl);
                }
                acc += inner.mul_f64(gj);
            }
            g[a][b] = acc;
            g[b][a] = acc;
        }
    }
    let rhs = gram.rhs();
    let b = (0..n)
        .map(|a| {
            gamma
                .iter()
                .enumerate()
                .map(|(j, &gj)| rhs[a * n_h + j].mul_f64(gj))
                .sum()
        })
        .collect();
    (g, b)
}

/// `‖S‖² − 2αᵀb + αᵀGα`, clamped at zero.
pub fn bound_squared(s_norm_sq: Dd, g: &[Vec<Dd>], b: &[Dd], alpha: &[f64]) -> Dd {
    let mut e2 = s_norm_sq;
    for (a, &x) in alpha.iter().enumerate() {
        e2 = e2 - b[a].mul_f64(2.0 * x);
        let mut row = Dd::ZERO;
        for (c, &y) in alpha.iter().enumerate() {
            row += g[a][c].mul_f64(y);
        }
        e2 += row.mul_f64(x);
    }
    e2.max0()
}

/// Cholesky in support order, skipping dependent columns (their `α` is 0).
/// Skipping keeps the chosen columns of a prefix a subset of those of any
/// longer prefix, so the bound stays monotone.
fn cholesky_solve(g: &[Vec<Dd>], b: &[Dd]) -> (Vec<Dd>, bool) {
    let n = b.len();
    let mut l = vec![vec![Dd::ZERO; n]; n];
    let mut kept: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let mut d = g[k][k];
        for &m in &kept {
            d = d - l[k][m] * l[k][m];
        }
        if !(g[k][k].hi > 0.0) || d.hi <= PIVOT_TOL * g[k][k].hi {
            continue;
        }
        let root = d.sqrt();
        l[k][k] = root;
        for i in (k + 1)..n {
            let mut v = g[i][k];
            for &m in &kept {
                v = v - l[i][m] * l[k][m];
            }
            l[i][k] = v.div(root);
        }
        kept.push(k);
    }
    let mut y = vec![Dd::ZERO; n];
    for (pos, &i) in kept.iter().enumerate() {
        let mut v = b[i];
        for &m in &kept[..pos] {
            v = v - l[i][m] * y[m];
        }
        y[i] = v.div(l[i][i]);
    }
    let mut x = vec![Dd::ZERO; n];
    for (pos, &i) in kept.iter().enumerate().rev() {
        let mut v = y[i];
        for &m in &kept[pos + 1..] {
            v = v - l[m][i] * x[m];
        }
        x[i] = v.div(l[i][i]);
    }
    (x, kept.len() < n)
}

/// Solve for the first `n` supports given the multiplier values `γ(σ)`.
pub fn solve_alpha_prefix(gram: &GramData, gamma: &[f64], n: usize) -> AlphaSolution {
    let (g, b) = normal_system(gram, gamma, n);
    let (x, regularized) = cholesky_solve(&g, &b);
    let alpha: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
    let e = bound_squared(gram.s_norm_sq(), &g, &b, &alpha).sqrt().to_f64();
    let s_norm = gram.s_norm();
    AlphaSolution {
        alpha,
        upper_bound: e,
        relative_upper_bound: if s_norm > 0.0 { e / s_norm } else { e },
        regularized,
    }
}

pub fn solve_alpha_gamma(gram: &GramData, gamma: &[f64]) -> AlphaSolution {
    solve_alpha_prefix(gram, gamma, gram.n_supports())
}

/// `α*_n(σ)` and the upper bound `E_n` at `σ`.
pub fn solve_alpha(gram: &GramData, multipliers: &Multipliers, sigma: &ConductivityPoint) -> Result<AlphaSolution> {
    let gamma = multipliers.gamma_at(sigma)?;
    Ok(solve_alpha_gamma(gram, &gamma))
}

/// `‖S − Σ_i α_i R_i H(σ)‖_F` computed explicitly with dense products.
pub fn upper_bound_direct(
    sys: &ParametrizedSystem,
    supports: &[ReducedRows],
    alpha: &[f64],
    sigma: &ConductivityPoint,
) -> Result<f64> {
    assert_eq!(supports.len(), alpha.len());
    let h = sys.assemble_h(sigma)?;
    let mut comb = Mat::<f64>::zeros(sys.n_electrodes(), sys.n_unknowns());
    for (r, &a) in supports.iter().zip(alpha) {
        dense::axpy(&mut comb, a, &r.matrix);
    }
    let mut resid = sys.selection().clone();
    dense::matmul_into(&mut resid, faer::Accum::Add, comb.as_ref(), h.as_ref(), -1.0);
    Ok(resid.norm_l2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(v: f64) -> Dd {
        Dd::from_f64(v)
    }

    #[test]
    fn cholesky_solves_small_system() {
        let g = vec![vec![dd(4.0), dd(2.0)], vec![dd(2.0), dd(3.0)]];
        let b = vec![dd(2.0), dd(1.0)];
        let (x, skipped) = cholesky_solve(&g, &b);
        assert!(!skipped);
        assert!((x[0].to_f64() - 0.5).abs() < 1e-30);
        assert!(x[1].to_f64().abs() < 1e-30);
    }

    #[test]
    fn dependent_column_is_skipped() {
        // columns 0 and 1 are identical, column 2 is independent
        let g = vec![
            vec![dd(1.0), dd(1.0), dd(0.0)],
            vec![dd(1.0), dd(1.0), dd(0.0)],
            vec![dd(0.0), dd(0.0), dd(4.0)],
        ];
        let b = vec![dd(2.0), dd(2.0), dd(2.0)];
        let (x, skipped) = cholesky_solve(&g, &b);
        assert!(skipped);
        assert_eq!(x[1], Dd::ZERO);
        assert!((x[0].to_f64() - 2.0).abs() < 1e-30 && (x[2].to_f64() - 0.5).abs() < 1e-30);
    }

    #[test]
    fn zero_column_is_skipped() {
        let g = vec![vec![dd(0.0), dd(0.0)], vec![dd(0.0), dd(2.0)]];
        let (x, skipped) = cholesky_solve(&g, &[dd(0.0), dd(1.0)]);
        assert!(skipped && x[0] == Dd::ZERO && (x[1].to_f64() - 0.5).abs() < 1e-30);
    }

    #[test]
    fn bound_is_clamped_at_zero() {
        let g = vec![vec![dd(1.0)]];
        let b = vec![dd(1.0)];
        // 1 - 2 + 1 = 0, and a value slightly > 1 would go negative without a clamp
        let e = bound_squared(dd(1.0 - 1e-20), &g, &b, &[1.0]);
        assert_eq!(e, Dd::ZERO);
    }
}
