//! Exact forward solves: lead fields, reduced rows `S H⁻¹` and the bound constant.

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{ConductivityPoint, ParametrizedSystem};
use crate::numerics::dense::{self, HeadFactor, MAX_CONDITION};

/// Solve residual accepted for exact lead fields and reduced rows.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// A factored head matrix `H(σ)` together with its 1-norm condition estimate.
pub struct FactoredHead {
    pub h: Mat<f64>,
    pub factor: HeadFactor,
    pub condition: f64,
}

/// Assemble and factor `H(σ)`, rejecting singular or badly conditioned matrices.
pub fn factor_head(sys: &ParametrizedSystem, sigma: &ConductivityPoint) -> Result<FactoredHead> {
    let h = sys.assemble_h(sigma)?;
    let factor = HeadFactor::new(&h);
    let condition = dense::one_norm(&h) * factor.inverse_one_norm_estimate();
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::numerical(
            Some(sigma.values()),
            format!("head matrix is singular or ill-conditioned (cond1 ≈ {condition:e})"),
        ));
    }
    Ok(FactoredHead { h, factor, condition })
}

/// `R = S H(σ)⁻¹` for a support configuration.
#[derive(Debug, Clone)]
pub struct ReducedRows {
    pub matrix: Mat<f64>,
    pub sigma: ConductivityPoint,
}

/// Output of a full exact forward solve.
#[derive(Debug, Clone)]
pub struct ExactForward {
    pub leadfield: Mat<f64>,
    /// `‖H⁻¹ D‖_F`
    pub potentials_norm: f64,
    /// `‖H X − D‖_F / ‖D‖_F`
    pub residual: f64,
}

pub fn exact_forward(sys: &ParametrizedSystem, sigma: &ConductivityPoint) -> Result<ExactForward> {
    let head = factor_head(sys, sigma)?;
    let d = sys.assemble_d(sigma)?;
    let mut x = d.clone();
    head.factor.solve_in_place(&mut x);
    let mut r = d.clone();
    dense::matmul_into(&mut r, faer::Accum::Add, head.h.as_ref(), x.as_ref(), -1.0);
    let d_norm = d.norm_l2();
    let residual = if d_norm == 0.0 { r.norm_l2() } else { r.norm_l2() / d_norm };
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::numerical(
            Some(sigma.values()),
            format!("forward solve residual {residual:e} exceeds {RESIDUAL_TOL:e}"),
        ));
    }
    let leadfield = dense::product(sys.selection().as_ref(), x.as_ref());
    Ok(ExactForward {
        leadfield,
        potentials_norm: x.norm_l2(),
        residual,
    })
}

/// `L(σ) = S H(σ)⁻¹ D(σ)` by factor-and-solve.
pub fn exact_leadfield(sys: &ParametrizedSystem, sigma: &ConductivityPoint) -> Result<Mat<f64>> {
    Ok(exact_forward(sys, sigma)?.leadfield)
}

/// Solves `H(σ)ᵀ Y = Sᵀ` and returns `Yᵀ = S H(σ)⁻¹`.
pub fn reduced_rows(sys: &ParametrizedSystem, sigma: &ConductivityPoint) -> Result<ReducedRows> {
    let head = factor_head(sys, sigma)?;
    let s = sys.selection();
    let mut y = s.transpose().to_owned();
    head.factor.solve_transpose_in_place(&mut y);
    let matrix = y.transpose().to_owned();

    let mut check = s.clone();
    dense::matmul_into(&mut check, faer::Accum::Add, matrix.as_ref(), head.h.as_ref(), -1.0);
    let rel = check.norm_l2() / s.norm_l2();
    if !(rel <= RESIDUAL_TOL) {
        return Err(Error::numerical(
            Some(sigma.values()),
            format!("reduced-row residual {rel:e} exceeds {RESIDUAL_TOL:e}"),
        ));
    }
    Ok(ReducedRows {
        matrix,
        sigma: sigma.clone(),
    })
}

/// `C(σ) = ‖H⁻¹ D‖_F / ‖L‖_F`, the constant relating the computable bound
/// to the true relative lead-field error.
pub fn bound_constant(sys: &ParametrizedSystem, sigma: &ConductivityPoint) -> Result<f64> {
    let fwd = exact_forward(sys, sigma)?;
    constant_from(&fwd, sigma)
}

pub fn constant_from(fwd: &ExactForward, sigma: &ConductivityPoint) -> Result<f64> {
    let l = fwd.leadfield.norm_l2();
    if l == 0.0 {
        return Err(Error::numerical(Some(sigma.values()), "lead field is identically zero"));
    }
    Ok(fwd.potentials_norm / l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, MultiplierSpec};

    fn spd(n: usize, shift: f64) -> Mat<f64> {
        let b = Mat::<f64>::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut h = dense::product(b.transpose(), b.as_ref());
        for i in 0..n {
            h[(i, i)] += shift;
        }
        h
    }

    /// `D̄`/`λ` mirror `H̄`/`γ` and `S = I`, so `L = I`.
    fn mirror_system() -> ParametrizedSystem {
        let n = 5;
        let h1 = spd(n, 1.0);
        let h2 = spd(n, 3.0);
        let h = vec![
            Component { matrix: h1.clone(), multiplier: MultiplierSpec::sigma(0) },
            Component { matrix: h2.clone(), multiplier: MultiplierSpec::inverse(1) },
        ];
        let d = vec![
            Component { matrix: h1, multiplier: MultiplierSpec::sigma(0) },
            Component { matrix: h2, multiplier: MultiplierSpec::inverse(1) },
        ];
        ParametrizedSystem::new(2, h, d, Mat::identity(n, n), None).unwrap()
    }

    fn pt(v: &[f64]) -> ConductivityPoint {
        ConductivityPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mirrored_system_has_identity_leadfield() {
        let sys = mirror_system();
        let l = exact_leadfield(&sys, &pt(&[0.7, 2.5])).unwrap();
        let eye = Mat::<f64>::identity(5, 5);
        assert!(dense::frobenius_distance(&l, &eye) < 1e-12);
        let c = bound_constant(&sys, &pt(&[0.7, 2.5])).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_selection_gives_inverse() {
        let sys = mirror_system();
        let s = pt(&[1.3, 0.4]);
        let r = reduced_rows(&sys, &s).unwrap();
        let h = sys.assemble_h(&s).unwrap();
        let back = dense::product(r.matrix.as_ref(), h.as_ref());
        assert!(dense::frobenius_distance(&back, &Mat::identity(5, 5)) < 1e-12);
    }

    #[test]
    fn homogeneous_scaling() {
        let n = 6;
        let h = vec![Component { matrix: spd(n, 0.5), multiplier: MultiplierSpec::sigma(0) }];
        let d = vec![Component {
            matrix: Mat::from_fn(n, 2, |i, j| (i + 2 * j) as f64 - 3.0),
            multiplier: MultiplierSpec::constant(1.0),
        }];
        let sel = Mat::from_fn(2, n, |i, j| if j == 2 * i + 1 { 1.0 } else { 0.0 });
        let sys = ParametrizedSystem::new(1, h, d, sel, None).unwrap();
        let l1 = exact_leadfield(&sys, &pt(&[1.5])).unwrap();
        let l2 = exact_leadfield(&sys, &pt(&[3.0])).unwrap();
        let mut half = l1.clone();
        half *= faer::Scale(0.5);
        assert!(dense::relative_distance(&l2, &half) < 1e-12);
    }

    #[test]
    fn singular_head_is_rejected_with_point() {
        let n = 4;
        let lap = Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                if i == 0 || i == n - 1 { 1.0 } else { 2.0 }
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let h = vec![Component { matrix: lap, multiplier: MultiplierSpec::sigma(0) }];
        let d = vec![Component { matrix: Mat::identity(n, 1), multiplier: MultiplierSpec::constant(1.0) }];
        let sys = ParametrizedSystem::new(1, h, d, Mat::identity(1, n), None).unwrap();
        match exact_leadfield(&sys, &pt(&[2.0])) {
            Err(Error::Numerical { point: Some(p), .. }) => assert_eq!(p, vec![2.0]),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
