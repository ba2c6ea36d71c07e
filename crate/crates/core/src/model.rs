//! Conductivity-parametrized linear systems.
//!
//! A [`ParametrizedSystem`] stores the conductivity-independent pieces of a
//! discretized forward model:
//!
//! ```text
//! H(σ) = Σ_i γ_i(σ) H̄_i        D(σ) = Σ_j λ_j(σ) D̄_j        L(σ) = S H(σ)⁻¹ D(σ)
//! ```
//!
//! Multipliers are signed monomials in the compartment conductivities with
//! powers in {-1, 0, +1}, which covers both the FEM family (`γ_i = σ_i`) and
//! the symmetric-BEM family (`-σ_i`, `σ_i⁻¹`, `σ_i + σ_j`, ...).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dense;

/// Relative Frobenius tolerance used when validating symmetric components.
const SYMMETRY_TOL: f64 = 1e-12;

/// A conductivity configuration, one strictly positive value (S/m) per compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ConductivityPoint(Vec<f64>);

impl ConductivityPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("conductivity point must have at least one entry"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::config(format!(
                "conductivity values must be finite and strictly positive, got {v}"
            )));
        }
        Ok(ConductivityPoint(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Returns a copy with every entry multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ConductivityPoint::new(self.0.iter().map(|v| v * factor).collect())
    }

    /// Returns a copy with entry `dim` replaced.
    pub fn with_value(&self, dim: usize, value: f64) -> Result<Self> {
        let mut v = self.0.clone();
        if dim >= v.len() {
            return Err(Error::config(format!(
                "dimension {dim} out of range for a {}-compartment point",
                v.len()
            )));
        }
        v[dim] = value;
        ConductivityPoint::new(v)
    }
}

impl TryFrom<Vec<f64>> for ConductivityPoint {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ConductivityPoint::new(values)
    }
}

impl From<ConductivityPoint> for Vec<f64> {
    fn from(p: ConductivityPoint) -> Self {
        p.0
    }
}

/// One signed monomial `coefficient · σ_compartment^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierTerm {
    pub coefficient: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compartment: Option<usize>,
    #[serde(default)]
    pub power: i8,
}

/// A scalar function of the conductivities: a sum of [`MultiplierTerm`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiplierSpec {
    pub terms: Vec<MultiplierTerm>,
}

impl MultiplierSpec {
    pub fn new(terms: Vec<MultiplierTerm>) -> Result<Self> {
        let spec = MultiplierSpec { terms };
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn constant(value: f64) -> Self {
        MultiplierSpec {
            terms: vec![MultiplierTerm {
                coefficient: value,
                compartment: None,
                power: 0,
            }],
        }
    }

    pub fn monomial(coefficient: f64, compartment: usize, power: i8) -> Self {
        MultiplierSpec {
            terms: vec![MultiplierTerm {
                coefficient,
                compartment: Some(compartment),
                power,
            }],
        }
    }

    /// `σ_i`
    pub fn sigma(i: usize) -> Self {
        Self::monomial(1.0, i, 1)
    }

    /// `σ_i⁻¹`
    pub fn inverse(i: usize) -> Self {
        Self::monomial(1.0, i, -1)
    }

    /// `σ_i + σ_j`
    pub fn pair_sum(i: usize, j: usize) -> Self {
        MultiplierSpec {
            terms: vec![
                MultiplierTerm {
                    coefficient: 1.0,
                    compartment: Some(i),
                    power: 1,
                },
                MultiplierTerm {
                    coefficient: 1.0,
                    compartment: Some(j),
                    power: 1,
                },
            ],
        }
    }

    /// True when the spec evaluates to exactly 1 for every σ.
    pub fn is_unit_constant(&self) -> bool {
        let constant: f64 = self
            .terms
            .iter()
            .map(|t| {
                if t.compartment.is_none() || t.power == 0 {
                    t.coefficient
                } else {
                    f64::NAN
                }
            })
            .sum();
        constant == 1.0
    }

    fn check_shape(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::config("multiplier must have at least one term"));
        }
        for t in &self.terms {
            if !(-1..=1).contains(&t.power) {
                return Err(Error::config(format!(
                    "multiplier power must be -1, 0 or +1, got {}",
                    t.power
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::config("multiplier coefficient must be finite"));
            }
            if t.power != 0 && t.compartment.is_none() {
                return Err(Error::config(
                    "multiplier term with nonzero power needs a compartment index",
                ));
            }
        }
        Ok(())
    }

    /// Largest compartment index referenced, if any.
    pub fn max_compartment(&self) -> Option<usize> {
        self.terms.iter().filter_map(|t| t.compartment).max()
    }

    pub fn evaluate(&self, sigma: &ConductivityPoint) -> Result<f64> {
        evaluate_multiplier(self, sigma)
    }
}

/// Evaluates `Σ coefficient · σ_compartment^power` at `sigma`.
pub fn evaluate_multiplier(spec: &MultiplierSpec, sigma: &ConductivityPoint) -> Result<f64> {
    let mut acc = 0.0;
    for t in &spec.terms {
        let factor = match (t.compartment, t.power) {
            (_, 0) | (None, _) => 1.0,
            (Some(c), p) => {
                let s = *sigma.values().get(c).ok_or_else(|| {
                    Error::config(format!(
                        "multiplier references compartment {c} but sigma has {} entries",
                        sigma.len()
                    ))
                })?;
                match p {
                    1 => s,
                    -1 => 1.0 / s,
                    _ => {
                        return Err(Error::config(format!("unsupported multiplier power {p}")));
                    }
                }
            }
        };
        acc += t.coefficient * factor;
    }
    Ok(acc)
}

/// A conductivity-independent matrix paired with its scalar multiplier.
#[derive(Debug, Clone)]
pub struct Component {
    pub matrix: Mat<f64>,
    pub multiplier: MultiplierSpec,
}

/// Rank-one kernel completion `c · w wᵀ`, stored as the h-component at `component`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deflation {
    pub vector: Vec<f64>,
    pub scale: f64,
    pub component: usize,
}

impl Deflation {
    /// The dense matrix `c · w wᵀ`.
    pub fn matrix(&self) -> Mat<f64> {
        let w = &self.vector;
        let c = self.scale;
        Mat::from_fn(w.len(), w.len(), |i, j| c * w[i] * w[j])
    }
}

/// The multiplier functions of a system, without any of its matrices.
///
/// This is all the online approximation step needs besides the precomputed
/// basis, so it is stored separately and persisted alongside bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub n_compartments: usize,
    pub gamma: Vec<MultiplierSpec>,
    pub lambda: Vec<MultiplierSpec>,
}

impl Multipliers {
    pub fn check_point(&self, sigma: &ConductivityPoint) -> Result<()> {
        if sigma.len() != self.n_compartments {
            return Err(Error::config(format!(
                "sigma has {} entries, system has {} compartments",
                sigma.len(),
                self.n_compartments
            )));
        }
        Ok(())
    }

    pub fn gamma_at(&self, sigma: &ConductivityPoint) -> Result<Vec<f64>> {
        self.check_point(sigma)?;
        self.gamma.iter().map(|g| g.evaluate(sigma)).collect()
    }

    pub fn lambda_at(&self, sigma: &ConductivityPoint) -> Result<Vec<f64>> {
        self.check_point(sigma)?;
        self.lambda.iter().map(|l| l.evaluate(sigma)).collect()
    }
}

/// Conductivity-independent decomposition of a forward model.
#[derive(Debug, Clone)]
pub struct ParametrizedSystem {
    h_components: Vec<Component>,
    d_components: Vec<Component>,
    selection: Mat<f64>,
    deflation: Option<Deflation>,
    multipliers: Multipliers,
}

impl ParametrizedSystem {
    pub fn new(
        n_compartments: usize,
        h_components: Vec<Component>,
        d_components: Vec<Component>,
        selection: Mat<f64>,
        deflation: Option<Deflation>,
    ) -> Result<Self> {
        if n_compartments == 0 {
            return Err(Error::config("system needs at least one compartment"));
        }
        if h_components.is_empty() || d_components.is_empty() {
            return Err(Error::config(
                "system needs at least one h-component and one d-component",
            ));
        }
        let n_v = h_components[0].matrix.nrows();
        let n_s = d_components[0].matrix.ncols();
        for (i, c) in h_components.iter().enumerate() {
            if c.matrix.nrows() != n_v || c.matrix.ncols() != n_v {
                return Err(Error::config(format!(
                    "h_components[{i}] is {}x{}, expected {n_v}x{n_v}",
                    c.matrix.nrows(),
                    c.matrix.ncols()
                )));
            }
            let asym = dense::asymmetry(&c.matrix);
            let norm = c.matrix.norm_l2();
            if asym > SYMMETRY_TOL * norm {
                return Err(Error::config(format!(
                    "h_components[{i}] is not symmetric (|H - Hᵀ| = {asym:e})"
                )));
            }
        }
        for (j, c) in d_components.iter().enumerate() {
            if c.matrix.nrows() != n_v || c.matrix.ncols() != n_s {
                return Err(Error::config(format!(
                    "d_components[{j}] is {}x{}, expected {n_v}x{n_s}",
                    c.matrix.nrows(),
                    c.matrix.ncols()
                )));
            }
        }
        if selection.ncols() != n_v || selection.nrows() == 0 {
            return Err(Error::config(format!(
                "selection is {}x{}, expected N_E x {n_v}",
                selection.nrows(),
                selection.ncols()
            )));
        }
        for c in h_components.iter().chain(&d_components) {
            c.multiplier.check_shape()?;
            if let Some(m) = c.multiplier.max_compartment() {
                if m >= n_compartments {
                    return Err(Error::config(format!(
                        "multiplier references compartment {m}, system has {n_compartments}"
                    )));
                }
            }
        }
        if let Some(def) = &deflation {
            if def.vector.len() != n_v {
                return Err(Error::config("deflation vector length must equal N_V"));
            }
            if !(def.scale.is_finite() && def.scale > 0.0) {
                return Err(Error::config("deflation scale must be positive"));
            }
            let comp = h_components.get(def.component).ok_or_else(|| {
                Error::config("deflation component index out of range")
            })?;
            if !comp.multiplier.is_unit_constant() {
                return Err(Error::config(
                    "deflation component must carry the constant multiplier 1",
                ));
            }
            let expected = def.matrix();
            let diff = dense::frobenius_distance(&comp.matrix, &expected);
            if diff > SYMMETRY_TOL * expected.norm_l2() {
                return Err(Error::config(
                    "deflation component does not equal c·w·wᵀ",
                ));
            }
        }
        let multipliers = Multipliers {
            n_compartments,
            gamma: h_components.iter().map(|c| c.multiplier.clone()).collect(),
            lambda: d_components.iter().map(|c| c.multiplier.clone()).collect(),
        };
        Ok(ParametrizedSystem {
            h_components,
            d_components,
            selection,
            deflation,
            multipliers,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.selection.ncols()
    }

    pub fn n_electrodes(&self) -> usize {
        self.selection.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.d_components[0].matrix.ncols()
    }

    pub fn n_compartments(&self) -> usize {
        self.multipliers.n_compartments
    }

    pub fn h_components(&self) -> &[Component] {
        &self.h_components
    }

    pub fn d_components(&self) -> &[Component] {
        &self.d_components
    }

    pub fn selection(&self) -> &Mat<f64> {
        &self.selection
    }

    pub fn deflation(&self) -> Option<&Deflation> {
        self.deflation.as_ref()
    }

    pub fn multipliers(&self) -> &Multipliers {
        &self.multipliers
    }

    /// `H(σ) = Σ γ_i(σ) H̄_i`, deflation component included when present.
    pub fn assemble_h(&self, sigma: &ConductivityPoint) -> Result<Mat<f64>> {
        let gamma = self.multipliers.gamma_at(sigma)?;
        Ok(combine(&self.h_components, &gamma))
    }

    /// `D(σ) = Σ λ_j(σ) D̄_j`.
    pub fn assemble_d(&self, sigma: &ConductivityPoint) -> Result<Mat<f64>> {
        let lambda = self.multipliers.lambda_at(sigma)?;
        Ok(combine(&self.d_components, &lambda))
    }
}

fn combine(components: &[Component], weights: &[f64]) -> Mat<f64> {
    let first = &components[0].matrix;
    let mut out = Mat::<f64>::zeros(first.nrows(), first.ncols());
    for (c, &w) in components.iter().zip(weights) {
        dense::axpy(&mut out, w, &c.matrix);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> ConductivityPoint {
        ConductivityPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn constant_multiplier_is_one() {
        let spec = MultiplierSpec::constant(1.0);
        assert_eq!(evaluate_multiplier(&spec, &pt(&[0.3, 7.0])).unwrap(), 1.0);
        assert!(spec.is_unit_constant());
    }

    #[test]
    fn pair_sum_and_inverse() {
        let sum = MultiplierSpec::pair_sum(0, 1);
        assert_eq!(evaluate_multiplier(&sum, &pt(&[2.0, 4.0])).unwrap(), 6.0);
        let inv = MultiplierSpec::inverse(1);
        assert_eq!(evaluate_multiplier(&inv, &pt(&[2.0, 4.0])).unwrap(), 0.25);
        assert_eq!(evaluate_multiplier(&MultiplierSpec::sigma(1), &pt(&[2.0, 4.0])).unwrap(), 4.0);
    }

    #[test]
    fn out_of_range_compartment_is_config_error() {
        let spec = MultiplierSpec::sigma(3);
        let err = evaluate_multiplier(&spec, &pt(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_power_rejected() {
        let err = MultiplierSpec::new(vec![MultiplierTerm {
            coefficient: 1.0,
            compartment: Some(0),
            power: 2,
        }])
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn conductivity_point_rejects_nonpositive() {
        assert!(ConductivityPoint::new(vec![1.0, 0.0]).is_err());
        assert!(ConductivityPoint::new(vec![1.0, -2.0]).is_err());
        assert!(ConductivityPoint::new(vec![f64::NAN]).is_err());
        assert!(ConductivityPoint::new(vec![]).is_err());
    }

    fn spd(n: usize, shift: f64) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                2.0 + shift
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    fn toy_system(multipliers: Vec<MultiplierSpec>, n_c: usize) -> ParametrizedSystem {
        let n = 5;
        let h = multipliers
            .into_iter()
            .enumerate()
            .map(|(k, m)| Component {
                matrix: spd(n, k as f64),
                multiplier: m,
            })
            .collect();
        let d = vec![
            Component {
                matrix: Mat::from_fn(n, 2, |i, j| (i + j) as f64),
                multiplier: MultiplierSpec::constant(1.0),
            },
            Component {
                matrix: Mat::from_fn(n, 2, |i, j| (i * j) as f64 + 1.0),
                multiplier: MultiplierSpec::sigma(0),
            },
        ];
        let s = Mat::from_fn(2, n, |i, j| if j == 2 * i { 1.0 } else { 0.0 });
        ParametrizedSystem::new(n_c, h, d, s, None).unwrap()
    }

    #[test]
    fn assemble_single_component_scales() {
        let sys = toy_system(vec![MultiplierSpec::sigma(0)], 1);
        let h = sys.assemble_h(&pt(&[2.0])).unwrap();
        let base = &sys.h_components()[0].matrix;
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(h[(i, j)], 2.0 * base[(i, j)]);
            }
        }
    }

    #[test]
    fn assemble_unit_multipliers_sums_components() {
        let sys = toy_system(
            vec![MultiplierSpec::sigma(0), MultiplierSpec::sigma(1), MultiplierSpec::sigma(2)],
            3,
        );
        let h = sys.assemble_h(&pt(&[1.0, 1.0, 1.0])).unwrap();
        let mut expected = Mat::<f64>::zeros(5, 5);
        for c in sys.h_components() {
            expected += &c.matrix;
        }
        assert_eq!(dense::frobenius_distance(&h, &expected), 0.0);
    }

    #[test]
    fn assemble_is_linear_in_multipliers() {
        let sys = toy_system(
            vec![MultiplierSpec::sigma(0), MultiplierSpec::sigma(1), MultiplierSpec::sigma(2)],
            3,
        );
        let a = pt(&[0.5, 0.2, 1.0]);
        let b = pt(&[1.5, 0.01, 0.3]);
        let ab = pt(&[2.0, 0.21, 1.3]);
        let mut sum = sys.assemble_h(&a).unwrap();
        sum += sys.assemble_h(&b).unwrap();
        let direct = sys.assemble_h(&ab).unwrap();
        assert!(dense::frobenius_distance(&sum, &direct) <= 1e-12 * direct.norm_l2());
    }

    #[test]
    fn assemble_d_combines_lambda() {
        let sys = toy_system(vec![MultiplierSpec::sigma(0)], 1);
        let d = sys.assemble_d(&pt(&[3.0])).unwrap();
        let d1 = &sys.d_components()[0].matrix;
        let d2 = &sys.d_components()[1].matrix;
        for i in 0..5 {
            for j in 0..2 {
                assert_eq!(d[(i, j)], d1[(i, j)] + 3.0 * d2[(i, j)]);
            }
        }
    }

    #[test]
    fn rejects_asymmetric_component() {
        let h = vec![Component {
            matrix: Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64),
            multiplier: MultiplierSpec::sigma(0),
        }];
        let d = vec![Component {
            matrix: Mat::zeros(3, 1),
            multiplier: MultiplierSpec::constant(1.0),
        }];
        let err = ParametrizedSystem::new(1, h, d, Mat::identity(3, 3), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_deflation_with_nonconstant_multiplier() {
        let def = Deflation {
            vector: vec![1.0 / 3f64.sqrt(); 3],
            scale: 2.0,
            component: 1,
        };
        let h = vec![
            Component {
                matrix: spd(3, 0.0),
                multiplier: MultiplierSpec::sigma(0),
            },
            Component {
                matrix: def.matrix(),
                multiplier: MultiplierSpec::sigma(0),
            },
        ];
        let d = vec![Component {
            matrix: Mat::zeros(3, 1),
            multiplier: MultiplierSpec::constant(1.0),
        }];
        assert!(ParametrizedSystem::new(1, h, d, Mat::identity(3, 3), Some(def)).is_err());
    }

    #[test]
    fn multiplier_evaluation_is_deterministic() {
        let spec = MultiplierSpec::new(vec![
            MultiplierTerm { coefficient: -1.5, compartment: Some(0), power: 1 },
            MultiplierTerm { coefficient: 0.25, compartment: Some(1), power: -1 },
            MultiplierTerm { coefficient: 3.0, compartment: None, power: 0 },
        ])
        .unwrap();
        let p = pt(&[0.37, 0.0123]);
        let a = evaluate_multiplier(&spec, &p).unwrap();
        let b = evaluate_multiplier(&spec, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
