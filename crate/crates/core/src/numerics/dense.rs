//! Dense matrix helpers and the factor-and-solve backend for head matrices.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::numerics::dd::{Dd, DotAccumulator};

/// Head matrices whose estimated 1-norm condition number exceeds this are
/// rejected as numerically singular.
pub const MAX_CONDITION: f64 = 1e14;

/// `dst += alpha * src`
pub fn axpy(dst: &mut Mat<f64>, alpha: f64, src: &Mat<f64>) {
    assert_eq!((dst.nrows(), dst.ncols()), (src.nrows(), src.ncols()));
    if alpha == 0.0 {
        return;
    }
    for j in 0..src.ncols() {
        let s = src.col_as_slice(j);
        for (d, &v) in dst.col_as_slice_mut(j).iter_mut().zip(s) {
            *d += alpha * v;
        }
    }
}

pub fn matmul_into(dst: &mut Mat<f64>, accum: Accum, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    matmul(dst.as_mut(), accum, lhs, rhs, alpha, Par::Seq);
}

pub fn product(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(lhs.nrows(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

/// `‖A − Aᵀ‖_F`
pub fn asymmetry(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            let d = a[(i, j)] - a[(j, i)];
            acc += 2.0 * d * d;
        }
    }
    acc.sqrt()
}

pub fn frobenius_distance(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for (x, y) in a.col_as_slice(j).iter().zip(b.col_as_slice(j)) {
            let d = x - y;
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn relative_distance(a: &Mat<f64>, reference: &Mat<f64>) -> f64 {
    let norm = reference.norm_l2();
    let d = frobenius_distance(a, reference);
    if norm == 0.0 {
        d
    } else {
        d / norm
    }
}

/// Frobenius inner product `⟨A, B⟩` with compensated accumulation.
pub fn frobenius_dot(a: &Mat<f64>, b: &Mat<f64>) -> Dd {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = DotAccumulator::new();
    for j in 0..a.ncols() {
        acc.add_slices(a.col_as_slice(j), b.col_as_slice(j));
    }
    acc.finish()
}

/// Row-major copy of the entries.
pub fn to_row_major(a: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub fn column_vector(data: &[f64]) -> Mat<f64> {
    Mat::from_fn(data.len(), 1, |i, _| data[i])
}

pub fn one_norm(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.col_as_slice(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Factorization of an assembled head matrix.
///
/// Cholesky is tried first; symmetric indefinite matrices (the BEM
/// multiplier family contains negative terms) fall back to LU.
pub enum HeadFactor {
    Cholesky(faer::linalg::solvers::Llt<f64>),
    Lu(PartialPivLu<f64>),
}

impl HeadFactor {
    pub fn new(h: &Mat<f64>) -> Self {
        match h.llt(Side::Lower) {
            Ok(llt) => HeadFactor::Cholesky(llt),
            Err(_) => HeadFactor::Lu(h.partial_piv_lu()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HeadFactor::Cholesky(f) => f.L().nrows(),
            HeadFactor::Lu(f) => f.L().nrows(),
        }
    }

    pub fn solve_in_place(&self, rhs: &mut Mat<f64>) {
        match self {
            HeadFactor::Cholesky(f) => f.solve_in_place(rhs.as_mut()),
            HeadFactor::Lu(f) => f.solve_in_place(rhs.as_mut()),
        }
    }

    pub fn solve_transpose_in_place(&self, rhs: &mut Mat<f64>) {
        match self {
            HeadFactor::Cholesky(f) => f.solve_transpose_in_place(rhs.as_mut()),
            HeadFactor::Lu(f) => f.solve_transpose_in_place(rhs.as_mut()),
        }
    }

    /// Hager–Higham estimate of `‖H⁻¹‖₁`.
    pub fn inverse_one_norm_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
        let mut estimate = 0.0;
        for iter in 0..5 {
            let mut y = x.clone();
            self.solve_in_place(&mut y);
            let y = y.col_as_slice(0);
            let new_estimate: f64 = y.iter().map(|v| v.abs()).sum();
            if !new_estimate.is_finite() {
                return f64::INFINITY;
            }
            if iter > 0 && new_estimate <= estimate {
                break;
            }
            estimate = new_estimate;
            let mut z = Mat::<f64>::from_fn(n, 1, |i, _| if y[i] >= 0.0 { 1.0 } else { -1.0 });
            self.solve_transpose_in_place(&mut z);
            let z = z.col_as_slice(0);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
            let ztx: f64 = z.iter().zip(x.col_as_slice(0)).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = Mat::<f64>::zeros(n, 1);
            x[(jmax, 0)] = 1.0;
        }
        estimate
    }
}
