//! Gram data `KᵀK`, `Kᵀvec(S)` and `‖S‖²` for the reduced-basis least-squares problem.
//!
//! Column `(i, j)` of `K` is `vec(A_ij)` with `A_ij = S H(σ_i)⁻¹ H̄_j`, stored at
//! index `i·N_H + j`. `K` itself is never formed. The `A_ij` blocks are kept
//! in memory so that every entry is the compensated inner product of one
//! fixed set of f64 vectors.

use faer::Mat;

use crate::model::ParametrizedSystem;
use crate::numerics::dd::Dd;
use crate::numerics::dense;
use crate::numerics::forward::ReducedRows;

#[derive(Debug, Clone)]
pub struct GramData {
    n_h: usize,
    /// Lower triangle, row `p` holds entries `(p, 0..=p)`.
    gram: Vec<Vec<Dd>>,
    rhs: Vec<Dd>,
    s_norm_sq: Dd,
    columns: Vec<Mat<f64>>,
}

impl GramData {
    pub fn empty(sys: &ParametrizedSystem) -> Self {
        let s = sys.selection();
        GramData {
            n_h: sys.h_components().len(),
            gram: Vec::new(),
            rhs: Vec::new(),
            s_norm_sq: dense::frobenius_dot(s, s),
            columns: Vec::new(),
        }
    }

    /// Rebuild from persisted entries; the `A` blocks are not restored.
    pub fn from_parts(n_h: usize, gram: &Mat<f64>, gram_lo: &Mat<f64>, rhs: &[Dd], s_norm_sq: Dd) -> Self {
        let m = rhs.len();
        assert!(gram.nrows() == m && gram.ncols() == m);
        let rows = (0..m)
            .map(|p| (0..=p).map(|q| Dd::new(gram[(p, q)], gram_lo[(p, q)])).collect())
            .collect();
        GramData {
            n_h,
            gram: rows,
            rhs: rhs.to_vec(),
            s_norm_sq,
            columns: Vec::new(),
        }
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    /// Number of supports represented.
    pub fn n_supports(&self) -> usize {
        if self.n_h == 0 { 0 } else { self.rhs.len() / self.n_h }
    }

    pub fn n_columns(&self) -> usize {
        self.rhs.len()
    }

    #[inline]
    pub fn entry(&self, p: usize, q: usize) -> Dd {
        if q <= p { self.gram[p][q] } else { self.gram[q][p] }
    }

    pub fn rhs(&self) -> &[Dd] {
        &self.rhs
    }

    pub fn s_norm_sq(&self) -> Dd {
        self.s_norm_sq
    }

    pub fn s_norm(&self) -> f64 {
        self.s_norm_sq.sqrt().to_f64()
    }

    pub fn column_index(&self, support: usize, component: usize) -> usize {
        support * self.n_h + component
    }

    /// Full symmetric matrices `(hi, lo)`.
    pub fn gram_matrices(&self) -> (Mat<f64>, Mat<f64>) {
        let m = self.n_columns();
        let hi = Mat::from_fn(m, m, |p, q| self.entry(p, q).hi);
        let lo = Mat::from_fn(m, m, |p, q| self.entry(p, q).lo);
        (hi, lo)
    }

    pub fn gram_f64(&self) -> Mat<f64> {
        let m = self.n_columns();
        Mat::from_fn(m, m, |p, q| self.entry(p, q).to_f64())
    }

    pub fn has_columns(&self) -> bool {
        self.columns.len() == self.n_columns()
    }

    /// The cached `A_ij` blocks, in column order.
    pub fn columns(&self) -> &[Mat<f64>] {
        &self.columns
    }

    /// Recomputes the `A` blocks after loading from disk so the basis can be extended.
    pub fn restore_columns(&mut self, sys: &ParametrizedSystem, reduced: &[ReducedRows]) {
        assert_eq!(reduced.len(), self.n_supports());
        self.columns = reduced.iter().flat_map(|r| a_blocks(sys, r)).collect();
    }

    /// Gram truncated to its first `n` supports, without the `A` blocks.
    pub fn prefix(&self, n: usize) -> GramData {
        let m = (n * self.n_h).min(self.n_columns());
        GramData {
            n_h: self.n_h,
            gram: self.gram[..m].to_vec(),
            rhs: self.rhs[..m].to_vec(),
            s_norm_sq: self.s_norm_sq,
            columns: Vec::new(),
        }
    }
}

fn a_blocks(sys: &ParametrizedSystem, rows: &ReducedRows) -> Vec<Mat<f64>> {
    sys.h_components()
        .iter()
        .map(|c| dense::product(rows.matrix.as_ref(), c.matrix.as_ref()))
        .collect()
}

fn block_dot(a: &Mat<f64>, b: &Mat<f64>) -> Dd {
    dense::frobenius_dot(a, b)
}

/// Appends the `N_H` columns of a new support. Existing entries are untouched.
pub fn extend_gram(gram: &mut GramData, sys: &ParametrizedSystem, new_rows: &ReducedRows) {
    assert!(
        gram.has_columns(),
        "gram blocks must be restored before extending a loaded basis"
    );
    assert_eq!(gram.n_h, sys.h_components().len());
    let s = sys.selection();
    for a in a_blocks(sys, new_rows) {
        let mut row: Vec<Dd> = gram.columns.iter().map(|prev| block_dot(&a, prev)).collect();
        row.push(block_dot(&a, &a));
        gram.rhs.push(block_dot(&a, s));
        gram.gram.push(row);
        gram.columns.push(a);
    }
}
