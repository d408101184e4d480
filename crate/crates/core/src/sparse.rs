//! Compressed sparse row matrices with the handful of operations the
//! discretisation needs.

use alloc::vec;
use alloc::vec::Vec;

/// Real CSR matrix. Column indices within a row are sorted and unique.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` entries; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            assert!(r < rows && c < cols, "entry ({r}, {c}) outside {rows}x{cols}");
        }
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let (r, c, mut v) = sorted[i];
            i += 1;
            while i < sorted.len() && sorted[i].0 == r && sorted[i].1 == c {
                v += sorted[i].2;
                i += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self { rows, cols, indptr, indices, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(columns, values)` of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            out.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, v)));
        }
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "operand length");
        assert_eq!(y.len(), self.rows, "output length");
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t)
    }

    /// `D A` for diagonal `D = diag(d)`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] *= d[r];
            }
        }
        out.prune()
    }

    /// `A D` for diagonal `D = diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            *v *= d[out.indices[k]];
        }
        out.prune()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.prune()
    }

    fn prune(self) -> Self {
        if self.values.iter().all(|&v| v != 0.0) {
            return self;
        }
        let t = self.triplets();
        Self::from_triplets(self.rows, self.cols, &t)
    }

    /// `self + other`.
    pub fn add(&self, other: &SparseOperator) -> Self {
        assert!(self.rows == other.rows && self.cols == other.cols, "shape mismatch in add");
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.rows, self.cols, &t)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut acc = vec![0.0; other.cols];
        let mut used = vec![false; other.cols];
        let mut touched = Vec::new();
        let mut t = Vec::new();
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(k);
                for (&c, &b) in c2.iter().zip(v2) {
                    if !used[c] {
                        used[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = 0.0;
                used[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, &t)
    }

    /// Stacks blocks vertically.
    pub fn vstack(blocks: &[&SparseOperator]) -> Self {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut t = Vec::new();
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column mismatch");
            t.extend(b.triplets().into_iter().map(|(r, c, v)| (r + off, c, v)));
            off += b.rows;
        }
        Self::from_triplets(off, cols, &t)
    }

    /// Places blocks side by side.
    pub fn hstack(blocks: &[&SparseOperator]) -> Self {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut t = Vec::new();
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack row mismatch");
            t.extend(b.triplets().into_iter().map(|(r, c, v)| (r, c + off, v)));
            off += b.cols;
        }
        Self::from_triplets(rows, off, &t)
    }

    pub fn block_diag(blocks: &[&SparseOperator]) -> Self {
        let mut t = Vec::new();
        let (mut ro, mut co) = (0, 0);
        for b in blocks {
            t.extend(b.triplets().into_iter().map(|(r, c, v)| (r + ro, c + co, v)));
            ro += b.rows;
            co += b.cols;
        }
        Self::from_triplets(ro, co, &t)
    }

    /// Row-major dense copy; intended for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Diagonal entries (zero where absent).
    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}

/// Positive diagonal weights `W` of a weighted inner product `<x, W y>`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalWeights(Vec<f64>);

impl DiagonalWeights {
    pub fn new(w: Vec<f64>) -> Self {
        assert!(w.iter().all(|&x| x > 0.0), "weights must be positive");
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.0.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        crate::math::sqrt(self.inner(a, a))
    }

    pub fn inverse(&self) -> Vec<f64> {
        self.0.iter().map(|w| 1.0 / w).collect()
    }

    /// Adjoint of `a` mapping `W_in`-space to `W_out`-space:
    /// `W_in^-1 A^T W_out`.
    pub fn adjoint(a: &SparseOperator, w_in: &DiagonalWeights, w_out: &DiagonalWeights) -> SparseOperator {
        assert_eq!(a.cols(), w_in.len());
        assert_eq!(a.rows(), w_out.len());
        a.transpose().scale_cols(w_out.as_slice()).scale_rows(&w_in.inverse())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = b.first().map_or(0, |r| r.len());
        a.iter()
            .map(|row| (0..n).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
            .collect()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseOperator::from_triplets(2, 3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 2, 4.0), (1, 0, 0.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn stacking() {
        let i = SparseOperator::identity(2);
        let v = SparseOperator::vstack(&[&i, &i.scale(2.0)]);
        assert_eq!(v.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0], vec![0.0, 2.0]]);
        let h = SparseOperator::hstack(&[&i, &i.scale(2.0)]);
        assert_eq!(h.transpose(), v);
        let b = SparseOperator::block_diag(&[&i, &SparseOperator::diagonal(&[3.0])]);
        assert_eq!(b.diag(), vec![1.0, 1.0, 3.0]);
    }

    #[test]
    fn adjoint_matches_weighted_inner_product() {
        let a = SparseOperator::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, -2.0), (2, 0, 0.5), (2, 1, 3.0)]);
        let win = DiagonalWeights::new(vec![0.25, 4.0]);
        let wout = DiagonalWeights::new(vec![1.0, 2.0, 0.5]);
        let at = DiagonalWeights::adjoint(&a, &win, &wout);
        let x = [0.3, -1.2];
        let y = [1.0, 0.7, -2.0];
        let lhs = wout.inner(&a.apply(&x), &y);
        let rhs = win.inner(&x, &at.apply(&y));
        assert!((lhs - rhs).abs() < 1e-14);
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = SparseOperator> {
        prop::collection::vec((0..rows, 0..cols, -3.0..3.0f64), 0..12)
            .prop_map(move |t| SparseOperator::from_triplets(rows, cols, &t))
    }

    proptest! {
        #[test]
        fn matmul_agrees_with_dense(a in arb_matrix(4, 3), b in arb_matrix(3, 5)) {
            let got = a.matmul(&b).to_dense();
            let want = dense_mul(&a.to_dense(), &b.to_dense());
            for (gr, wr) in got.iter().zip(&want) {
                for (g, w) in gr.iter().zip(wr) {
                    prop_assert!((g - w).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn add_and_transpose(a in arb_matrix(3, 4), b in arb_matrix(3, 4)) {
            let s = a.add(&b);
            for r in 0..3 {
                for c in 0..4 {
                    prop_assert!((s.get(r, c) - a.get(r, c) - b.get(r, c)).abs() < 1e-12);
                    prop_assert_eq!(a.transpose().get(c, r), a.get(r, c));
                }
            }
        }
    }
}
