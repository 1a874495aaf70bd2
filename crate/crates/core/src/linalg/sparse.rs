//! Compressed sparse row storage.

use std::ops::{AddAssign, Mul};

use nalgebra::DMatrix;

/// Entry types usable in a [`CsrMatrix`].
pub trait Entry: Copy + Default + PartialEq + AddAssign + Mul<Output = Self> + Into<f64> {}

impl Entry for i32 {}
impl Entry for f64 {}

/// Row-compressed sparse matrix. Column indices are strictly increasing
/// within each row and no explicit zeros are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Entry> CsrMatrix<T> {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// zero sums dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut offsets = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<T> = Vec::with_capacity(trip.len());
        offsets.push(0);
        let mut row = 0;
        let mut iter = trip.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v == T::default() {
                continue;
            }
            while row < r {
                offsets.push(cols.len());
                row += 1;
            }
            cols.push(c);
            vals.push(v);
        }
        while row < nrows {
            offsets.push(cols.len());
            row += 1;
        }
        CsrMatrix {
            nrows,
            ncols,
            offsets,
            cols,
            vals,
        }
    }

    pub fn diagonal_matrix(d: &[T]) -> Self {
        let trip = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&c, &v)| (i, c, v))
        })
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let mut s = 0.0;
            for (&j, &a) in c.iter().zip(v) {
                s += a.into() * x[j];
            }
            *yi = s;
        }
    }

    /// `y = Aᵀ x`.
    pub fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a.into() * xi;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply(x, &mut y);
        y
    }

    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.apply_transpose(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let trip = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Sparse product `self · other` in the entry type's own arithmetic.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&k, &a) in c.iter().zip(v) {
                let (c2, v2) = other.row(k);
                for (&j, &b) in c2.iter().zip(v2) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// True when no entry is stored (every assembled zero is dropped).
    pub fn is_zero(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|&v| v.into().abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v.into();
        }
        m
    }

    /// `Aᵀ diag(w) A` as a real matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> CsrMatrix<f64> {
        assert_eq!(w.len(), self.nrows);
        let mut trip = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&a, &va) in c.iter().zip(v) {
                for (&b, &vb) in c.iter().zip(v) {
                    trip.push((a, b, wi * va.into() * vb.into()));
                }
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.ncols, trip)
    }
}

impl CsrMatrix<f64> {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().position(|&j| j == i).map_or(0.0, |p| v[p])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, -1.0), (0, 0, 3.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.row(0), (&[0usize, 1][..], &[3.0, 2.0][..]));
        assert_eq!(m.row(1).0.len(), 0);
    }

    #[test]
    fn integer_product() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1), (0, 1, -1), (1, 1, 2)]);
        let p = a.matmul(&a);
        assert_eq!(p.to_dense(), a.to_dense() * a.to_dense());
    }

    proptest! {
        #[test]
        fn apply_matches_dense(
            trip in proptest::collection::vec((0usize..5, 0usize..4, -3.0f64..3.0), 0..20),
            x in proptest::collection::vec(-1.0f64..1.0, 4),
            y in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            let m = CsrMatrix::from_triplets(5, 4, trip);
            for i in 0..5 {
                let (c, _) = m.row(i);
                prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
            }
            let d = m.to_dense();
            let ax = m.mul_vec(&x);
            let dx = &d * nalgebra::DVector::from_column_slice(&x);
            for i in 0..5 {
                prop_assert!((ax[i] - dx[i]).abs() < 1e-12);
            }
            let aty = m.mul_transpose_vec(&y);
            let dty = d.transpose() * nalgebra::DVector::from_column_slice(&y);
            for j in 0..4 {
                prop_assert!((aty[j] - dty[j]).abs() < 1e-12);
            }
            prop_assert_eq!(m.transpose().transpose(), m);
        }
    }
}
