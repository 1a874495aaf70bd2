//! Linear algebra used by the solvers and their dense reference oracles.

pub mod cg;
pub mod dense;
pub mod eig;
pub mod sparse;

pub use cg::{cg_solve, CgOptions, CgSetup, SolveStats};
pub use eig::{smallest_eigpair, EigOptions, EigPair};
pub use sparse::CsrMatrix;

use nalgebra::DMatrix;

/// A symmetric linear map applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal entries, used for shift defaults and scaling.
    fn diagonal(&self) -> Vec<f64>;

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinearOperator for CsrMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        CsrMatrix::apply(self, x, y)
    }
    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
    fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self[(i, i)]).collect()
    }
}

/// Diagonal operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, &d), &xi) in y.iter_mut().zip(&self.0).zip(x) {
            *yi = d * xi;
        }
    }
    fn diagonal(&self) -> Vec<f64> {
        self.0.clone()
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    diag: Vec<f64>,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(diag: Vec<f64>, f: F) -> Self {
        FnOperator {
            dim: diag.len(),
            diag,
            f,
        }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

// Reductions run in index order so results are reproducible bit for bit.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `Σ w_i a_i b_i`
pub fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((wi, x), y) in w.iter().zip(a).zip(b) {
        s += wi * x * y;
    }
    s
}

/// `sqrt(Σ w_i a_i²)`
pub fn wnorm(w: &[f64], a: &[f64]) -> f64 {
    wdot(w, a, a).max(0.0).sqrt()
}

/// `sqrt(Σ a_i² / w_i)`, the dual norm of [`wnorm`].
pub fn inv_wnorm(w: &[f64], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for (wi, x) in w.iter().zip(a) {
        s += x * x / wi;
    }
    s.sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
