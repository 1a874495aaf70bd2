//! Dense direct solvers, used as reference oracles on small instances.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Largest problem the dense oracles accept.
pub const DENSE_LIMIT: usize = 3000;

/// LU solve with partial pivoting; rejects numerically singular matrices.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dense_solve: {}x{} matrix with {} right-hand side entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag_max = u.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag_min = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if a.nrows() > 0 && !(diag_min > 1e-14 * diag_max) {
        return Err(Error::Singular(format!(
            "pivot ratio {:e}",
            diag_min / diag_max
        )));
    }
    lu.solve(b)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

/// All eigenpairs of the symmetric pencil `A v = λ M v` with `M` positive
/// definite, sorted ascending. Eigenvectors are M-orthonormal columns.
pub fn dense_eig(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidInput("dense_eig: dimension mismatch".into()));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix of dense_eig".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let back = linv.transpose() * &eig.eigenvectors;
    let vectors = DMatrix::from_fn(n, n, |r, c| back[(r, order[c])]);
    Ok((values, vectors))
}

/// Orthonormal basis (columns) of the orthogonal complement of the column
/// space of `b`, inside `R^n`.
pub fn complement_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    if b.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let rank_cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax)
        .collect();
    let mut q = DMatrix::identity(n, n);
    for &i in &rank_cols {
        let ui = u.column(i);
        q -= &ui * ui.transpose();
    }
    let eig = SymmetricEigen::new((&q + q.transpose()) * 0.5);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}
