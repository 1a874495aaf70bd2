//! Preconditioned conjugate gradients with a projection hook.
//!
//! With a projection `P` and diagonal preconditioner `W⁻¹`, the iteration
//! solves `Pᵀ(A x − b) = 0` for `x ∈ range(P)`: the preconditioned residual
//! is projected before it becomes a search direction, so iterates never
//! leave the subspace. `P` must be self-adjoint in the `W` inner product
//! (Euclidean when no preconditioner is given). The reported residual is
//! `sqrt(rᵀ P W⁻¹ r)`, evaluated as `sqrt(gᵀ W g)` with `g = P W⁻¹ r`, relative to the same quantity for `b`.

use super::{axpy, dot, LinearOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Absolute residual floor; the iteration also stops below it.
    pub abs_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-10,
            max_iter: 20_000,
            abs_tol: 0.0,
        }
    }
}

impl CgOptions {
    pub fn with_tol(tol: f64) -> Self {
        CgOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioner and subspace for [`cg_solve`].
#[derive(Clone, Copy, Default)]
pub struct CgSetup<'a> {
    pub opts: CgOptions,
    /// Inverse diagonal preconditioner.
    pub precond: Option<&'a [f64]>,
    pub project: Option<&'a dyn Fn(&mut [f64])>,
}

impl<'a> CgSetup<'a> {
    pub fn new(opts: CgOptions) -> Self {
        CgSetup {
            opts,
            ..Default::default()
        }
    }

    pub fn precond(mut self, inv_diag: &'a [f64]) -> Self {
        self.precond = Some(inv_diag);
        self
    }

    pub fn project(mut self, p: &'a dyn Fn(&mut [f64])) -> Self {
        self.project = Some(p);
        self
    }

    fn precondition(&self, r: &[f64], g: &mut [f64]) {
        match self.precond {
            Some(w) => {
                for ((gi, ri), wi) in g.iter_mut().zip(r).zip(w) {
                    *gi = ri * wi;
                }
            }
            None => g.copy_from_slice(r),
        }
        if let Some(p) = self.project {
            p(g);
        }
    }

    /// `gᵀ W g`, equal to `rᵀ P W⁻¹ r` for `g = P W⁻¹ r` but free of the
    /// cancellation that components of `r` outside the subspace cause.
    fn energy(&self, g: &[f64]) -> f64 {
        match self.precond {
            Some(w) => g.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(gi, wi)| gi * gi / wi).sum(),
            None => dot(g, g),
        }
    }
}

/// Solves `A x = b` on the projected subspace. Never fails: on breakdown or
/// when `max_iter` is exhausted the best iterate is returned with
/// `converged = false`.
pub fn cg_solve(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    setup: &CgSetup,
) -> (Vec<f64>, SolveStats) {
    let n = b.len();
    assert_eq!(a.dim(), n, "operator and right-hand side sizes differ");
    let opts = setup.opts;

    let mut g = vec![0.0; n];
    setup.precondition(b, &mut g);
    let b_norm = setup.energy(&g).sqrt();
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let threshold = (opts.tol * b_norm).max(opts.abs_tol);

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if let Some(p) = setup.project {
        p(&mut x);
    }

    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut best = (f64::INFINITY, x.clone());

    // Outer loop restarts from the true residual whenever the recursively
    // updated one has drifted below the threshold on its own.
    loop {
        a.apply(&x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        setup.precondition(&r, &mut g);
        let mut rho = setup.energy(&g);
        let res = rho.sqrt();
        if res < best.0 {
            best = (res, x.clone());
        }
        if res <= threshold || iterations >= opts.max_iter {
            break;
        }
        let mut d = g.clone();
        let start = iterations;
        let mut breakdown = false;
        while iterations < opts.max_iter {
            a.apply(&d, &mut q);
            let dq = dot(&d, &q);
            if !(dq > 0.0) {
                breakdown = true;
                break;
            }
            let alpha = rho / dq;
            axpy(alpha, &d, &mut x);
            axpy(-alpha, &q, &mut r);
            setup.precondition(&r, &mut g);
            let rho_new = setup.energy(&g);
            iterations += 1;
            if rho_new.sqrt() <= threshold {
                break;
            }
            let beta = rho_new / rho;
            for i in 0..n {
                d[i] = g[i] + beta * d[i];
            }
            rho = rho_new;
        }
        // A restart that makes no progress cannot help.
        if breakdown && iterations == start {
            break;
        }
    }

    let (res, mut x) = best;
    if let Some(p) = setup.project {
        p(&mut x);
    }
    let stats = SolveStats {
        iterations,
        relative_residual: res / b_norm,
        converged: res <= threshold,
    };
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense, norm, sub, CsrMatrix, Diagonal};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn identity_in_one_step() {
        let a = Diagonal(vec![1.0; 5]);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, st) = cg_solve(&a, &b, None, &CgSetup::default());
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert!(norm(&sub(&x, &b)) < 1e-14);
    }

    #[test]
    fn dirichlet_laplacian_three_points() {
        let a = laplacian_1d(3);
        let (x, st) = cg_solve(&a, &[1.0, 1.0, 1.0], None, &CgSetup::default());
        assert!(st.converged);
        let dense = dense::dense_solve(&a.to_dense(), &DVector::from_element(3, 1.0)).unwrap();
        for (xi, want) in x.iter().zip([1.5, 2.0, 1.5]) {
            assert!((xi - want).abs() < 1e-12);
        }
        for i in 0..3 {
            assert!((x[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn a_norm_error_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &r * r.transpose() + DMatrix::identity(n, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = dense::dense_solve(&a, &DVector::from_column_slice(&b)).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=n {
            let setup = CgSetup::new(CgOptions {
                tol: 1e-14,
                max_iter: k,
                abs_tol: 0.0,
            });
            let (x, _) = cg_solve(&a, &b, None, &setup);
            let e = DVector::from_column_slice(&x) - &exact;
            let energy = (e.transpose() * &a * &e)[(0, 0)].sqrt();
            assert!(energy <= last * (1.0 + 1e-10) + 1e-13, "k = {k}");
            last = energy;
        }
    }

    #[test]
    fn singular_system_with_range_projection() {
        // A = K Kᵀ with K the 4×3 difference operator: kernel is the constant vector.
        let k = DMatrix::from_row_slice(4, 3, &[1., 0., 0., -1., 1., 0., 0., -1., 1., 0., 0., -1.]);
        let a = &k * k.transpose();
        let ones = DVector::from_element(4, 0.5);
        let project = |v: &mut [f64]| {
            let m: f64 = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        };
        let b_range = &a * DVector::from_column_slice(&[1.0, -2.0, 0.5, 3.0]);
        let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
        let want = &pinv * &b_range;
        let setup = CgSetup::default().project(&project);
        let (x, st) = cg_solve(&a, b_range.as_slice(), None, &setup);
        assert!(st.converged);
        for i in 0..4 {
            assert!((x[i] - want[i]).abs() < 1e-10);
        }
        // Kernel pollution in b is invisible through the projection.
        let polluted = &b_range + &ones;
        let (y, st) = cg_solve(&a, polluted.as_slice(), None, &setup);
        assert!(st.converged);
        for i in 0..4 {
            assert!((y[i] - want[i]).abs() < 1e-10);
        }
        let mut py = y.clone();
        project(&mut py);
        assert!(norm(&sub(&py, &y)) <= 1e-12 * norm(&y));
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let setup = CgSetup::new(CgOptions {
            tol: 1e-12,
            max_iter: 3,
            abs_tol: 0.0,
        });
        let (_, st) = cg_solve(&a, &b, None, &setup);
        assert!(!st.converged);
        assert_eq!(st.iterations, 3);
        assert!(st.relative_residual > 0.0);
    }

    #[test]
    fn diagonal_preconditioner() {
        let a = Diagonal(vec![1.0, 10.0, 100.0]);
        let inv = [1.0, 0.1, 0.01];
        let (x, st) = cg_solve(&a, &[1.0, 1.0, 1.0], None, &CgSetup::default().precond(&inv));
        assert!(st.converged && st.iterations == 1);
        assert!((x[2] - 0.01).abs() < 1e-15);
    }
}
