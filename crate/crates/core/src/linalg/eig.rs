//! Smallest eigenpair of a symmetric pencil by shifted inverse iteration.
//!
//! Each step solves `(A + σM) x = M v` with [`cg_solve`] on the projected
//! subspace for every vector of a small block, followed by Rayleigh-Ritz. Already known eigenvectors are deflated by raising them in the
//! spectrum (`A + s·(MD)(MD)ᵀ`), which keeps the inner operator symmetric for
//! any projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nalgebra::DMatrix;

use super::cg::{cg_solve, CgOptions, CgSetup, SolveStats};
use super::dense::dense_eig;
use super::{axpy, dot, scale, LinearOperator};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    /// Relative eigen-residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Regularizing shift σ; defaults to `1e-8 · max diag(A)`.
    pub shift: Option<f64>,
    pub inner: CgOptions,
    pub seed: u64,
    /// Block size of the subspace iteration.
    pub block: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-8,
            max_iter: 500,
            shift: None,
            inner: CgOptions::with_tol(1e-10),
            seed: 0x5eed,
            block: 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigPair {
    pub value: f64,
    /// M-normalized eigenvector.
    pub vector: Vec<f64>,
    pub stats: SolveStats,
    pub inner_iterations: usize,
}

/// Everything defining the constrained pencil `A v = λ M v`, `v ∈ range(P)`.
pub struct Pencil<'a> {
    pub a: &'a dyn LinearOperator,
    pub m: &'a dyn LinearOperator,
    /// Inverse diagonal of the metric in which `project` is orthogonal.
    pub precond: Option<&'a [f64]>,
    pub project: Option<&'a dyn Fn(&mut [f64])>,
    /// Cheaper projection for the inner solves, valid when the
    /// preconditioned residual already stays in the subspace. Defaults to
    /// `project`.
    pub inner_project: Option<&'a dyn Fn(&mut [f64])>,
}

struct Shifted<'a> {
    a: &'a dyn LinearOperator,
    m: &'a dyn LinearOperator,
    sigma: f64,
    deflate_shift: f64,
    md: &'a [Vec<f64>],
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.a.apply(x, y);
        let mx = self.m.mul(x);
        axpy(self.sigma, &mx, y);
        for md in self.md {
            axpy(self.deflate_shift * dot(md, x), md, y);
        }
    }
    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.a.diagonal();
        axpy(self.sigma, &self.m.diagonal(), &mut d);
        d
    }
}

/// M-orthonormalizes the columns of `block` against `deflate` and each
/// other, dropping columns that are numerically dependent.
fn orthonormalize_block(
    block: Vec<Vec<f64>>,
    m: &dyn LinearOperator,
    deflate: &[Vec<f64>],
    md: &[Vec<f64>],
    project: &dyn Fn(&mut [f64]),
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut v in block {
        project(&mut v);
        let before = dot(&m.mul(&v), &v).max(0.0).sqrt();
        if before == 0.0 {
            continue;
        }
        // Two passes of Gram-Schmidt keep the block orthogonal to rounding.
        for _ in 0..2 {
            for (d, mdv) in deflate.iter().zip(md) {
                axpy(-dot(mdv, &v), d, &mut v);
            }
            for u in &out {
                let c = dot(&m.mul(u), &v);
                axpy(-c, u, &mut v);
            }
        }
        let nrm = dot(&m.mul(&v), &v).max(0.0).sqrt();
        if nrm > 1e-10 * before {
            scale(1.0 / nrm, &mut v);
            out.push(v);
        }
    }
    out
}

/// Smallest eigenpair of the pencil, M-orthogonal to every vector in
/// `deflate` (which must be M-orthonormal).
///
/// Block inverse iteration with Rayleigh-Ritz: the leading Ritz pair
/// converges at the rate `λ_1 / λ_{p+1}` for block size `p`, so clustered
/// eigenvalues below `λ_{p+1}` do not slow it down.
///
/// Non-convergence is reported through `stats.converged`; a clearly negative
/// eigenvalue is an error because the pencil is then not semidefinite.
pub fn smallest_eigpair(pencil: &Pencil, deflate: &[Vec<f64>], opts: &EigOptions) -> Result<EigPair> {
    let n = pencil.a.dim();
    let (a, m) = (pencil.a, pencil.m);
    let a_diag = a.diagonal();
    let m_diag = m.diagonal();
    let max_a = a_diag.iter().cloned().fold(0.0, f64::max);
    // Spectral scale: largest diagonal ratio, an estimate of λ_max.
    let spectral_scale = a_diag
        .iter()
        .zip(&m_diag)
        .filter(|(_, &md)| md > 0.0)
        .map(|(&ad, &md)| ad / md)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let sigma = opts.shift.unwrap_or(1e-8 * max_a.max(f64::MIN_POSITIVE));

    let md: Vec<Vec<f64>> = deflate.iter().map(|d| m.mul(d)).collect();
    let project = |v: &mut [f64]| {
        if let Some(p) = pencil.project {
            p(v)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Vec<f64>> = (0..opts.block.max(1))
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut block = orthonormalize_block(start, m, deflate, &md, &project);
    if block.is_empty() {
        return Err(Error::InvalidInput("eigen search space is empty".into()));
    }
    let (mut thetas, ritz) = rayleigh_ritz(a, m, &block)?;
    block = ritz;

    // Deflated directions are lifted above the largest starting Ritz value,
    // which bounds the wanted eigenvalue from above.
    let shifted = Shifted {
        a,
        m,
        sigma,
        deflate_shift: 2.0 * thetas.iter().fold(0.0f64, |x, t| x.max(t.abs())) + spectral_scale,
        md: &md,
    };
    let mut setup = CgSetup::new(opts.inner);
    setup.precond = pencil.precond;
    setup.project = pencil.inner_project.or(pencil.project);

    let residual = |v: &[f64], lambda: f64| {
        let mut r = a.mul(v);
        axpy(-lambda, &m.mul(v), &mut r);
        let mut g = match pencil.precond {
            Some(w) => r.iter().zip(w).map(|(x, y)| x * y).collect(),
            None => r.clone(),
        };
        project(&mut g);
        let energy: f64 = match pencil.precond {
            Some(w) => g.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(gi, wi)| gi * gi / wi).sum(),
            None => dot(&g, &g),
        };
        energy.sqrt()
    };
    let floor = 1e-12 * spectral_scale;

    let mut inner_iterations = 0;
    let mut stats = SolveStats::default();
    for it in 1..=opts.max_iter {
        let mut next = Vec::with_capacity(block.len());
        for (v, &theta) in block.iter().zip(&thetas) {
            let b = m.mul(v);
            let mut x0 = v.clone();
            scale(1.0 / (theta.max(0.0) + sigma), &mut x0);
            let (x, inner) = cg_solve(&shifted, &b, Some(&x0), &setup);
            inner_iterations += inner.iterations;
            next.push(x);
        }
        let next = orthonormalize_block(next, m, deflate, &md, &project);
        if next.is_empty() {
            return Err(Error::Singular("inverse iteration collapsed to zero".into()));
        }
        let (t, ritz) = rayleigh_ritz(a, m, &next)?;
        thetas = t;
        block = ritz;
        let lambda = thetas[0];
        let res = residual(&block[0], lambda);
        stats = SolveStats {
            iterations: it,
            relative_residual: if lambda.abs() > 0.0 { res / lambda.abs() } else { res },
            converged: res <= opts.tol * lambda.abs() || res <= floor,
        };
        if stats.converged {
            break;
        }
    }
    let lambda = thetas[0];
    if lambda < -opts.tol.max(1e-12) * spectral_scale {
        return Err(Error::NotPositiveDefinite(format!(
            "pencil has eigenvalue {lambda:e} on the search space"
        )));
    }
    Ok(EigPair {
        value: lambda,
        vector: block.swap_remove(0),
        stats,
        inner_iterations,
    })
}

/// Ritz values (ascending) and M-orthonormal Ritz vectors of the pencil on
/// the span of an M-orthonormal block.
fn rayleigh_ritz(a: &dyn LinearOperator, m: &dyn LinearOperator, block: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = block.len();
    let av: Vec<Vec<f64>> = block.iter().map(|v| a.mul(v)).collect();
    let mv: Vec<Vec<f64>> = block.iter().map(|v| m.mul(v)).collect();
    let ar = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&block[i], &av[j]) + dot(&block[j], &av[i])));
    let mr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&block[i], &mv[j]) + dot(&block[j], &mv[i])));
    let (vals, vecs) = dense_eig(&ar, &mr)?;
    let n = block[0].len();
    let ritz = (0..p)
        .map(|k| {
            let mut x = vec![0.0; n];
            for (j, v) in block.iter().enumerate() {
                axpy(vecs[(j, k)], v, &mut x);
            }
            x
        })
        .collect();
    Ok((vals.iter().cloned().collect(), ritz))
}
