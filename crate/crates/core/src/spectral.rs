//! Discrete Poincaré–Friedrichs constant of the curl.

use serde::Serialize;

use crate::complex::{Cochain, Degree, GridComplex};
use crate::helmholtz::{constrained_basis_dense, DirichletBasis, GaugeProjector};
use crate::linalg::dense::dense_eig;
use crate::linalg::eig::Pencil;
use crate::linalg::{smallest_eigpair, Diagonal, EigOptions, SolveStats};
use crate::problem::HodgeMasses;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct PoincareResult {
    pub c_p: f64,
    pub lambda_min: f64,
    #[serde(skip)]
    pub eigenvector: Cochain,
    pub stats: SolveStats,
}

/// `c_p = λ_min^{-1/2}` for `(Cᵀ M2 C) w = λ M1 w` on tangential-zero
/// edge cochains with `G0ᵀ M1ε w = 0` that are M1ε-orthogonal to the
/// Dirichlet fields. Then `‖W‖_{M1} ≤ c_p ‖C W‖_{M2}` on that space.
pub fn poincare_constant(
    cx: &GridComplex,
    masses: &HodgeMasses,
    gauge: &GaugeProjector,
    basis: &DirichletBasis,
    opts: &EigOptions,
) -> Result<PoincareResult> {
    if cx.layout.edges.interior_count() == 0 {
        return Err(Error::InvalidInput(
            "grid has no interior edges, the constrained space is empty".into(),
        ));
    }
    let a = cx.ops.curl.weighted_gram(&masses.m2);
    let m = Diagonal(masses.m1.clone());
    let precond = masses.m1_eps_inv();
    let full = |v: &mut [f64]| {
        gauge.project_div_free(v);
        basis.remove(v, gauge.weight());
    };
    let cheap = |v: &mut [f64]| gauge.zero_boundary(v);
    // With ε = 1 the preconditioned residual of the inner solves is already
    // weakly solenoidal and harmonic-free, so zeroing the trace suffices.
    let unit_eps = masses.m1 == masses.m1_eps;
    let pencil = Pencil {
        a: &a,
        m: &m,
        precond: Some(&precond),
        project: Some(&full),
        inner_project: if unit_eps { Some(&cheap) } else { None },
    };
    let pair = smallest_eigpair(&pencil, &[], opts)?;
    if !pair.stats.converged {
        return Err(Error::NotConverged {
            what: "Poincaré eigenvalue".into(),
            iterations: pair.stats.iterations,
            residual: pair.stats.relative_residual,
        });
    }
    if !(pair.value > 0.0) {
        return Err(Error::Singular(format!(
            "constrained curl pencil has eigenvalue {:e}; a Dirichlet field is missing from the basis",
            pair.value
        )));
    }
    Ok(PoincareResult {
        c_p: pair.value.powf(-0.5),
        lambda_min: pair.value,
        eigenvector: Cochain::new(Degree::Edge, pair.vector),
        stats: pair.stats,
    })
}

/// Dense reference for `λ_min` of the same constrained pencil.
pub fn poincare_lambda_dense(
    cx: &GridComplex,
    masses: &HodgeMasses,
    gauge: &GaugeProjector,
    basis: &DirichletBasis,
) -> Result<f64> {
    let z = constrained_basis_dense(cx, gauge, basis)?;
    if z.ncols() == 0 {
        return Err(Error::InvalidInput("constrained space is empty".into()));
    }
    let a = cx.ops.curl.weighted_gram(&masses.m2).to_dense();
    let m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&masses.m1));
    let za = z.transpose() * a * &z;
    let zm = z.transpose() * m * &z;
    let (vals, _) = dense_eig(&za, &zm)?;
    Ok(vals[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::GridSpec;
    use crate::helmholtz::dirichlet_basis;
    use crate::linalg::{dot, wnorm};
    use crate::problem::{build_masses, MaterialField};
    use crate::testutil::{cavity_spec, random_materials, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct S {
        cx: GridComplex,
        masses: HodgeMasses,
        gauge: GaugeProjector,
        basis: DirichletBasis,
    }

    fn build(spec: GridSpec, mat: Option<MaterialField>) -> S {
        let cx = GridComplex::new(spec).unwrap();
        let mat = mat.unwrap_or_else(|| MaterialField::identity(cx.layout.cells.len()));
        let masses = build_masses(&cx, &mat).unwrap();
        let gauge = GaugeProjector::new(&cx, &masses);
        let basis = dirichlet_basis(&cx, &masses, &gauge, &EigOptions::default()).unwrap();
        S { cx, masses, gauge, basis }
    }

    fn cp(s: &S) -> PoincareResult {
        poincare_constant(&s.cx, &s.masses, &s.gauge, &s.basis, &EigOptions::default()).unwrap()
    }

    #[test]
    fn matches_dense_oracle() {
        for spec in [GridSpec::unit_cube(2), GridSpec::unit_cube(3), cavity_spec()] {
            let s = build(spec, None);
            let r = cp(&s);
            let dense = poincare_lambda_dense(&s.cx, &s.masses, &s.gauge, &s.basis).unwrap();
            assert!((r.lambda_min - dense).abs() <= 1e-8 * dense, "{} vs {}", r.lambda_min, dense);
        }
    }

    #[test]
    fn matches_dense_oracle_with_materials() {
        let cx = GridComplex::new(cavity_spec()).unwrap();
        let s = build(cavity_spec(), Some(random_materials(cx.layout.cells.len(), 21)));
        let r = cp(&s);
        let dense = poincare_lambda_dense(&s.cx, &s.masses, &s.gauge, &s.basis).unwrap();
        assert!((r.lambda_min - dense).abs() <= 1e-8 * dense);
        // The eigenvector honours every constraint.
        let v = &r.eigenvector.values;
        assert!(crate::complex::is_tangential_zero(v, &s.cx.layout));
        assert!(s.gauge.div_norm(v) <= 1e-8 * wnorm(&s.masses.m1_eps, v));
        assert!(s.basis.coefficients(v, &s.masses.m1_eps)[0].abs() <= 1e-8);
    }

    #[test]
    fn rayleigh_quotient_and_inequality() {
        let s = build(GridSpec::unit_cube(4), None);
        let r = cp(&s);
        let v = &r.eigenvector.values;
        let cv = s.cx.ops.curl.mul_vec(v);
        let rq = crate::linalg::wdot(&s.masses.m2, &cv, &cv) / crate::linalg::wdot(&s.masses.m1, v, v);
        assert!((rq - r.lambda_min).abs() <= 1e-8 * r.lambda_min);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut w = random_vec(&mut rng, s.cx.n_edges());
            s.gauge.project_div_free(&mut w);
            let lhs = wnorm(&s.masses.m1, &w);
            let cw = s.cx.ops.curl.mul_vec(&w);
            assert!(lhs <= r.c_p * wnorm(&s.masses.m2, &cw) * (1.0 + 1e-9));
        }
        assert!(dot(v, v) > 0.0);
    }

    #[test]
    fn doubling_the_domain_doubles_c_p() {
        let a = cp(&build(GridSpec::cube(4, 1.0), None));
        let b = cp(&build(GridSpec::cube(4, 2.0), None));
        assert!((b.c_p / a.c_p - 2.0).abs() <= 1e-6 * 2.0);
    }

    #[test]
    fn converges_towards_continuum_value() {
        let target = 1.0 / (2f64.sqrt() * std::f64::consts::PI);
        let c4 = cp(&build(GridSpec::unit_cube(4), None)).c_p;
        let c8 = cp(&build(GridSpec::unit_cube(8), None)).c_p;
        assert!((c8 - target).abs() < (c4 - target).abs());
        assert!((c8 - target).abs() < 0.05 * target);
    }
}
