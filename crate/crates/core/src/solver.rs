//! Primal solve of the discrete curl-curl problem and its consistency check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{is_tangential_zero, Cochain, Degree, GridComplex};
use crate::helmholtz::{
    constrained_basis_dense, dirichlet_basis, pi_in_place, project_f_curl, DirichletBasis, GaugeProjector,
};
use crate::linalg::dense::dense_solve;
use crate::linalg::{
    axpy, cg_solve, inv_wnorm, max_abs, wdot, wnorm, CgOptions, CgSetup, CsrMatrix, EigOptions, SolveStats,
};
use crate::problem::{build_masses, c_mu, HodgeMasses, ProblemDef};
use crate::{Error, Result};

/// A problem together with every derived operator the solvers share.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub problem: ProblemDef,
    pub cx: GridComplex,
    pub masses: HodgeMasses,
    pub gauge: GaugeProjector,
    pub basis: DirichletBasis,
    /// Load after projection onto the curl range.
    pub f_c: Cochain,
    pub c_mu: f64,
    /// `Cᵀ M2μinv C` on all edges.
    stiffness: CsrMatrix<f64>,
    /// Same, restricted to tangential-zero rows and columns.
    stiffness0: CsrMatrix<f64>,
}

impl Discretization {
    pub fn new(problem: ProblemDef) -> Result<Self> {
        Self::with_options(problem, &EigOptions::default())
    }

    pub fn with_options(problem: ProblemDef, eig: &EigOptions) -> Result<Self> {
        let cx = GridComplex::new(problem.spec.clone())?;
        problem.check(&cx)?;
        let masses = build_masses(&cx, &problem.materials)?;
        let gauge = GaugeProjector::new(&cx, &masses);
        let basis = dirichlet_basis(&cx, &masses, &gauge, eig)?;
        let f_c = project_f_curl(&problem.f_edge, &cx.layout, &masses, &gauge, &basis)?;
        let stiffness = cx.ops.curl.weighted_gram(&masses.m2_mu_inv);
        let bnd = &cx.layout.edges.boundary;
        let trip = stiffness
            .triplets()
            .filter(|&(i, j, _)| !bnd[i] && !bnd[j])
            .collect();
        let stiffness0 = CsrMatrix::from_triplets(cx.n_edges(), cx.n_edges(), trip);
        Ok(Discretization {
            c_mu: c_mu(&problem.materials),
            problem,
            cx,
            masses,
            gauge,
            basis,
            f_c,
            stiffness,
            stiffness0,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.cx.n_edges()
    }

    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn stiffness0(&self) -> &CsrMatrix<f64> {
        &self.stiffness0
    }

    pub fn zero_boundary(&self, w: &mut [f64]) {
        self.gauge.zero_boundary(w)
    }

    pub fn curl(&self, w: &[f64]) -> Vec<f64> {
        self.cx.ops.curl.mul_vec(w)
    }

    /// `‖C w‖_{M2μinv}`.
    pub fn curl_norm(&self, w: &[f64]) -> f64 {
        wnorm(&self.masses.m2_mu_inv, &self.curl(w))
    }

    /// `M1 F_c` on tangential-zero edges.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.f_c.values.iter().zip(&self.masses.m1).map(|(f, m)| f * m).collect();
        self.zero_boundary(&mut b);
        b
    }

    /// π followed by zeroing, used as the CG projection on tangential-zero
    /// edges.
    pub fn project_interior(&self, w: &mut [f64]) {
        self.gauge.project_div_free(w);
        self.basis.remove(w, self.gauge.weight());
    }

    /// Projected CG for `A0 x = b` on the constrained space.
    pub(crate) fn solve_constrained(&self, b: &[f64], x0: Option<&[f64]>, opts: CgOptions) -> (Vec<f64>, SolveStats) {
        let precond = self.masses.m1_eps_inv();
        let project = |v: &mut [f64]| self.project_interior(v);
        let setup = CgSetup::new(opts).precond(&precond).project(&project);
        cg_solve(&self.stiffness0, b, x0, &setup)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of a random initial guess; `None` starts from zero.
    pub random_start: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 20_000,
            random_start: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Default::default()
        }
    }
}

/// M1ε-norms of what the gauge projection removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GaugeReport {
    pub gradient_removed: f64,
    pub harmonic_removed: f64,
}

#[derive(Clone, Debug)]
pub struct PrimalSolution {
    pub e_h: Cochain,
    /// Face representation of `μ⁻¹ curl E_h`.
    pub h_h: Cochain,
    pub stats: SolveStats,
    pub gauge: GaugeReport,
}

/// Relative size of load components that the curl range cannot see.
pub fn load_incompatibility(d: &Discretization) -> f64 {
    let m1fc = d.load_vector();
    let div = d.gauge.g0().mul_transpose_vec(&m1fc);
    let mut worst = max_abs(&div);
    for h in &d.basis.fields {
        worst = worst.max(wdot(&d.masses.m1, h, &d.f_c.values).abs());
    }
    let scale = wnorm(&d.masses.m1, &d.problem.f_edge.values);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Solves `A E° = M1 F_c − A Ǧ` on the constrained space and returns
/// `E_h = E° + πǦ`, which carries the trace of `Ǧ`.
pub fn solve_primal(d: &Discretization, opts: &SolveOptions) -> Result<PrimalSolution> {
    let incompat = load_incompatibility(d);
    if incompat > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "projected load is incompatible (relative defect {incompat:e})"
        )));
    }
    let mut report = GaugeReport::default();
    let mut carrier = d.problem.g_check.values.clone();
    let removed = pi_in_place(&mut carrier, &d.gauge, &d.basis)?;
    let m = d.gauge.weight();
    report.gradient_removed += wnorm(m, &d.gauge.gradient(&removed.potential));
    report.harmonic_removed += removed.harmonic.iter().map(|c| c * c).sum::<f64>().sqrt();

    let mut b = d.load_vector();
    let ag = d.stiffness().mul_vec(&carrier);
    for (bi, (ai, &bd)) in b.iter_mut().zip(ag.iter().zip(&d.cx.layout.edges.boundary)) {
        if !bd {
            *bi -= ai;
        }
    }

    let x0 = opts.random_start.map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..d.n_edges())
            .map(|e| rng.gen_range(-1.0..1.0) * d.cx.edge_length(e))
            .collect();
        d.project_interior(&mut x);
        x
    });
    let cg = CgOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        abs_tol: 0.0,
    };
    let (mut e0, stats) = d.solve_constrained(&b, x0.as_deref(), cg);
    if !stats.converged {
        return Err(Error::NotConverged {
            what: "primal CG".into(),
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    d.zero_boundary(&mut e0);
    let removed = pi_in_place(&mut e0, &d.gauge, &d.basis)?;
    report.gradient_removed += wnorm(m, &d.gauge.gradient(&removed.potential));
    report.harmonic_removed += removed.harmonic.iter().map(|c| c * c).sum::<f64>().sqrt();

    let mut e_h = e0;
    axpy(1.0, &carrier, &mut e_h);
    let h_h = magnetic_field(d, &e_h);
    Ok(PrimalSolution {
        e_h: Cochain::new(Degree::Edge, e_h),
        h_h,
        stats,
        gauge: report,
    })
}

/// `M2μinv C E`, the face representation of `μ⁻¹ curl E`.
pub fn magnetic_field(d: &Discretization, e: &[f64]) -> Cochain {
    let c = d.curl(e);
    Cochain::new(
        Degree::Face,
        c.iter().zip(&d.masses.m2_mu_inv).map(|(a, b)| a * b).collect(),
    )
}

/// `‖A E − M1 F_c‖_{M1⁻¹}` over tangential-zero edges; zero exactly when
/// `E` solves the discrete equation.
pub fn check_weak_curl(d: &Discretization, e: &Cochain) -> Result<f64> {
    e.check(Degree::Edge, &d.cx.layout)?;
    let mut r = d.stiffness().mul_vec(&e.values);
    axpy(-1.0, &d.load_vector(), &mut r);
    d.zero_boundary(&mut r);
    Ok(inv_wnorm(&d.masses.m1, &r))
}

/// Dense reference solution of the same constrained system.
pub fn solve_primal_dense(d: &Discretization) -> Result<Cochain> {
    let z = constrained_basis_dense(&d.cx, &d.gauge, &d.basis)?;
    let mut carrier = d.problem.g_check.values.clone();
    pi_in_place(&mut carrier, &d.gauge, &d.basis)?;
    let a = d.stiffness().to_dense();
    let mut b = d.load_vector();
    let ag = d.stiffness().mul_vec(&carrier);
    for (e, bi) in b.iter_mut().enumerate() {
        if !d.cx.layout.edges.boundary[e] {
            *bi -= ag[e];
        }
    }
    let k = z.transpose() * &a * &z;
    let rhs = z.transpose() * nalgebra::DVector::from_column_slice(&b);
    let y = dense_solve(&k, &rhs)?;
    let e0 = &z * y;
    let mut e = carrier;
    axpy(1.0, e0.as_slice(), &mut e);
    Ok(Cochain::new(Degree::Edge, e))
}

/// Checks that a test field vanishes on the boundary.
pub(crate) fn require_tangential_zero(d: &Discretization, w: &Cochain) -> Result<()> {
    w.check(Degree::Edge, &d.cx.layout)?;
    if !is_tangential_zero(&w.values, &d.cx.layout) {
        return Err(Error::NotTangentialZero);
    }
    Ok(())
}
