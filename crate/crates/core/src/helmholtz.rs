//! Discrete Helmholtz–Weyl decomposition in the ε-weighted edge product.
//!
//! Every edge cochain splits M1ε-orthogonally into a gradient of a
//! boundary-zero node potential, a Dirichlet field (curl-free, weakly
//! ε-solenoidal, tangential-zero) and a remainder. The projection π removes
//! the first two parts; both lie in the kernel of the curl and vanish on the
//! boundary, so π keeps curl and tangential trace.

use nalgebra::DMatrix;

use crate::complex::{Cochain, Degree, DofLayout, GridComplex};
use crate::linalg::dense::{complement_basis, dense_solve, DENSE_LIMIT};
use crate::linalg::eig::Pencil;
use crate::linalg::{
    axpy, cg_solve, smallest_eigpair, wdot, wnorm, CgOptions, CgSetup, CsrMatrix, Diagonal, EigOptions,
    SolveStats,
};
use crate::problem::HodgeMasses;
use crate::{Error, Result};

/// Relative tolerance of the node Poisson solves inside projections.
pub const POISSON_TOL: f64 = 1e-12;

/// Gradient removal: the node Poisson problem `G0ᵀ M1ε G0 φ = G0ᵀ M1ε w`
/// on interior nodes, where `G0` is the gradient restricted to potentials
/// that vanish on boundary nodes.
#[derive(Clone, Debug)]
pub struct GaugeProjector {
    boundary: Vec<bool>,
    /// Node index of each interior unknown.
    pub interior_nodes: Vec<usize>,
    /// edge × interior node
    g0: CsrMatrix<f64>,
    weight: Vec<f64>,
    node_mass: Vec<f64>,
    lap: CsrMatrix<f64>,
    lap_inv_diag: Vec<f64>,
    pub tol: f64,
}

impl GaugeProjector {
    pub fn new(cx: &GridComplex, masses: &HodgeMasses) -> Self {
        let nodes = &cx.layout.nodes;
        let mut slot = vec![usize::MAX; nodes.len()];
        let mut interior_nodes = Vec::new();
        for n in 0..nodes.len() {
            if !nodes.boundary[n] {
                slot[n] = interior_nodes.len();
                interior_nodes.push(n);
            }
        }
        let trip = cx
            .ops
            .grad
            .triplets()
            .filter(|&(_, n, _)| slot[n] != usize::MAX)
            .map(|(e, n, v)| (e, slot[n], v as f64))
            .collect();
        let g0 = CsrMatrix::from_triplets(cx.n_edges(), interior_nodes.len(), trip);
        let lap = g0.weighted_gram(&masses.m1_eps);
        let lap_inv_diag = lap.diagonal().iter().map(|d| 1.0 / d).collect();
        GaugeProjector {
            boundary: cx.layout.edges.boundary.clone(),
            node_mass: interior_nodes.iter().map(|&n| masses.m0[n]).collect(),
            interior_nodes,
            g0,
            weight: masses.m1_eps.clone(),
            lap,
            lap_inv_diag,
            tol: POISSON_TOL,
        }
    }

    pub fn n_interior_nodes(&self) -> usize {
        self.interior_nodes.len()
    }

    /// Edge weights of the projection's inner product (M1ε).
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn boundary_edges(&self) -> &[bool] {
        &self.boundary
    }

    /// `G0`, the gradient of boundary-zero potentials.
    pub fn g0(&self) -> &CsrMatrix<f64> {
        &self.g0
    }

    /// Weak ε-divergence `G0ᵀ M1ε w` on interior nodes.
    pub fn weak_div(&self, w: &[f64]) -> Vec<f64> {
        let mw: Vec<f64> = w.iter().zip(&self.weight).map(|(a, b)| a * b).collect();
        self.g0.mul_transpose_vec(&mw)
    }

    /// `‖M0⁻¹ G0ᵀ M1ε w‖_{M0}`.
    pub fn div_norm(&self, w: &[f64]) -> f64 {
        let d = self.weak_div(w);
        d.iter().zip(&self.node_mass).map(|(v, m)| v * v / m).sum::<f64>().sqrt()
    }

    /// `G0 φ` for an interior-node potential.
    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        self.g0.mul_vec(phi)
    }

    /// Solves the node Poisson problem; `abs_tol` bounds the Jacobi-weighted
    /// residual from below.
    pub fn solve_potential(&self, rhs: &[f64], abs_tol: f64) -> (Vec<f64>, SolveStats) {
        let setup = CgSetup::new(CgOptions {
            tol: self.tol,
            abs_tol,
            ..Default::default()
        })
        .precond(&self.lap_inv_diag);
        cg_solve(&self.lap, rhs, None, &setup)
    }

    /// Subtracts the gradient part of `w` in place and returns the
    /// potential with the solve statistics.
    pub fn remove_gradient(&self, w: &mut [f64]) -> (Vec<f64>, SolveStats) {
        let rhs = self.weak_div(w);
        let abs = 0.1 * self.tol * wnorm(&self.weight, w);
        let (phi, stats) = self.solve_potential(&rhs, abs);
        let g = self.gradient(&phi);
        axpy(-1.0, &g, w);
        (phi, stats)
    }

    fn remove_gradient_checked(&self, w: &mut [f64]) -> Result<Vec<f64>> {
        let (phi, stats) = self.remove_gradient(w);
        if !stats.converged {
            return Err(Error::NotConverged {
                what: "node Poisson solve".into(),
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        Ok(phi)
    }

    /// Zeroes boundary edges, then removes the gradient part.
    pub fn project_div_free(&self, w: &mut [f64]) {
        self.zero_boundary(w);
        self.remove_gradient(w);
    }

    pub fn zero_boundary(&self, w: &mut [f64]) {
        for (v, &b) in w.iter_mut().zip(&self.boundary) {
            if b {
                *v = 0.0;
            }
        }
    }
}

/// M1ε-orthonormal basis of the discrete Dirichlet fields.
#[derive(Clone, Debug, Default)]
pub struct DirichletBasis {
    pub fields: Vec<Vec<f64>>,
    /// Eigenvalues of the accepted zero modes.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue that was not accepted, when one was computed.
    pub rejected: Option<f64>,
}

impl DirichletBasis {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    /// `⟨w, H_n⟩_{M1ε}` for every basis field.
    pub fn coefficients(&self, w: &[f64], m1_eps: &[f64]) -> Vec<f64> {
        self.fields.iter().map(|h| wdot(m1_eps, w, h)).collect()
    }

    /// Removes the harmonic part of `w` and returns its coefficients.
    pub fn remove(&self, w: &mut [f64], m1_eps: &[f64]) -> Vec<f64> {
        let c = self.coefficients(w, m1_eps);
        for (h, &cn) in self.fields.iter().zip(&c) {
            axpy(-cn, h, w);
        }
        c
    }
}

/// Zero-mode candidates must lie below this fraction of the spectral scale.
const CANDIDATE: f64 = 1e-6;
/// Accepted zero modes must lie below this fraction of the first rejected
/// eigenvalue.
const ACCEPT: f64 = 1e-8;
const MAX_MODES: usize = 64;

/// Zero modes of `(Cᵀ M2 C) w = λ M1ε w` on tangential-zero, weakly
/// ε-solenoidal edge cochains.
pub fn dirichlet_basis(
    cx: &GridComplex,
    masses: &HodgeMasses,
    gauge: &GaugeProjector,
    opts: &EigOptions,
) -> Result<DirichletBasis> {
    if cx.layout.edges.interior_count() == 0 {
        return Ok(DirichletBasis::empty());
    }
    let a = cx.ops.curl.weighted_gram(&masses.m2);
    let m = Diagonal(masses.m1_eps.clone());
    let precond = masses.m1_eps_inv();
    let scale = a
        .diagonal()
        .iter()
        .zip(&masses.m1_eps)
        .map(|(x, y)| x / y)
        .fold(0.0, f64::max);
    let full = |v: &mut [f64]| gauge.project_div_free(v);
    let cheap = |v: &mut [f64]| gauge.zero_boundary(v);
    let pencil = Pencil {
        a: &a,
        m: &m,
        precond: Some(&precond),
        project: Some(&full),
        inner_project: Some(&cheap),
    };

    let mut basis = DirichletBasis::empty();
    let space = cx.layout.edges.interior_count().saturating_sub(gauge.n_interior_nodes());
    while basis.dim() < MAX_MODES.min(space) {
        let pair = match smallest_eigpair(&pencil, &basis.fields, opts) {
            Ok(p) => p,
            Err(Error::InvalidInput(_)) => break,
            Err(e) => return Err(e),
        };
        if pair.value < CANDIDATE * scale {
            basis.fields.push(pair.vector);
            basis.eigenvalues.push(pair.value.max(0.0));
        } else {
            basis.rejected = Some(pair.value);
            break;
        }
    }
    if let (Some(&acc), Some(rej)) = (
        basis.eigenvalues.iter().max_by(|a, b| a.total_cmp(b)),
        basis.rejected,
    ) {
        if !(acc < ACCEPT * rej) {
            return Err(Error::TopologyUndecided {
                accepted: acc,
                rejected: rej,
            });
        }
    }
    // One more orthonormalization pass against accumulated rounding.
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(basis.dim());
    for mut h in basis.fields.drain(..) {
        for g in &fields {
            let c = wdot(&masses.m1_eps, &h, g);
            axpy(-c, g, &mut h);
        }
        let n = wnorm(&masses.m1_eps, &h);
        h.iter_mut().for_each(|v| *v /= n);
        fields.push(h);
    }
    basis.fields = fields;
    Ok(basis)
}

/// Gradient potential and harmonic coefficients removed by π.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovedParts {
    pub potential: Vec<f64>,
    pub harmonic: Vec<f64>,
}

/// Applies π in place.
pub fn pi_in_place(w: &mut [f64], gauge: &GaugeProjector, basis: &DirichletBasis) -> Result<RemovedParts> {
    let potential = gauge.remove_gradient_checked(w)?;
    let harmonic = basis.remove(w, gauge.weight());
    Ok(RemovedParts { potential, harmonic })
}

/// `πΨ = Ψ − G0 φ − Σ ⟨Ψ, H_n⟩_{M1ε} H_n`.
pub fn project_pi(psi: &Cochain, layout: &DofLayout, gauge: &GaugeProjector, basis: &DirichletBasis) -> Result<Cochain> {
    psi.check(Degree::Edge, layout)?;
    let mut out = psi.clone();
    pi_in_place(&mut out.values, gauge, basis)?;
    Ok(out)
}

/// The three M1ε-orthogonal parts of an edge cochain.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub gradient: Cochain,
    pub harmonic: Cochain,
    /// `πΨ`; for a field with boundary values it also carries the trace.
    pub curl_range: Cochain,
    /// True when the input vanished on boundary edges.
    pub conforming: bool,
}

pub fn helmholtz_decompose(
    psi: &Cochain,
    layout: &DofLayout,
    gauge: &GaugeProjector,
    basis: &DirichletBasis,
) -> Result<Decomposition> {
    psi.check(Degree::Edge, layout)?;
    let mut rest = psi.values.clone();
    let parts = pi_in_place(&mut rest, gauge, basis)?;
    let gradient = gauge.gradient(&parts.potential);
    let mut harmonic = vec![0.0; rest.len()];
    for (h, &c) in basis.fields.iter().zip(&parts.harmonic) {
        axpy(c, h, &mut harmonic);
    }
    Ok(Decomposition {
        gradient: Cochain::new(Degree::Edge, gradient),
        harmonic: Cochain::new(Degree::Edge, harmonic),
        curl_range: Cochain::new(Degree::Edge, rest),
        conforming: crate::complex::is_tangential_zero(&psi.values, layout),
    })
}

/// Load projection `F ↦ F_c` onto loads that see only the curl range.
///
/// With `Lε ψ = G0ᵀ M1 F` and harmonic coefficients from the Gram system
/// `⟨H_m, H_n⟩_{M1ε} c = H_mᵀ M1 F'`, the result
/// `F_c = F − M1⁻¹M1ε (G0 ψ + Σ c_n H_n)` satisfies `G0ᵀ M1 F_c = 0`,
/// `H_nᵀ M1 F_c = 0` and `F_cᵀ M1 W = Fᵀ M1 W` for every tangential-zero,
/// weakly ε-solenoidal `W` orthogonal to the Dirichlet fields.
pub fn project_f_curl(
    f: &Cochain,
    layout: &DofLayout,
    masses: &HodgeMasses,
    gauge: &GaugeProjector,
    basis: &DirichletBasis,
) -> Result<Cochain> {
    f.check(Degree::Edge, layout)?;
    let m1f: Vec<f64> = f.values.iter().zip(&masses.m1).map(|(a, b)| a * b).collect();
    let rhs = gauge.g0().mul_transpose_vec(&m1f);
    let fnorm = wnorm(&masses.m1, &f.values);
    let (psi, stats) = gauge.solve_potential(&rhs, 0.1 * gauge.tol * fnorm);
    if !stats.converged {
        return Err(Error::NotConverged {
            what: "load projection Poisson solve".into(),
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    let ratio: Vec<f64> = masses.m1_eps.iter().zip(&masses.m1).map(|(e, m)| e / m).collect();
    let mut out = f.values.clone();
    let g = gauge.gradient(&psi);
    for i in 0..out.len() {
        out[i] -= ratio[i] * g[i];
    }
    let d = basis.dim();
    if d > 0 {
        let gram = DMatrix::from_fn(d, d, |i, j| wdot(&masses.m1_eps, &basis.fields[i], &basis.fields[j]));
        let b = nalgebra::DVector::from_iterator(d, basis.fields.iter().map(|h| wdot(&masses.m1, h, &out)));
        let c = dense_solve(&gram, &b).map_err(|e| Error::Singular(format!("Dirichlet Gram system: {e}")))?;
        for (h, &cn) in basis.fields.iter().zip(c.iter()) {
            for i in 0..out.len() {
                out[i] -= cn * ratio[i] * h[i];
            }
        }
    }
    Ok(Cochain::new(Degree::Edge, out))
}

/// Dense orthonormal basis (columns, full edge coordinates) of the
/// constrained space: tangential-zero, weakly ε-solenoidal and
/// M1ε-orthogonal to the Dirichlet fields.
pub fn constrained_basis_dense(cx: &GridComplex, gauge: &GaugeProjector, basis: &DirichletBasis) -> Result<DMatrix<f64>> {
    check_dense_size(cx)?;
    let interior: Vec<usize> = (0..cx.n_edges()).filter(|&e| !cx.layout.edges.boundary[e]).collect();
    let nk = gauge.n_interior_nodes() + basis.dim();
    let mut b = DMatrix::zeros(interior.len(), nk);
    let w = gauge.weight();
    for (e, &edge) in interior.iter().enumerate() {
        let (cols, vals) = gauge.g0().row(edge);
        for (&c, &v) in cols.iter().zip(vals) {
            b[(e, c)] = w[edge] * v;
        }
        for (n, h) in basis.fields.iter().enumerate() {
            b[(e, gauge.n_interior_nodes() + n)] = w[edge] * h[edge];
        }
    }
    let z = complement_basis(&b);
    let mut full = DMatrix::zeros(cx.n_edges(), z.ncols());
    for (e, &edge) in interior.iter().enumerate() {
        full.row_mut(edge).copy_from(&z.row(e));
    }
    Ok(full)
}

/// Dense count of Dirichlet fields: `dim ker(C on tangential-zero edges)`
/// minus the number of interior nodes (the gradients in that kernel).
pub fn dirichlet_dimension_dense(cx: &GridComplex) -> Result<usize> {
    check_dense_size(cx)?;
    let interior: Vec<usize> = (0..cx.n_edges()).filter(|&e| !cx.layout.edges.boundary[e]).collect();
    let mut slot = vec![usize::MAX; cx.n_edges()];
    for (i, &e) in interior.iter().enumerate() {
        slot[e] = i;
    }
    let mut c = DMatrix::zeros(cx.n_faces(), interior.len());
    for (f, e, v) in cx.ops.curl.triplets() {
        if slot[e] != usize::MAX {
            c[(f, slot[e])] = v as f64;
        }
    }
    if interior.is_empty() {
        return Ok(0);
    }
    let sv = c.svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    let kernel = interior.len() - rank;
    let interior_nodes = cx.layout.nodes.interior_count();
    Ok(kernel - interior_nodes)
}

/// Number of connected components of the boundary surface.
pub fn boundary_components(cx: &GridComplex) -> usize {
    // Boundary faces are linked through shared boundary edges.
    let faces = &cx.layout.faces;
    let bf: Vec<usize> = (0..faces.len()).filter(|&f| faces.boundary[f]).collect();
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut by_edge: Vec<Option<usize>> = vec![None; cx.n_edges()];
    for &f in &bf {
        let (edges, _) = cx.ops.curl.row(f);
        for &e in edges {
            match by_edge[e] {
                Some(g) => {
                    let (ra, rb) = (find(&mut parent, f), find(&mut parent, g));
                    parent[ra] = rb;
                }
                None => by_edge[e] = Some(f),
            }
        }
    }
    let mut roots: Vec<usize> = bf.iter().map(|&f| find(&mut parent, f)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

fn check_dense_size(cx: &GridComplex) -> Result<()> {
    if cx.n_edges() > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            what: "dense oracle edge space".into(),
            size: cx.n_edges(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}
