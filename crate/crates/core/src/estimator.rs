//! Functional error majorants and minorants.
//!
//! Write `A = Cᵀ M2μinv C`, `e = E_h − Ẽ` and `‖·‖` for the M2μinv face
//! norm of curls. For any face cochain `q` and any tangential-zero `W`:
//!
//! - `‖C e‖ ≤ k ‖M1F_c − Cᵀq‖_{M1⁻¹} + ‖q − M2μinv CẼ‖_{M2μinv⁻¹}`
//!   (plus `2‖C(Ǧ − Ẽ)‖` when the traces of `Ẽ` and `Ǧ` differ), with
//!   `k = c_p / √c_μ`;
//! - `2 F_cᵀM1W − (C(2Ẽ + W))ᵀ M2μinv CW ≤ ‖C e‖²`.
//!
//! Both follow from `F_cᵀ M1 W = (C E_h)ᵀ M2μinv C W` for tangential-zero
//! `W`, which holds exactly because the projected load annihilates
//! gradients and Dirichlet fields.

use serde::{Deserialize, Serialize};

use crate::complex::{Cochain, Degree};
use crate::helmholtz::constrained_basis_dense;
use crate::linalg::dense::dense_solve;
use crate::linalg::{
    axpy, cg_solve, dot, inv_wnorm, sub, CgOptions, CgSetup, FnOperator, SolveStats,
};
use crate::solver::{require_tangential_zero, Discretization};
use crate::{Error, Result};

/// `ℓ_Ẽ(W) = F_cᵀ M1 W − (C Ẽ)ᵀ M2μinv (C W)` for tangential-zero `W`.
pub fn residual_apply(d: &Discretization, e_tilde: &Cochain, w: &Cochain) -> Result<f64> {
    e_tilde.check(Degree::Edge, &d.cx.layout)?;
    require_tangential_zero(d, w)?;
    let ce = d.curl(&e_tilde.values);
    let cw = d.curl(&w.values);
    let load: f64 = (0..w.len()).map(|i| d.f_c.values[i] * d.masses.m1[i] * w.values[i]).sum();
    Ok(load - crate::linalg::wdot(&d.masses.m2_mu_inv, &ce, &cw))
}

/// Right-hand side `M1F_c − AẼ` on tangential-zero edges; `ℓ_Ẽ(W) = gᵀW`.
fn residual_vector(d: &Discretization, e_tilde: &[f64]) -> Vec<f64> {
    let mut g = d.load_vector();
    let ae = d.stiffness().mul_vec(e_tilde);
    axpy(-1.0, &ae, &mut g);
    d.zero_boundary(&mut g);
    g
}

/// Dual norm of `ℓ_Ẽ` with respect to `‖C W‖_{M2μinv}`, by dense algebra.
pub fn c_ell_oracle(d: &Discretization, e_tilde: &Cochain) -> Result<f64> {
    e_tilde.check(Degree::Edge, &d.cx.layout)?;
    let z = constrained_basis_dense(&d.cx, &d.gauge, &d.basis)?;
    if z.ncols() == 0 {
        return Ok(0.0);
    }
    let a = d.stiffness().to_dense();
    let k = z.transpose() * &a * &z;
    let g = nalgebra::DVector::from_column_slice(&residual_vector(d, &e_tilde.values));
    let zg = z.transpose() * g;
    let y = dense_solve(&k, &zg)?;
    Ok(zg.dot(&y).max(0.0).sqrt())
}

/// The three addends of the composite error measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TripleNorm {
    pub curl: f64,
    pub divergence: f64,
    /// `|Ψᵀ M1ε H_n|` per Dirichlet field.
    pub harmonic: Vec<f64>,
}

impl TripleNorm {
    pub fn harmonic_sum(&self) -> f64 {
        self.harmonic.iter().fold(0.0, |a, h| a + h)
    }

    /// The norm itself: sum of the addends.
    pub fn value(&self) -> f64 {
        self.curl + self.divergence + self.harmonic_sum()
    }

    /// Sum of the squared addends.
    pub fn sum_of_squares(&self) -> f64 {
        self.curl.powi(2) + self.divergence.powi(2) + self.harmonic.iter().map(|h| h * h).sum::<f64>()
    }
}

pub fn triple_norm(d: &Discretization, psi: &Cochain) -> Result<TripleNorm> {
    psi.check(Degree::Edge, &d.cx.layout)?;
    Ok(TripleNorm {
        curl: d.curl_norm(&psi.values),
        divergence: d.gauge.div_norm(&psi.values),
        harmonic: d
            .basis
            .coefficients(&psi.values, &d.masses.m1_eps)
            .into_iter()
            .map(f64::abs)
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorantVariant {
    /// Equilibrium and flux terms only.
    Conforming,
    /// Adds the trace term `2‖C(Ǧ − Ẽ)‖`.
    Full,
    /// Adds the divergence and harmonic terms.
    ExactTrace,
}

impl MajorantVariant {
    pub fn name(self) -> &'static str {
        match self {
            MajorantVariant::Conforming => "conforming",
            MajorantVariant::Full => "full",
            MajorantVariant::ExactTrace => "exact_trace",
        }
    }
}

/// True when `Ẽ` and `Ǧ` agree on every boundary edge.
pub fn traces_match(d: &Discretization, e_tilde: &Cochain) -> bool {
    let g = &d.problem.g_check.values;
    (0..e_tilde.len()).all(|e| !d.cx.layout.edges.boundary[e] || e_tilde.values[e] == g[e])
}

/// FULL when the traces differ, EXACT_TRACE otherwise.
pub fn auto_variant(d: &Discretization, e_tilde: &Cochain) -> MajorantVariant {
    if traces_match(d, e_tilde) {
        MajorantVariant::ExactTrace
    } else {
        MajorantVariant::Full
    }
}

fn check_variant(d: &Discretization, e_tilde: &Cochain, variant: MajorantVariant) -> Result<()> {
    if variant != MajorantVariant::Full && !traces_match(d, e_tilde) {
        return Err(Error::VariantMismatch {
            variant: variant.name().into(),
            reason: "the approximation's tangential trace differs from the boundary data; use full".into(),
        });
    }
    Ok(())
}

/// Majorant value with its breakdown.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MajorantTerms {
    pub equilibrium: f64,
    pub flux: f64,
    pub trace: f64,
    pub divergence: f64,
    pub harmonic: f64,
    pub total: f64,
}

/// Fixed data of a majorant evaluation.
struct MajorantData<'a> {
    d: &'a Discretization,
    /// `c_p / √c_μ`
    k: f64,
    /// `M1 F_c` on tangential-zero edges.
    f0: Vec<f64>,
    /// `M2μinv C Ẽ`
    g: Vec<f64>,
    trace: f64,
    divergence: f64,
    harmonic: f64,
}

impl<'a> MajorantData<'a> {
    fn new(d: &'a Discretization, e_tilde: &Cochain, variant: MajorantVariant, c_p: f64) -> Result<Self> {
        e_tilde.check(Degree::Edge, &d.cx.layout)?;
        check_variant(d, e_tilde, variant)?;
        let ce = d.curl(&e_tilde.values);
        let g = ce.iter().zip(&d.masses.m2_mu_inv).map(|(a, b)| a * b).collect();
        let trace = if variant == MajorantVariant::Full {
            2.0 * d.curl_norm(&sub(&d.problem.g_check.values, &e_tilde.values))
        } else {
            0.0
        };
        let (divergence, harmonic) = if variant == MajorantVariant::ExactTrace {
            let t = triple_norm(d, e_tilde)?;
            (t.divergence, t.harmonic_sum())
        } else {
            (0.0, 0.0)
        };
        Ok(MajorantData {
            d,
            k: c_p / d.c_mu.sqrt(),
            f0: d.load_vector(),
            g,
            trace,
            divergence,
            harmonic,
        })
    }

    /// `zt(M1F_c − Cᵀq)`
    fn equilibrium_residual(&self, q: &[f64]) -> Vec<f64> {
        let mut r = self.d.cx.ops.curl.mul_transpose_vec(q);
        for (ri, fi) in r.iter_mut().zip(&self.f0) {
            *ri = fi - *ri;
        }
        self.d.zero_boundary(&mut r);
        r
    }

    fn terms(&self, q: &[f64]) -> MajorantTerms {
        let eq = self.k * inv_wnorm(&self.d.masses.m1, &self.equilibrium_residual(q));
        let flux = inv_wnorm(&self.d.masses.m2_mu_inv, &sub(q, &self.g));
        MajorantTerms {
            equilibrium: eq,
            flux,
            trace: self.trace,
            divergence: self.divergence,
            harmonic: self.harmonic,
            total: eq + flux + self.trace + self.divergence + self.harmonic,
        }
    }
}

/// Evaluates the majorant for a given flux `q`.
pub fn majorant(
    d: &Discretization,
    e_tilde: &Cochain,
    q: &Cochain,
    variant: MajorantVariant,
    c_p: f64,
) -> Result<MajorantTerms> {
    q.check(Degree::Face, &d.cx.layout)?;
    let data = MajorantData::new(d, e_tilde, variant, c_p)?;
    Ok(data.terms(&q.values))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub max_outer: usize,
    /// Stop once the majorant decreases by less than this relative amount.
    pub tol: f64,
    pub cg: CgOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_outer: 100,
            tol: 1e-10,
            cg: CgOptions {
                tol: 1e-12,
                max_iter: 20_000,
                abs_tol: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizedMajorant {
    pub q: Cochain,
    pub terms: MajorantTerms,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    /// Majorant value after each outer iteration.
    pub history: Vec<f64>,
    pub beta: f64,
}

const BETA_MIN: f64 = 1e-8;
const BETA_MAX: f64 = 1e8;

/// Minimizes the majorant over `q` by alternating between the quadratic
/// Young bound for fixed `β` and the optimal `β = flux / equilibrium`.
pub fn minimize_majorant(
    d: &Discretization,
    e_tilde: &Cochain,
    variant: MajorantVariant,
    c_p: f64,
    opts: &MinimizeOptions,
) -> Result<MinimizedMajorant> {
    let data = MajorantData::new(d, e_tilde, variant, c_p)?;
    let curl = &d.cx.ops.curl;
    let nf = d.cx.n_faces();
    let m1_inv0: Vec<f64> = d
        .masses
        .m1
        .iter()
        .zip(&d.cx.layout.edges.boundary)
        .map(|(m, &b)| if b { 0.0 } else { 1.0 / m })
        .collect();
    // diag(C0 M1⁻¹ C0ᵀ)
    let mut ccd = vec![0.0; nf];
    for (f, e, v) in curl.triplets() {
        ccd[f] += (v * v) as f64 * m1_inv0[e];
    }
    let c_m1f0: Vec<f64> = {
        let t: Vec<f64> = data.f0.iter().zip(&m1_inv0).map(|(a, b)| a * b).collect();
        curl.mul_vec(&t)
    };
    let mu_inv: Vec<f64> = d.masses.m2_mu_inv.iter().map(|v| 1.0 / v).collect();

    let mut q = vec![0.0; nf];
    let mut best = (data.terms(&q), q.clone());
    let mut history = Vec::new();
    let mut beta = 1.0;
    let mut cg_iterations = 0;
    let mut outer = 0;
    let mut prev = best.0.total;
    while outer < opts.max_outer {
        outer += 1;
        let a = (1.0 + beta) * data.k * data.k;
        let b = 1.0 + 1.0 / beta;
        let diag: Vec<f64> = (0..nf).map(|f| a * ccd[f] + b * mu_inv[f]).collect();
        let op = FnOperator::new(diag.clone(), |x: &[f64], y: &mut [f64]| {
            let mut t = curl.mul_transpose_vec(x);
            for (ti, w) in t.iter_mut().zip(&m1_inv0) {
                *ti *= w;
            }
            curl.apply(&t, y);
            for f in 0..y.len() {
                y[f] = a * y[f] + b * mu_inv[f] * x[f];
            }
        });
        let rhs: Vec<f64> = (0..nf).map(|f| a * c_m1f0[f] + b * mu_inv[f] * data.g[f]).collect();
        let inv_diag: Vec<f64> = diag.iter().map(|v| 1.0 / v).collect();
        let setup = CgSetup::new(opts.cg).precond(&inv_diag);
        let (qn, stats) = cg_solve(&op, &rhs, Some(&q), &setup);
        cg_iterations += stats.iterations;
        q = qn;
        let terms = data.terms(&q);
        history.push(terms.total);
        if terms.total < best.0.total {
            best = (terms.clone(), q.clone());
        }
        if terms.flux == 0.0 || terms.equilibrium == 0.0 {
            break;
        }
        let decrease = (prev - terms.total) / prev;
        prev = terms.total;
        beta = (terms.flux / terms.equilibrium).clamp(BETA_MIN, BETA_MAX);
        if outer > 1 && decrease < opts.tol {
            break;
        }
    }
    Ok(MinimizedMajorant {
        q: Cochain::new(Degree::Face, best.1),
        terms: best.0,
        outer_iterations: outer,
        cg_iterations,
        history,
        beta,
    })
}

/// `M₋(Ẽ; W) = 2 F_cᵀ M1 W − (C(2Ẽ + W))ᵀ M2μinv (C W)`.
pub fn minorant(d: &Discretization, e_tilde: &Cochain, w: &Cochain) -> Result<f64> {
    e_tilde.check(Degree::Edge, &d.cx.layout)?;
    require_tangential_zero(d, w)?;
    let cw = d.curl(&w.values);
    let mut s = d.curl(&e_tilde.values);
    for (si, ci) in s.iter_mut().zip(&cw) {
        *si = 2.0 * *si + ci;
    }
    let load = dot(&d.load_vector(), &w.values);
    Ok(2.0 * load - crate::linalg::wdot(&d.masses.m2_mu_inv, &s, &cw))
}

#[derive(Clone, Debug)]
pub struct MaximizedMinorant {
    pub w: Cochain,
    pub value: f64,
    pub stats: SolveStats,
}

/// Maximizes `M₋` by solving `A W = M1F_c − AẼ` on the constrained space.
pub fn maximize_minorant(d: &Discretization, e_tilde: &Cochain, cg: CgOptions) -> Result<MaximizedMinorant> {
    e_tilde.check(Degree::Edge, &d.cx.layout)?;
    let g = residual_vector(d, &e_tilde.values);
    let (w, stats) = d.solve_constrained(&g, None, cg);
    if !stats.converged {
        return Err(Error::NotConverged {
            what: "minorant CG".into(),
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    let w = Cochain::new(Degree::Edge, w);
    let value = minorant(d, e_tilde, &w)?;
    Ok(MaximizedMinorant { w, value, stats })
}

/// `M₋(Ẽ; W) + ‖div εẼ‖² + Σ ⟨εẼ, H_n⟩²`.
pub fn combined_lower_bound(d: &Discretization, e_tilde: &Cochain, w: &Cochain) -> Result<f64> {
    let m = minorant(d, e_tilde, w)?;
    let t = triple_norm(d, e_tilde)?;
    Ok(m + t.divergence.powi(2) + t.harmonic.iter().map(|h| h * h).sum::<f64>())
}

/// Error of `Ẽ` against a reference solution, addend by addend.
pub fn error_measures(d: &Discretization, e_ref: &Cochain, e_tilde: &Cochain) -> Result<TripleNorm> {
    e_ref.check(Degree::Edge, &d.cx.layout)?;
    e_tilde.check(Degree::Edge, &d.cx.layout)?;
    triple_norm(d, &Cochain::new(Degree::Edge, sub(&e_ref.values, &e_tilde.values)))
}

/// Problem-intrinsic magnitude: the majorant at `q = 0`.
pub fn majorant_scale(d: &Discretization, e_tilde: &Cochain, variant: MajorantVariant, c_p: f64) -> Result<f64> {
    Ok(MajorantData::new(d, e_tilde, variant, c_p)?.terms(&vec![0.0; d.cx.n_faces()]).total)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub variant: MajorantVariant,
    pub c_p: f64,
    pub c_mu: f64,
    pub d_d: usize,
    pub scale: f64,
    pub error_curl: Option<f64>,
    /// `|||E_h − Ẽ|||`, the sum of the three addends.
    pub triple_norm_error: Option<f64>,
    /// Sum of squared addends of `|||E_h − Ẽ|||`.
    pub error_componentwise_sq: Option<f64>,
    /// Square of `|||E_h − Ẽ|||`.
    pub error_triple_sq: Option<f64>,
    pub majorant: MajorantTerms,
    pub minorant: f64,
    pub combined_lower_bound: f64,
    pub efficiency_up: Option<f64>,
    pub efficiency_low: Option<f64>,
    pub majorant_outer_iterations: usize,
    pub majorant_cg_iterations: usize,
    pub minorant_cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BoundResult {
    pub report: BoundReport,
    pub q: Cochain,
    pub w: Cochain,
    pub majorant_history: Vec<f64>,
}

/// Optimizes both bounds for `Ẽ` and compares them with `e_ref` if given.
pub fn bound_report(
    d: &Discretization,
    e_tilde: &Cochain,
    e_ref: Option<&Cochain>,
    variant: MajorantVariant,
    c_p: f64,
    opts: &MinimizeOptions,
) -> Result<BoundResult> {
    let scale = majorant_scale(d, e_tilde, variant, c_p)?;
    let maj = minimize_majorant(d, e_tilde, variant, c_p, opts)?;
    let min = maximize_minorant(d, e_tilde, opts.cg)?;
    let combined = combined_lower_bound(d, e_tilde, &min.w)?;
    let err = e_ref.map(|r| error_measures(d, r, e_tilde)).transpose()?;
    let error_curl = err.as_ref().map(|t| t.curl);
    let ratio = |num: f64| error_curl.and_then(|e| if e > 0.0 { Some(num / e) } else { None });
    let report = BoundReport {
        variant,
        c_p,
        c_mu: d.c_mu,
        d_d: d.basis.dim(),
        scale,
        error_curl,
        triple_norm_error: err.as_ref().map(|t| t.value()),
        error_componentwise_sq: err.as_ref().map(|t| t.sum_of_squares()),
        error_triple_sq: err.as_ref().map(|t| t.value().powi(2)),
        efficiency_up: ratio(maj.terms.total),
        efficiency_low: ratio(min.value.max(0.0).sqrt()),
        majorant: maj.terms,
        minorant: min.value,
        combined_lower_bound: combined,
        majorant_outer_iterations: maj.outer_iterations,
        majorant_cg_iterations: maj.cg_iterations,
        minorant_cg_iterations: min.stats.iterations,
    };
    Ok(BoundResult {
        report,
        q: maj.q,
        w: min.w,
        majorant_history: maj.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{GridComplex, GridSpec};
    use crate::linalg::EigOptions;
    use crate::problem::{manufactured, MaterialField, ProblemDef};
    use crate::solver::{solve_primal, SolveOptions};
    use crate::spectral::poincare_constant;
    use crate::testutil::{cavity_spec, random_materials, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Case {
        d: Discretization,
        e_h: Cochain,
        c_p: f64,
    }

    fn case(spec: GridSpec, seed: u64, carrier: bool, materials: bool) -> Case {
        let cx = GridComplex::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mat = if materials {
            random_materials(cx.layout.cells.len(), seed)
        } else {
            MaterialField::identity(cx.layout.cells.len())
        };
        let g = if carrier { random_vec(&mut rng, cx.n_edges()) } else { vec![0.0; cx.n_edges()] };
        let p = ProblemDef {
            label: "t".into(),
            spec,
            materials: mat,
            f_edge: Cochain::new(Degree::Edge, random_vec(&mut rng, cx.n_edges())),
            g_check: Cochain::new(Degree::Edge, g),
        };
        let d = Discretization::new(p).unwrap();
        let e_h = solve_primal(&d, &SolveOptions::with_tol(1e-12)).unwrap().e_h;
        let c_p = poincare_constant(&d.cx, &d.masses, &d.gauge, &d.basis, &EigOptions::default())
            .unwrap()
            .c_p;
        Case { d, e_h, c_p }
    }

    fn interior_perturbation(d: &Discretization, rng: &mut ChaCha8Rng, amp: f64) -> Vec<f64> {
        let mut v = random_vec(rng, d.n_edges());
        d.zero_boundary(&mut v);
        v.iter_mut().for_each(|x| *x *= amp);
        v
    }

    #[test]
    fn residual_functional_examples() {
        let c = case(GridSpec::unit_cube(3), 1, false, false);
        let d = &c.d;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Cochain::new(Degree::Edge, interior_perturbation(d, &mut rng, 1.0));
        let r = residual_apply(d, &c.e_h, &w).unwrap();
        assert!(r.abs() <= 1e-10 * d.curl_norm(&w.values));
        assert_eq!(residual_apply(d, &c.e_h, &d.cx.zeros(Degree::Edge)).unwrap(), 0.0);
        let z = residual_apply(d, &d.cx.zeros(Degree::Edge), &w).unwrap();
        assert!((z - dot(&d.load_vector(), &w.values)).abs() <= 1e-14 * z.abs().max(1.0));
        let bad = Cochain::new(Degree::Edge, vec![1.0; d.n_edges()]);
        assert!(matches!(residual_apply(d, &c.e_h, &bad), Err(Error::NotTangentialZero)));
    }

    #[test]
    fn c_ell_is_sharp_for_exact_trace() {
        let c = case(cavity_spec(), 3, true, true);
        let d = &c.d;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(c_ell_oracle(d, &c.e_h).unwrap() <= 1e-9);
        let mut et = c.e_h.clone();
        axpy(1.0, &interior_perturbation(d, &mut rng, 0.1), &mut et.values);
        let err = d.curl_norm(&sub(&c.e_h.values, &et.values));
        let cl = c_ell_oracle(d, &et).unwrap();
        assert!((cl - err).abs() <= 1e-8 * err.max(1.0));
        let phi = random_vec(&mut rng, d.gauge.n_interior_nodes());
        let mut eg = c.e_h.clone();
        axpy(0.3, &d.gauge.gradient(&phi), &mut eg.values);
        assert!(c_ell_oracle(d, &eg).unwrap() <= 1e-9);
    }

    #[test]
    fn triple_norm_examples() {
        let c = case(cavity_spec(), 5, false, false);
        let d = &c.d;
        let t = triple_norm(d, &c.e_h).unwrap();
        assert!(t.divergence <= 1e-9 && t.harmonic[0] <= 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let phi = random_vec(&mut rng, d.gauge.n_interior_nodes());
        let g = Cochain::new(Degree::Edge, d.gauge.gradient(&phi));
        assert_eq!(triple_norm(d, &g).unwrap().curl, 0.0);
        let h = Cochain::new(Degree::Edge, d.basis.fields[0].clone());
        let th = triple_norm(d, &h).unwrap();
        assert!(th.curl <= 1e-10 && th.divergence <= 1e-10);
        assert!((th.harmonic[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn majorant_examples() {
        let c = case(GridSpec::unit_cube(3), 7, false, true);
        let d = &c.d;
        let q_exact = crate::solver::magnetic_field(d, &c.e_h.values);
        let m = majorant(d, &c.e_h, &q_exact, MajorantVariant::ExactTrace, c.c_p).unwrap();
        let scale = majorant_scale(d, &c.e_h, MajorantVariant::ExactTrace, c.c_p).unwrap();
        assert!(m.total <= 20.0 * 1e-10 * scale, "{m:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut et = c.e_h.clone();
        axpy(1.0, &interior_perturbation(d, &mut rng, 0.2), &mut et.values);
        let err = d.curl_norm(&sub(&c.e_h.values, &et.values));
        let m = majorant(d, &et, &q_exact, MajorantVariant::ExactTrace, c.c_p).unwrap();
        assert!(m.total >= err);
        assert!((m.flux - err).abs() <= 1e-12 * err);

        let zero_e = d.cx.zeros(Degree::Edge);
        let m0 = majorant(d, &zero_e, &d.cx.zeros(Degree::Face), MajorantVariant::Conforming, c.c_p).unwrap();
        let want = c.c_p / d.c_mu.sqrt() * inv_wnorm(&d.masses.m1, &d.load_vector());
        assert!((m0.total - want).abs() <= 1e-13 * want);
        assert_eq!(m0.flux, 0.0);

        // Inflating c_p scales only the equilibrium term.
        let q = Cochain::new(Degree::Face, random_vec(&mut rng, d.cx.n_faces()));
        let a = majorant(d, &et, &q, MajorantVariant::ExactTrace, c.c_p).unwrap();
        let b = majorant(d, &et, &q, MajorantVariant::ExactTrace, 2.0 * c.c_p).unwrap();
        assert_eq!(b.equilibrium, 2.0 * a.equilibrium);
        assert_eq!((a.flux, a.divergence, a.harmonic), (b.flux, b.divergence, b.harmonic));
    }

    #[test]
    fn variant_must_fit_trace() {
        let c = case(GridSpec::unit_cube(2), 9, true, false);
        let d = &c.d;
        let mut et = c.e_h.clone();
        let b = (0..d.n_edges()).find(|&e| d.cx.layout.edges.boundary[e]).unwrap();
        et.values[b] += 0.5;
        assert_eq!(auto_variant(d, &et), MajorantVariant::Full);
        assert_eq!(auto_variant(d, &c.e_h), MajorantVariant::ExactTrace);
        let q = d.cx.zeros(Degree::Face);
        assert!(matches!(
            majorant(d, &et, &q, MajorantVariant::ExactTrace, c.c_p),
            Err(Error::VariantMismatch { .. })
        ));
        let m = majorant(d, &et, &q, MajorantVariant::Full, c.c_p).unwrap();
        assert!(m.trace > 0.0);
    }

    #[test]
    fn minimizer_reaches_zero_at_exact_solution() {
        let c = case(GridSpec::unit_cube(3), 10, false, false);
        let d = &c.d;
        let r = minimize_majorant(d, &c.e_h, MajorantVariant::ExactTrace, c.c_p, &MinimizeOptions::default()).unwrap();
        let scale = majorant_scale(d, &c.e_h, MajorantVariant::ExactTrace, c.c_p).unwrap();
        assert!(r.terms.total <= 20.0 * 1e-10 * scale, "{:?}", r.terms);
    }

    #[test]
    fn minimizer_is_monotone_and_sharp() {
        let c = case(cavity_spec(), 11, true, true);
        let d = &c.d;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut et = c.e_h.clone();
        axpy(1.0, &interior_perturbation(d, &mut rng, 0.05), &mut et.values);
        let err = d.curl_norm(&sub(&c.e_h.values, &et.values));
        let r = minimize_majorant(d, &et, MajorantVariant::Conforming, c.c_p, &MinimizeOptions::default()).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", r.history);
        }
        assert!(r.terms.total >= err * (1.0 - 1e-9));
        assert!(r.terms.total <= 1.05 * err, "{} vs {}", r.terms.total, err);
    }

    #[test]
    fn minorant_examples() {
        let c = case(cavity_spec(), 13, true, true);
        let d = &c.d;
        assert_eq!(minorant(d, &c.e_h, &d.cx.zeros(Degree::Edge)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let delta = interior_perturbation(d, &mut rng, 0.1);
        let mut et = c.e_h.clone();
        axpy(1.0, &delta, &mut et.values);
        let err2 = d.curl_norm(&delta).powi(2);
        let exact_w = Cochain::new(Degree::Edge, delta.iter().map(|v| -v).collect());
        let m = minorant(d, &et, &exact_w).unwrap();
        assert!((m - err2).abs() <= 1e-9 * err2);
        for _ in 0..20 {
            let w = Cochain::new(Degree::Edge, interior_perturbation(d, &mut rng, 0.1));
            assert!(minorant(d, &et, &w).unwrap() <= err2 + 1e-9 * err2);
        }
        let best = maximize_minorant(d, &et, CgOptions::with_tol(1e-12)).unwrap();
        assert!(best.value.sqrt() / err2.sqrt() >= 0.999);
        let phi = random_vec(&mut rng, d.gauge.n_interior_nodes());
        let mut shifted = best.w.clone();
        axpy(1.0, &d.gauge.gradient(&phi), &mut shifted.values);
        let m2 = minorant(d, &et, &shifted).unwrap();
        assert!((m2 - best.value).abs() <= 1e-10 * best.value);
        let ex = maximize_minorant(d, &c.e_h, CgOptions::with_tol(1e-12)).unwrap();
        assert!(ex.value.abs() <= 1e-10 * majorant_scale(d, &c.e_h, MajorantVariant::ExactTrace, c.c_p).unwrap());
    }

    #[test]
    fn combined_bound_with_harmonic_shift() {
        let c = case(cavity_spec(), 15, false, false);
        let d = &c.d;
        let alpha = 0.3;
        let mut et = c.e_h.clone();
        axpy(alpha, &d.basis.fields[0], &mut et.values);
        let zero = d.cx.zeros(Degree::Edge);
        let lb = combined_lower_bound(d, &et, &zero).unwrap();
        assert!((lb - alpha * alpha).abs() <= 1e-9);
    }

    #[test]
    fn cube_sine_inexact_solve_is_bounded_sharply() {
        let (_, p) = manufactured("cube_sine", &GridSpec::unit_cube(6)).unwrap();
        let d = Discretization::new(p).unwrap();
        let e_h = solve_primal(&d, &SolveOptions::with_tol(1e-12)).unwrap().e_h;
        let opts = SolveOptions {
            tol: 1e-2,
            random_start: Some(1),
            ..Default::default()
        };
        let et = solve_primal(&d, &opts).unwrap().e_h;
        let c_p = poincare_constant(&d.cx, &d.masses, &d.gauge, &d.basis, &EigOptions::default())
            .unwrap()
            .c_p;
        let r = bound_report(&d, &et, Some(&e_h), MajorantVariant::ExactTrace, c_p, &MinimizeOptions::default()).unwrap();
        let rep = &r.report;
        assert!(rep.error_curl.unwrap() > 0.0);
        assert!(rep.efficiency_up.unwrap() >= 1.0 - 1e-9);
        assert!(rep.efficiency_up.unwrap() <= 1.05, "{rep:?}");
        assert!(rep.efficiency_low.unwrap() >= 0.999);
        assert!(rep.efficiency_low.unwrap() <= 1.0 + 1e-9);
    }
}
