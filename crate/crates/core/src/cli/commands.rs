//! The five subcommands. Each returns the deterministic report body.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::{ApproxConfig, MaterialsConfig, PerturbationKind, ProblemConfig, RunConfig};
use super::{error_kind, write_text, Outcome, Timings};
use crate::complex::{Cochain, Degree, GridComplex, GridSpec};
use crate::estimator::{auto_variant, bound_report, c_ell_oracle, MinimizeOptions};
use crate::helmholtz::{boundary_components, dirichlet_dimension_dense, helmholtz_decompose};
use crate::linalg::dense::DENSE_LIMIT;
use crate::linalg::{axpy, scale, sub, wdot, wnorm, EigOptions};
use crate::problem::{manufactured, read_field, write_field, ProblemDef};
use crate::solver::{check_weak_curl, solve_primal, solve_primal_dense, Discretization, PrimalSolution, SolveOptions};
use crate::spectral::{poincare_constant, poincare_lambda_dense, PoincareResult};
use crate::{Error, Result};

/// Discretized problem plus the manufactured solution when there is one.
struct Setup {
    d: Discretization,
    e_star: Option<Cochain>,
}

fn problem_for(cfg: &RunConfig, spec: &GridSpec) -> Result<(ProblemDef, Option<Cochain>)> {
    match &cfg.problem {
        ProblemConfig::Manufactured(name) => {
            if cfg.materials != MaterialsConfig::default() {
                return Err(Error::Config(format!(
                    "manufactured problem {name:?} is defined for unit materials only"
                )));
            }
            let (e_star, p) = manufactured(name, spec)?;
            Ok((p, Some(e_star)))
        }
        ProblemConfig::Fields(files) => {
            let cx = GridComplex::new(spec.clone())?;
            let n = cx.n_edges();
            let f_edge = read_field(&files.f, "F", Degree::Edge, n)?;
            let g_check = match &files.g {
                Some(g) => read_field(g, "G", Degree::Edge, n)?,
                None => cx.zeros(Degree::Edge),
            };
            let materials = cfg.materials(cx.layout.cells.len())?;
            Ok((
                ProblemDef {
                    label: "fields".into(),
                    spec: spec.clone(),
                    materials,
                    f_edge,
                    g_check,
                },
                None,
            ))
        }
    }
}

fn setup(cfg: &RunConfig, spec: &GridSpec, timings: &mut Timings) -> Result<Setup> {
    let (problem, e_star) = problem_for(cfg, spec)?;
    let d = timings.time("setup", || Discretization::new(problem))?;
    Ok(Setup { d, e_star })
}

fn reference_solve(cfg: &RunConfig, d: &Discretization, timings: &mut Timings) -> Result<PrimalSolution> {
    let opts = SolveOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        random_start: None,
    };
    timings.time("solve", || solve_primal(d, &opts))
}

fn poincare(d: &Discretization, timings: &mut Timings) -> Result<PoincareResult> {
    timings.time("poincare", || {
        poincare_constant(&d.cx, &d.masses, &d.gauge, &d.basis, &EigOptions::default())
    })
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// The approximation `Ẽ` configured for `bound` and `decompose`.
fn approximation(
    cfg: &RunConfig,
    approx: &ApproxConfig,
    d: &Discretization,
    e_h: &Cochain,
    seed: Option<u64>,
) -> Result<Cochain> {
    match approx {
        ApproxConfig::SolveTol(tol) => {
            let opts = SolveOptions {
                tol: *tol,
                max_iter: cfg.solver.max_iter,
                random_start: seed,
            };
            Ok(solve_primal(d, &opts)?.e_h)
        }
        ApproxConfig::Field(path) => read_field(path, "approximation", Degree::Edge, d.n_edges()),
        ApproxConfig::Perturbation(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            let mut delta = match p.kind {
                PerturbationKind::TangentialZero => {
                    let mut v = random_vec(&mut rng, d.n_edges());
                    d.zero_boundary(&mut v);
                    v
                }
                PerturbationKind::Gradient => {
                    let phi = random_vec(&mut rng, d.gauge.n_interior_nodes());
                    d.gauge.gradient(&phi)
                }
                PerturbationKind::Harmonic => {
                    if d.basis.dim() == 0 {
                        return Err(Error::InvalidInput(
                            "harmonic perturbation needs a Dirichlet field, and this domain has none (d_D = 0)".into(),
                        ));
                    }
                    let mut v = vec![0.0; d.n_edges()];
                    for h in &d.basis.fields {
                        axpy(rng.gen_range(-1.0..1.0), h, &mut v);
                    }
                    v
                }
            };
            let norm = wnorm(&d.masses.m1, &delta);
            if norm == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{:?} perturbation space is empty on this grid",
                    p.kind
                )));
            }
            let base = wnorm(&d.masses.m1, &e_h.values);
            let target = p.amplitude * if base > 0.0 { base } else { 1.0 };
            scale(target / norm, &mut delta);
            let mut e = e_h.values.clone();
            axpy(1.0, &delta, &mut e);
            Ok(Cochain::new(Degree::Edge, e))
        }
    }
}

fn grid_json(d: &Discretization) -> Value {
    let l = &d.cx.layout;
    json!({
        "dims": d.cx.spec.cells,
        "spacing": d.cx.spec.spacing,
        "active_cells": l.cells.len(),
        "nodes": l.nodes.len(),
        "edges": l.edges.len(),
        "faces": l.faces.len(),
        "boundary_edges": l.edges.boundary_count(),
        "interior_nodes": l.nodes.interior_count(),
    })
}

fn constants_json(d: &Discretization) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("c_mu".into(), json!(d.c_mu));
    m.insert("d_D".into(), json!(d.basis.dim()));
    m.insert("dirichlet_eigenvalues".into(), json!(d.basis.eigenvalues));
    m.insert("rejected_eigenvalue".into(), json!(d.basis.rejected));
    m.insert("boundary_components".into(), json!(boundary_components(&d.cx)));
    m
}

fn write_fields(cfg: &RunConfig, d: &Discretization, fields: &[(&str, &Cochain)]) -> Result<Vec<String>> {
    let Some(dir) = &cfg.outputs.fields_dir else {
        return Ok(Vec::new());
    };
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut names = Vec::new();
    for (name, field) in fields {
        let file = format!("{name}.bin");
        write_field(&dir.join(&file), field, &d.cx.spec)?;
        names.push(file);
    }
    Ok(names)
}

/// Relative difference `‖a − b‖ / ‖b‖` in the M1 norm.
fn rel_diff_m1(d: &Discretization, a: &[f64], b: &[f64]) -> f64 {
    let nb = wnorm(&d.masses.m1, b);
    let diff = wnorm(&d.masses.m1, &sub(a, b));
    if nb > 0.0 {
        diff / nb
    } else {
        diff
    }
}

fn oracle_skipped(d: &Discretization) -> Option<Value> {
    (d.n_edges() > DENSE_LIMIT).then(|| {
        json!({ "skipped": format!("{} edges exceed the dense limit of {DENSE_LIMIT}", d.n_edges()) })
    })
}

fn solver_json(sol: &PrimalSolution) -> Value {
    json!({
        "iterations": sol.stats.iterations,
        "relative_residual": sol.stats.relative_residual,
        "converged": sol.stats.converged,
        "gauge": sol.gauge,
    })
}

/// `solve`: primal solve, weak-curl check and optional field dumps.
pub fn cmd_solve(cfg: &RunConfig, oracle: bool) -> Result<Outcome> {
    let mut timings = Timings::default();
    let spec = cfg.grid_spec()?;
    let s = setup(cfg, &spec, &mut timings)?;
    let d = &s.d;
    let sol = reference_solve(cfg, d, &mut timings)?;
    let mut body = Map::new();
    body.insert("grid".into(), grid_json(d));
    body.insert("constants".into(), Value::Object(constants_json(d)));
    let mut solver = solver_json(&sol);
    solver["weak_curl_residual"] = json!(check_weak_curl(d, &sol.e_h)?);
    body.insert("solver".into(), solver);
    if let Some(e_star) = &s.e_star {
        body.insert(
            "manufactured".into(),
            json!({
                "error_m1": wnorm(&d.masses.m1, &sub(&sol.e_h.values, &e_star.values)),
                "relative_error_m1": rel_diff_m1(d, &sol.e_h.values, &e_star.values),
            }),
        );
    }
    if oracle {
        let v = match oracle_skipped(d) {
            Some(v) => v,
            None => {
                let dense = timings.time("oracle", || solve_primal_dense(d))?;
                json!({ "solution_relative_difference": rel_diff_m1(d, &sol.e_h.values, &dense.values) })
            }
        };
        body.insert("oracle".into(), v);
    }
    let files = write_fields(cfg, d, &[("e_h", &sol.e_h), ("h_h", &sol.h_h)])?;
    body.insert("fields".into(), json!(files));
    Ok(Outcome {
        body,
        status: "ok",
        timings,
    })
}

const BOUND_CSV_HEADER: &str =
    "variant,equilibrium,flux,trace,divergence,harmonic,majorant,minorant,combined_lower_bound,error_curl,efficiency_up,efficiency_low";

/// 17 significant digits, round-trip exact; empty for missing values.
pub fn csv_number(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        _ => String::new(),
    }
}

/// `bound`: constants, optimized majorant and minorant, efficiencies.
pub fn cmd_bound(cfg: &RunConfig, oracle: bool) -> Result<Outcome> {
    let approx = cfg
        .approximation
        .as_ref()
        .ok_or_else(|| Error::Config("bound needs an approximation source".into()))?;
    let mut timings = Timings::default();
    let spec = cfg.grid_spec()?;
    let s = setup(cfg, &spec, &mut timings)?;
    let d = &s.d;
    let sol = reference_solve(cfg, d, &mut timings)?;
    let e_tilde = timings.time("approximation", || approximation(cfg, approx, d, &sol.e_h, cfg.seed))?;
    let pc = poincare(d, &mut timings)?;
    let c_p = pc.c_p * cfg.estimator.c_p_inflation;
    let variant = cfg.estimator.variant.fixed().unwrap_or_else(|| auto_variant(d, &e_tilde));
    let opts = MinimizeOptions {
        max_outer: cfg.estimator.outer_iters,
        tol: cfg.estimator.tol,
        ..Default::default()
    };
    let result = timings.time("bounds", || bound_report(d, &e_tilde, Some(&sol.e_h), variant, c_p, &opts))?;
    let r = &result.report;

    let mut body = Map::new();
    body.insert("grid".into(), grid_json(d));
    let mut constants = constants_json(d);
    constants.insert("c_p".into(), json!(c_p));
    constants.insert("c_p_computed".into(), json!(pc.c_p));
    constants.insert("c_p_inflation".into(), json!(cfg.estimator.c_p_inflation));
    constants.insert("lambda_min".into(), json!(pc.lambda_min));
    body.insert("constants".into(), Value::Object(constants));
    body.insert("solver".into(), solver_json(&sol));
    body.insert("poincare_stats".into(), json!(pc.stats));
    body.insert("bounds".into(), serde_json::to_value(r).expect("bound report serializes"));
    body.insert("majorant_history".into(), json!(result.majorant_history));
    body.insert(
        "checks".into(),
        json!({
            "upper_bound_holds": r.error_curl.map(|e| e <= r.majorant.total + 1e-9 * r.scale),
            "lower_bound_holds": r.error_curl.map(|e| r.minorant <= e * e + 1e-9 * r.scale),
        }),
    );
    if oracle {
        let v = match oracle_skipped(d) {
            Some(v) => v,
            None => timings.time("oracle", || -> Result<Value> {
                let lambda = poincare_lambda_dense(&d.cx, &d.masses, &d.gauge, &d.basis)?;
                let dense = solve_primal_dense(d)?;
                let c_ell = c_ell_oracle(d, &e_tilde)?;
                Ok(json!({
                    "lambda_min": lambda,
                    "lambda_relative_difference": (pc.lambda_min - lambda).abs() / lambda,
                    "d_D": dirichlet_dimension_dense(&d.cx)?,
                    "solution_relative_difference": rel_diff_m1(d, &sol.e_h.values, &dense.values),
                    "c_ell": c_ell,
                }))
            })?,
        };
        body.insert("oracle".into(), v);
    }
    if let Some(csv) = &cfg.outputs.csv {
        let m = &r.majorant;
        let row = [
            r.variant.name().to_string(),
            csv_number(Some(m.equilibrium)),
            csv_number(Some(m.flux)),
            csv_number(Some(m.trace)),
            csv_number(Some(m.divergence)),
            csv_number(Some(m.harmonic)),
            csv_number(Some(m.total)),
            csv_number(Some(r.minorant)),
            csv_number(Some(r.combined_lower_bound)),
            csv_number(r.error_curl),
            csv_number(r.efficiency_up),
            csv_number(r.efficiency_low),
        ]
        .join(",");
        write_text(csv, &format!("{BOUND_CSV_HEADER}\n{row}\n"))?;
    }
    let files = write_fields(
        cfg,
        d,
        &[("e_h", &sol.e_h), ("e_tilde", &e_tilde), ("q", &result.q), ("w", &result.w)],
    )?;
    body.insert("fields".into(), json!(files));
    Ok(Outcome {
        body,
        status: "ok",
        timings,
    })
}

/// `eigs`: Poincaré constant and Dirichlet fields.
pub fn cmd_eigs(cfg: &RunConfig, oracle: bool) -> Result<Outcome> {
    let mut timings = Timings::default();
    let spec = cfg.grid_spec()?;
    let s = setup(cfg, &spec, &mut timings)?;
    let d = &s.d;
    let pc = poincare(d, &mut timings)?;
    let mut body = Map::new();
    body.insert("grid".into(), grid_json(d));
    let mut constants = constants_json(d);
    constants.insert("c_p".into(), json!(pc.c_p));
    constants.insert("lambda_min".into(), json!(pc.lambda_min));
    body.insert("constants".into(), Value::Object(constants));
    body.insert("poincare_stats".into(), json!(pc.stats));
    if oracle {
        let v = match oracle_skipped(d) {
            Some(v) => v,
            None => timings.time("oracle", || -> Result<Value> {
                let lambda = poincare_lambda_dense(&d.cx, &d.masses, &d.gauge, &d.basis)?;
                Ok(json!({
                    "lambda_min": lambda,
                    "lambda_relative_difference": (pc.lambda_min - lambda).abs() / lambda,
                    "d_D": dirichlet_dimension_dense(&d.cx)?,
                }))
            })?,
        };
        body.insert("oracle".into(), v);
    }
    let named: Vec<(String, Cochain)> = d
        .basis
        .fields
        .iter()
        .enumerate()
        .map(|(n, h)| (format!("dirichlet_{}", n + 1), Cochain::new(Degree::Edge, h.clone())))
        .collect();
    let refs: Vec<(&str, &Cochain)> = named.iter().map(|(n, c)| (n.as_str(), c)).collect();
    body.insert("fields".into(), json!(write_fields(cfg, d, &refs)?));
    Ok(Outcome {
        body,
        status: "ok",
        timings,
    })
}

/// `decompose`: splits the approximation, or a seeded random field, into
/// gradient, harmonic and curl-range parts.
pub fn cmd_decompose(cfg: &RunConfig, _oracle: bool) -> Result<Outcome> {
    let mut timings = Timings::default();
    let spec = cfg.grid_spec()?;
    let s = setup(cfg, &spec, &mut timings)?;
    let d = &s.d;
    let psi = match &cfg.approximation {
        Some(approx) => {
            let sol = reference_solve(cfg, d, &mut timings)?;
            approximation(cfg, approx, d, &sol.e_h, cfg.seed)?
        }
        None => {
            let seed = cfg.seed.ok_or_else(|| {
                Error::Config("decompose needs an approximation source or a seed for a random field".into())
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Cochain::new(Degree::Edge, random_vec(&mut rng, d.n_edges()))
        }
    };
    let dec = timings.time("decompose", || helmholtz_decompose(&psi, &d.cx.layout, &d.gauge, &d.basis))?;
    let m = &d.masses.m1_eps;
    let norm2 = wdot(m, &psi.values, &psi.values);
    let rel = |a: &Cochain, b: &Cochain| {
        let v = wdot(m, &a.values, &b.values).abs();
        if norm2 > 0.0 {
            v / norm2
        } else {
            v
        }
    };
    let mut sum = dec.gradient.values.clone();
    axpy(1.0, &dec.harmonic.values, &mut sum);
    axpy(1.0, &dec.curl_range.values, &mut sum);
    let psi_norm = wnorm(m, &psi.values);
    let relative = |v: f64| if psi_norm > 0.0 { v / psi_norm } else { v };
    let mut body = Map::new();
    body.insert("grid".into(), grid_json(d));
    body.insert("constants".into(), Value::Object(constants_json(d)));
    body.insert(
        "decomposition".into(),
        json!({
            "conforming": dec.conforming,
            "norm_input": psi_norm,
            "norm_gradient": wnorm(m, &dec.gradient.values),
            "norm_harmonic": wnorm(m, &dec.harmonic.values),
            "norm_curl_range": wnorm(m, &dec.curl_range.values),
            "orthogonality": {
                "gradient_harmonic": rel(&dec.gradient, &dec.harmonic),
                "gradient_curl_range": rel(&dec.gradient, &dec.curl_range),
                "harmonic_curl_range": rel(&dec.harmonic, &dec.curl_range),
            },
            "reconstruction": relative(wnorm(m, &sub(&sum, &psi.values))),
            "curl_range_divergence": relative(d.gauge.div_norm(&dec.curl_range.values)),
            "curl_range_harmonic": d.basis.coefficients(&dec.curl_range.values, m).iter().fold(0.0f64, |a, c| a.max(relative(c.abs()))),
        }),
    );
    let files = write_fields(
        cfg,
        d,
        &[
            ("input", &psi),
            ("gradient", &dec.gradient),
            ("harmonic", &dec.harmonic),
            ("curl_range", &dec.curl_range),
        ],
    )?;
    body.insert("fields".into(), json!(files));
    Ok(Outcome {
        body,
        status: "ok",
        timings,
    })
}

/// Seed of study row `index`, derived from the master seed by fixed
/// arithmetic so rows are independent of scheduling.
pub fn row_seed(master: u64, index: usize) -> u64 {
    master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StudyRow {
    pub size: usize,
    pub edges: usize,
    pub status: String,
    pub c_p: Option<f64>,
    pub d_d: Option<usize>,
    pub error_m1: Option<f64>,
    pub error_curl: Option<f64>,
    pub majorant: Option<f64>,
    pub minorant: Option<f64>,
    pub efficiency_up: Option<f64>,
    pub efficiency_low: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

pub const STUDY_CSV_HEADER: &str =
    "size,edges,status,c_p,d_D,error_m1,error_curl,majorant,minorant,efficiency_up,efficiency_low";

impl StudyRow {
    pub fn csv(&self) -> String {
        [
            self.size.to_string(),
            self.edges.to_string(),
            self.status.clone(),
            csv_number(self.c_p),
            self.d_d.map(|v| v.to_string()).unwrap_or_default(),
            csv_number(self.error_m1),
            csv_number(self.error_curl),
            csv_number(self.majorant),
            csv_number(self.minorant),
            csv_number(self.efficiency_up),
            csv_number(self.efficiency_low),
        ]
        .join(",")
    }
}

fn study_row(cfg: &RunConfig, spec: GridSpec, index: usize) -> Result<StudyRow> {
    let size = spec.cells[0];
    let mut row = StudyRow {
        size,
        ..Default::default()
    };
    let mut timings = Timings::default();
    let s = setup(cfg, &spec, &mut timings)?;
    let d = &s.d;
    row.edges = d.n_edges();
    row.d_d = Some(d.basis.dim());
    let numeric = |e: Error, row: &mut StudyRow| -> Result<()> {
        if e.is_numeric() {
            row.status = format!("failed:{}", error_kind(&e));
            Ok(())
        } else {
            Err(e)
        }
    };
    let sol = match reference_solve(cfg, d, &mut timings) {
        Ok(s) => s,
        Err(e) => {
            numeric(e, &mut row)?;
            return Ok(row);
        }
    };
    if let Some(e_star) = &s.e_star {
        row.error_m1 = Some(wnorm(&d.masses.m1, &sub(&sol.e_h.values, &e_star.values)));
    }
    let pc = match poincare(d, &mut timings) {
        Ok(p) => p,
        Err(e) => {
            numeric(e, &mut row)?;
            return Ok(row);
        }
    };
    let c_p = pc.c_p * cfg.estimator.c_p_inflation;
    row.c_p = Some(c_p);
    if let Some(approx) = &cfg.approximation {
        let seed = cfg.seed.map(|m| row_seed(m, index));
        let approx = match approx {
            ApproxConfig::Perturbation(p) => {
                let mut p = p.clone();
                p.seed = row_seed(p.seed, index);
                ApproxConfig::Perturbation(p)
            }
            other => other.clone(),
        };
        let bounds = approximation(cfg, &approx, d, &sol.e_h, seed).and_then(|e_tilde| {
            let variant = cfg.estimator.variant.fixed().unwrap_or_else(|| auto_variant(d, &e_tilde));
            let opts = MinimizeOptions {
                max_outer: cfg.estimator.outer_iters,
                tol: cfg.estimator.tol,
                ..Default::default()
            };
            bound_report(d, &e_tilde, Some(&sol.e_h), variant, c_p, &opts)
        });
        match bounds {
            Ok(b) => {
                let r = b.report;
                row.error_curl = r.error_curl;
                row.majorant = Some(r.majorant.total);
                row.minorant = Some(r.minorant);
                row.efficiency_up = r.efficiency_up;
                row.efficiency_low = r.efficiency_low;
            }
            Err(e) => {
                numeric(e, &mut row)?;
                return Ok(row);
            }
        }
    }
    row.status = "ok".into();
    Ok(row)
}

/// `study`: one row per refinement level, rows computed in parallel.
pub fn cmd_study(cfg: &RunConfig) -> Result<Outcome> {
    let study = cfg
        .study
        .as_ref()
        .ok_or_else(|| Error::Config("study needs a \"study\" section with sizes".into()))?;
    if study.sizes.is_empty() {
        return Err(Error::Config("study.sizes is empty".into()));
    }
    if study.sizes.contains(&0) {
        return Err(Error::Config("study.sizes must be positive".into()));
    }
    if cfg.grid.mask_file.is_some() || !cfg.grid.cavities.is_empty() {
        return Err(Error::Config("study refines the full box; masks and cavities are not supported".into()));
    }
    if matches!(cfg.approximation, Some(ApproxConfig::Field(_))) {
        return Err(Error::Config("study cannot use a field file approximation on several grids".into()));
    }
    let extent: Vec<f64> = (0..3).map(|a| cfg.grid.dims[a] as f64 * cfg.grid.spacing[a]).collect();
    let specs: Vec<GridSpec> = study
        .sizes
        .iter()
        .map(|&n| GridSpec::new([n; 3], [extent[0] / n as f64, extent[1] / n as f64, extent[2] / n as f64]))
        .collect();
    let start = Instant::now();
    let rows: Vec<Result<StudyRow>> = specs
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let t = Instant::now();
            study_row(cfg, spec, i).map(|mut r| {
                r.seconds = t.elapsed().as_secs_f64();
                r
            })
        })
        .collect();
    let rows: Vec<StudyRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut timings = Timings::default();
    timings.record("study", start.elapsed().as_secs_f64());
    for r in &rows {
        timings.record(&format!("row_{}", r.size), r.seconds);
    }
    let mut csv = String::from(STUDY_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    if let Some(path) = &cfg.outputs.csv {
        write_text(path, &csv)?;
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let status = match failed {
        0 => "ok",
        n if n == rows.len() => "failed",
        _ => "partial",
    };
    let mut body = Map::new();
    body.insert("rows".into(), serde_json::to_value(&rows).expect("rows serialize"));
    Ok(Outcome {
        body,
        status,
        timings,
    })
}
