//! Problem instances: materials, Hodge masses, sampled fields and field files.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complex::{Cochain, Degree, GridComplex, GridSpec};
use crate::{Error, Result};

/// Diagonal permittivity and permeability, one triple per active cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialField {
    pub eps: Vec<[f64; 3]>,
    pub mu: Vec<[f64; 3]>,
}

impl MaterialField {
    pub fn constant(n_cells: usize, eps: [f64; 3], mu: [f64; 3]) -> Self {
        MaterialField {
            eps: vec![eps; n_cells],
            mu: vec![mu; n_cells],
        }
    }

    pub fn identity(n_cells: usize) -> Self {
        Self::constant(n_cells, [1.0; 3], [1.0; 3])
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn is_unit_eps(&self) -> bool {
        self.eps.iter().all(|e| *e == [1.0; 3])
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        for (what, field) in [("eps", &self.eps), ("mu", &self.mu)] {
            if field.len() != n_cells {
                return Err(Error::LengthMismatch {
                    what: format!("material {what}"),
                    expected: n_cells,
                    found: field.len(),
                });
            }
            if let Some((c, v)) = field
                .iter()
                .enumerate()
                .find(|(_, v)| v.iter().any(|x| !(x.is_finite() && *x > 0.0)))
            {
                return Err(Error::InvalidInput(format!(
                    "material {what} of cell {c} is not finite and positive: {v:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Diagonal mass operators, stored as their diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct HodgeMasses {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub m1_eps: Vec<f64>,
    pub m2: Vec<f64>,
    pub m2_mu_inv: Vec<f64>,
}

impl HodgeMasses {
    pub fn m1_inv(&self) -> Vec<f64> {
        self.m1.iter().map(|v| 1.0 / v).collect()
    }

    pub fn m1_eps_inv(&self) -> Vec<f64> {
        self.m1_eps.iter().map(|v| 1.0 / v).collect()
    }
}

/// Assembles the diagonal masses from per-cell dual-volume shares.
///
/// Each active cell hands an eighth of its volume to every corner node, a
/// quarter of its transverse cross-section over the edge length to every
/// edge, and half its extent along the normal over the face area to every
/// face. Material components along the edge direction (ε) or face normal
/// (μ⁻¹) weight the shares.
pub fn build_masses(cx: &GridComplex, materials: &MaterialField) -> Result<HodgeMasses> {
    let layout = &cx.layout;
    materials.validate(layout.cells.len())?;
    let h = cx.spec.spacing;
    let vol = cx.cell_volume();

    let m0 = (0..layout.nodes.len())
        .map(|n| layout.active_neighbours(Degree::Node, n, &cx.spec).len() as f64 * vol / 8.0)
        .collect();

    let mut m1 = vec![0.0; layout.edges.len()];
    let mut m1_eps = vec![0.0; layout.edges.len()];
    for e in 0..layout.edges.len() {
        let a = layout.edges.axis[e] as usize;
        let share = h[(a + 1) % 3] * h[(a + 2) % 3] / 4.0 / h[a];
        for c in layout.active_neighbours(Degree::Edge, e, &cx.spec) {
            m1[e] += share;
            m1_eps[e] += share * materials.eps[c][a];
        }
    }

    let mut m2 = vec![0.0; layout.faces.len()];
    let mut m2_mu_inv = vec![0.0; layout.faces.len()];
    for f in 0..layout.faces.len() {
        let a = layout.faces.axis[f] as usize;
        let share = h[a] / 2.0 / (h[(a + 1) % 3] * h[(a + 2) % 3]);
        for c in layout.active_neighbours(Degree::Face, f, &cx.spec) {
            m2[f] += share;
            m2_mu_inv[f] += share / materials.mu[c][a];
        }
    }

    Ok(HodgeMasses {
        m0,
        m1,
        m1_eps,
        m2,
        m2_mu_inv,
    })
}

/// Largest `c` with `c |ξ|² ≤ μ⁻¹ξ·ξ` in every cell.
pub fn c_mu(materials: &MaterialField) -> f64 {
    materials
        .mu
        .iter()
        .flat_map(|m| m.iter().map(|v| 1.0 / v))
        .fold(f64::INFINITY, f64::min)
}

/// De Rham map of a vector field: tangential component at edge midpoints
/// times length, or normal component at face centres times area.
pub fn sample_field(cx: &GridComplex, degree: Degree, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Cochain> {
    let values = match degree {
        Degree::Edge => (0..cx.n_edges())
            .map(|e| f(cx.edge_midpoint(e))[cx.layout.edges.axis[e] as usize] * cx.edge_length(e))
            .collect(),
        Degree::Face => (0..cx.n_faces())
            .map(|k| f(cx.face_center(k))[cx.layout.faces.axis[k] as usize] * cx.face_area(k))
            .collect(),
        _ => {
            return Err(Error::InvalidInput(format!(
                "vector fields sample to degree 1 or 2, not {degree}"
            )))
        }
    };
    Ok(Cochain::new(degree, values))
}

/// De Rham map of a scalar field: point values at nodes or cell-centre
/// value times volume on cells.
pub fn sample_scalar(cx: &GridComplex, degree: Degree, f: impl Fn([f64; 3]) -> f64) -> Result<Cochain> {
    let values = match degree {
        Degree::Node => (0..cx.n_nodes()).map(|n| f(cx.node_position(n))).collect(),
        Degree::Cell => (0..cx.layout.cells.len())
            .map(|c| f(cx.cell_center(c)) * cx.cell_volume())
            .collect(),
        _ => {
            return Err(Error::InvalidInput(format!(
                "scalar fields sample to degree 0 or 3, not {degree}"
            )))
        }
    };
    Ok(Cochain::new(degree, values))
}

/// Everything that defines a boundary value problem on a grid.
#[derive(Clone, Debug)]
pub struct ProblemDef {
    pub label: String,
    pub spec: GridSpec,
    pub materials: MaterialField,
    /// Load sampled to edges.
    pub f_edge: Cochain,
    /// Carrier of the tangential boundary data.
    pub g_check: Cochain,
}

impl ProblemDef {
    pub fn check(&self, cx: &GridComplex) -> Result<()> {
        self.materials.validate(cx.layout.cells.len())?;
        self.f_edge.check(Degree::Edge, &cx.layout)?;
        self.g_check.check(Degree::Edge, &cx.layout)
    }
}

/// Names accepted by [`manufactured`].
pub const MANUFACTURED: &[&str] = &["cube_sine"];

/// `E*(x, y, z) = (0, 0, sin πx sin πy)` on the unit cube.
pub fn cube_sine_field(p: [f64; 3]) -> [f64; 3] {
    [0.0, 0.0, (PI * p[0]).sin() * (PI * p[1]).sin()]
}

pub fn cube_sine_curl(p: [f64; 3]) -> [f64; 3] {
    let (sx, cx) = (PI * p[0]).sin_cos();
    let (sy, cy) = (PI * p[1]).sin_cos();
    [PI * sx * cy, -PI * cx * sy, 0.0]
}

/// A problem with known exact solution, returned with that solution sampled
/// to edges. `spec` must cover the unit cube.
pub fn manufactured(name: &str, spec: &GridSpec) -> Result<(Cochain, ProblemDef)> {
    match name {
        "cube_sine" => {
            let ext = spec.extent();
            if ext.iter().any(|&l| (l - 1.0).abs() > 1e-12) || spec.active.is_some() {
                return Err(Error::InvalidInput(format!(
                    "cube_sine needs the full unit cube, got extent {ext:?}"
                )));
            }
            let cx = GridComplex::new(spec.clone())?;
            let e_star = sample_field(&cx, Degree::Edge, cube_sine_field)?;
            let f = Cochain::new(
                Degree::Edge,
                e_star.values.iter().map(|v| 2.0 * PI * PI * v).collect(),
            );
            let problem = ProblemDef {
                label: name.to_string(),
                spec: spec.clone(),
                materials: MaterialField::identity(cx.layout.cells.len()),
                f_edge: f,
                g_check: cx.zeros(Degree::Edge),
            };
            Ok((e_star, problem))
        }
        other => Err(Error::InvalidInput(format!(
            "unknown manufactured problem {other:?}; known: {MANUFACTURED:?}"
        ))),
    }
}

/// JSON sidecar of a raw field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub degree: Degree,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub count: usize,
    pub byte_order: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sidecar path for a raw field file: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes a cochain as raw little-endian doubles plus sidecar, or as CSV
/// when the path ends in `.csv`.
pub fn write_field(path: &Path, field: &Cochain, spec: &GridSpec) -> Result<()> {
    if is_csv(path) {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let mut body = format!("degree={},count={}\n", field.degree, field.len());
        for v in &field.values {
            // Shortest representation that parses back to the same bits.
            body.push_str(&format!("{v:e}\n"));
        }
        w.write_all(body.as_bytes()).map_err(io_err(path))?;
        return w.flush().map_err(io_err(path));
    }
    let mut bytes = Vec::with_capacity(8 * field.len());
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(io_err(path))?;
    let header = FieldHeader {
        degree: field.degree,
        dims: spec.cells,
        spacing: spec.spacing,
        count: field.len(),
        byte_order: "little".into(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(&side, text).map_err(io_err(&side))
}

/// Reads a field written by [`write_field`] and checks it against the
/// expected degree and entity count. `name` labels error messages.
pub fn read_field(path: &Path, name: &str, degree: Degree, count: usize) -> Result<Cochain> {
    let (found_degree, values) = if is_csv(path) {
        read_csv_field(path)?
    } else {
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
        let header: FieldHeader = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("field sidecar {}: {e}", side.display())))?;
        if header.byte_order != "little" {
            return Err(Error::Config(format!(
                "field {name}: unsupported byte order {:?}",
                header.byte_order
            )));
        }
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Config(format!(
                "field {name}: {} bytes is not a whole number of doubles",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.len() != header.count {
            return Err(Error::LengthMismatch {
                what: format!("field {name} (data vs sidecar count)"),
                expected: header.count,
                found: values.len(),
            });
        }
        (header.degree, values)
    };
    if found_degree != degree {
        return Err(Error::DegreeMismatch {
            expected: degree.as_u8(),
            found: found_degree.as_u8(),
        });
    }
    if values.len() != count {
        return Err(Error::LengthMismatch {
            what: format!("field {name}"),
            expected: count,
            found: values.len(),
        });
    }
    Ok(Cochain::new(degree, values))
}

fn read_csv_field(path: &Path) -> Result<(Degree, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |msg: String| Error::Config(format!("field file {}: {msg}", path.display()));
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(io_err(path))?;
    let mut degree = None;
    let mut count = None;
    for part in header.trim().split(',') {
        match part.split_once('=') {
            Some(("degree", d)) => degree = d.parse::<u8>().ok(),
            Some(("count", c)) => count = c.parse::<usize>().ok(),
            _ => return Err(bad(format!("malformed header {header:?}"))),
        }
    }
    let (Some(degree), Some(count)) = (degree, count) else {
        return Err(bad(format!("header {header:?} needs degree and count")));
    };
    let degree = Degree::from_u8(degree)?;
    let mut values = Vec::with_capacity(count);
    for line in lines {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|e| bad(format!("value {t:?}: {e}")))?);
    }
    if values.len() != count {
        return Err(Error::LengthMismatch {
            what: format!("field file {} (rows vs header count)", path.display()),
            expected: count,
            found: values.len(),
        });
    }
    Ok((degree, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{wdot, wnorm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> GridComplex {
        GridComplex::new(GridSpec::unit_cube(n)).unwrap()
    }

    #[test]
    fn single_cell_geometric_weights() {
        let cx = unit(1);
        let m = build_masses(&cx, &MaterialField::identity(1)).unwrap();
        assert!(m.m1.iter().all(|&w| (w - 0.25).abs() < 1e-15));
        assert!((m.m1.iter().sum::<f64>() - 3.0).abs() < 1e-14);
        assert!((m.m0.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(m.m2.iter().all(|&w| (w - 0.5).abs() < 1e-15));
        assert_eq!(m.m1, m.m1_eps);
        assert_eq!(m.m2, m.m2_mu_inv);
    }

    #[test]
    fn masses_are_linear_in_material() {
        let cx = unit(3);
        let n = cx.layout.cells.len();
        let one = build_masses(&cx, &MaterialField::identity(n)).unwrap();
        let two = build_masses(&cx, &MaterialField::constant(n, [2.0; 3], [2.0; 3])).unwrap();
        for (a, b) in one.m1_eps.iter().zip(&two.m1_eps) {
            assert_eq!(2.0 * a, *b);
        }
        for (a, b) in one.m2_mu_inv.iter().zip(&two.m2_mu_inv) {
            assert!((0.5 * a - b).abs() < 1e-15 * a);
        }
    }

    #[test]
    fn masses_scale_with_spacing() {
        let a = GridComplex::new(GridSpec::cube(3, 1.0)).unwrap();
        let b = GridComplex::new(GridSpec::cube(3, 2.0)).unwrap();
        let n = a.layout.cells.len();
        let ma = build_masses(&a, &MaterialField::identity(n)).unwrap();
        let mb = build_masses(&b, &MaterialField::identity(n)).unwrap();
        for (x, y) in ma.m0.iter().zip(&mb.m0) {
            assert!((y / x - 8.0).abs() < 1e-12);
        }
        // Edge and face masses act on integrated values (length, area).
        for (x, y) in ma.m1.iter().zip(&mb.m1) {
            assert!((y / x - 2.0).abs() < 1e-12);
        }
        for (x, y) in ma.m2.iter().zip(&mb.m2) {
            assert!((y / x - 0.5).abs() < 1e-12);
        }
        // So a sampled constant field has mass proportional to the volume.
        let fa = sample_field(&a, Degree::Edge, |_| [1.0, 0.0, 0.0]).unwrap();
        let fb = sample_field(&b, Degree::Edge, |_| [1.0, 0.0, 0.0]).unwrap();
        let ra = wdot(&ma.m1, &fa.values, &fa.values);
        let rb = wdot(&mb.m1, &fb.values, &fb.values);
        assert!((ra - 1.0).abs() < 1e-12 && (rb - 8.0).abs() < 1e-12);
    }

    #[test]
    fn cavity_edge_uses_active_cells_only() {
        let spec = GridSpec::unit_cube(4).with_cavity([1, 1, 1], [3, 3, 3]);
        let cx = GridComplex::new(spec).unwrap();
        let m = build_masses(&cx, &MaterialField::identity(cx.layout.cells.len())).unwrap();
        let h = 0.25;
        // Edge on the cavity surface, seen by three active cells.
        for e in 0..cx.n_edges() {
            let nb = cx.layout.active_neighbours(Degree::Edge, e, &cx.spec).len();
            assert!((m.m1[e] - nb as f64 * h / 4.0).abs() < 1e-15);
        }
        assert!(m.m1.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn c_mu_examples() {
        assert_eq!(c_mu(&MaterialField::identity(5)), 1.0);
        assert_eq!(c_mu(&MaterialField::constant(3, [1.0; 3], [2.0; 3])), 0.5);
        let mut m = MaterialField::identity(6);
        m.mu[1] = [4.0, 1.0, 1.0];
        m.mu[4] = [1.0, 1.0, 1.0];
        assert_eq!(c_mu(&m), 0.25);
    }

    #[test]
    fn c_mu_bounds_every_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = MaterialField::identity(8);
        for mu in &mut m.mu {
            *mu = [0, 1, 2].map(|_| rng.gen_range(0.2..5.0));
        }
        let c = c_mu(&m);
        for _ in 0..100 {
            let xi: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
            let xx: f64 = xi.iter().map(|v| v * v).sum();
            for mu in &m.mu {
                let q: f64 = (0..3).map(|a| xi[a] * xi[a] / mu[a]).sum();
                assert!(c * xx <= q * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let spec = GridSpec::new([2, 3, 4], [0.5, 0.25, 0.125]);
        let cx = GridComplex::new(spec).unwrap();
        let ex = sample_field(&cx, Degree::Edge, |_| [1.0, 0.0, 0.0]).unwrap();
        for e in 0..cx.n_edges() {
            let want = if cx.layout.edges.axis[e] == 0 { 0.5 } else { 0.0 };
            assert_eq!(ex.values[e], want);
        }
        let fz = sample_field(&cx, Degree::Face, |_| [0.0, 0.0, 1.0]).unwrap();
        for f in 0..cx.n_faces() {
            let want = if cx.layout.faces.axis[f] == 2 { 0.5 * 0.25 } else { 0.0 };
            assert_eq!(fz.values[f], want);
        }
        assert!(sample_field(&cx, Degree::Node, |_| [0.0; 3]).is_err());
        let phi = sample_scalar(&cx, Degree::Node, |p| p[0] * p[1] * p[2]).unwrap();
        let grad = cx.ops.grad.mul_vec(&phi.values);
        assert_eq!(cx.ops.curl.mul_vec(&grad).iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn cube_sine_data() {
        let (e_star, p) = manufactured("cube_sine", &GridSpec::unit_cube(6)).unwrap();
        assert!(p.g_check.values.iter().all(|&v| v == 0.0));
        for (f, e) in p.f_edge.values.iter().zip(&e_star.values) {
            assert_eq!(*f, 2.0 * PI * PI * e);
        }
        // Curl of the sampled field approximates the sampled analytic curl.
        let cx = GridComplex::new(p.spec.clone()).unwrap();
        let curl = cx.ops.curl.mul_vec(&e_star.values);
        let exact = sample_field(&cx, Degree::Face, cube_sine_curl).unwrap();
        let diff: f64 = curl.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 0.05 * exact.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        // ‖E*‖² = 1/4, recovered by the midpoint rule to O(h²).
        let m = build_masses(&cx, &p.materials).unwrap();
        let nrm2 = wnorm(&m.m1, &e_star.values).powi(2);
        assert!((nrm2 - 0.25).abs() < 0.02);
        assert!(manufactured("nope", &GridSpec::unit_cube(2)).is_err());
    }

    #[test]
    fn field_files_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::unit_cube(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..54).map(|_| rng.gen::<f64>() * 1e-300 + rng.gen::<f64>()).collect();
        let field = Cochain::new(Degree::Edge, values);
        for name in ["e.bin", "e.csv"] {
            let path = dir.path().join(name);
            write_field(&path, &field, &spec).unwrap();
            let back = read_field(&path, "E", Degree::Edge, 54).unwrap();
            for (a, b) in back.values.iter().zip(&field.values) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            let err = read_field(&path, "E", Degree::Edge, 55).unwrap_err();
            assert!(err.to_string().contains("field E"), "{err}");
            assert!(matches!(
                read_field(&path, "E", Degree::Face, 54),
                Err(Error::DegreeMismatch { .. })
            ));
        }
    }
}
