//! Staggered voxel grids and their discrete de Rham complex.
//!
//! Nodes, edges, faces and cells of an axis-aligned box are numbered on the
//! full lattice first; entities that touch no active cell are then pruned so
//! that every [`Cochain`] only carries values for live degrees of freedom.
//! The incidence operators `grad`, `curl` and `div` hold integer entries in
//! `{-1, 0, 1}` and compose to zero exactly.

use std::collections::VecDeque;

use crate::linalg::sparse::CsrMatrix;
use crate::{Error, Result};

/// Form degree of a cochain: 0 = nodes, 1 = edges, 2 = faces, 3 = cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Degree {
    Node,
    Edge,
    Face,
    Cell,
}

impl Degree {
    pub fn as_u8(self) -> u8 {
        match self {
            Degree::Node => 0,
            Degree::Edge => 1,
            Degree::Face => 2,
            Degree::Cell => 3,
        }
    }

    pub fn from_u8(d: u8) -> Result<Self> {
        match d {
            0 => Ok(Degree::Node),
            1 => Ok(Degree::Edge),
            2 => Ok(Degree::Face),
            3 => Ok(Degree::Cell),
            other => Err(Error::InvalidInput(format!(
                "cochain degree must be 0..=3, got {other}"
            ))),
        }
    }
}

impl From<Degree> for u8 {
    fn from(d: Degree) -> u8 {
        d.as_u8()
    }
}

impl TryFrom<u8> for Degree {
    type Error = Error;
    fn try_from(d: u8) -> Result<Self> {
        Degree::from_u8(d)
    }
}

impl std::fmt::Display for Degree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Voxel domain description.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    /// Per-cell activity in x-fastest order; `None` means the full box.
    pub active: Option<Vec<bool>>,
}

impl GridSpec {
    pub fn new(cells: [usize; 3], spacing: [f64; 3]) -> Self {
        GridSpec {
            cells,
            spacing,
            active: None,
        }
    }

    /// `n`×`n`×`n` cells covering a cube of side `extent`.
    pub fn cube(n: usize, extent: f64) -> Self {
        let h = extent / n as f64;
        GridSpec::new([n, n, n], [h, h, h])
    }

    pub fn unit_cube(n: usize) -> Self {
        GridSpec::cube(n, 1.0)
    }

    pub fn cell_count_box(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn cell_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.cells[0] as f64 * self.spacing[0],
            self.cells[1] as f64 * self.spacing[1],
            self.cells[2] as f64 * self.spacing[2],
        ]
    }

    /// Deactivates the half-open cell box `lo..hi`.
    pub fn with_cavity(mut self, lo: [usize; 3], hi: [usize; 3]) -> Self {
        let n = self.cell_count_box();
        let mut active = self.active.take().unwrap_or_else(|| vec![true; n]);
        for k in lo[2]..hi[2].min(self.cells[2]) {
            for j in lo[1]..hi[1].min(self.cells[1]) {
                for i in lo[0]..hi[0].min(self.cells[0]) {
                    active[self.cell_index([i, j, k])] = false;
                }
            }
        }
        self.active = Some(active);
        self
    }

    pub fn with_mask(mut self, active: Vec<bool>) -> Self {
        self.active = Some(active);
        self
    }

    /// Activity of a cell given by signed lattice coordinates; anything
    /// outside the box counts as inactive.
    pub fn is_active(&self, c: [isize; 3]) -> bool {
        for a in 0..3 {
            if c[a] < 0 || c[a] >= self.cells[a] as isize {
                return false;
            }
        }
        let idx = self.cell_index([c[0] as usize, c[1] as usize, c[2] as usize]);
        self.active.as_ref().map_or(true, |m| m[idx])
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.iter().any(|&n| n == 0) {
            return Err(Error::InvalidGrid(format!(
                "cells per axis must be >= 1, got {:?}",
                self.cells
            )));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be finite and positive, got {:?}",
                self.spacing
            )));
        }
        if let Some(mask) = &self.active {
            if mask.len() != self.cell_count_box() {
                return Err(Error::InvalidGrid(format!(
                    "active mask has {} entries, expected {}",
                    mask.len(),
                    self.cell_count_box()
                )));
            }
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.cell_count_box();
        let active = |idx: usize| self.active.as_ref().map_or(true, |m| m[idx]);
        let total = (0..n).filter(|&c| active(c)).count();
        let Some(start) = (0..n).find(|&c| active(c)) else {
            return Err(Error::InvalidGrid("active cell set is empty".into()));
        };
        let [nx, ny, _] = self.cells;
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 0;
        while let Some(c) = queue.pop_front() {
            reached += 1;
            let ijk = [
                (c % nx) as isize,
                ((c / nx) % ny) as isize,
                (c / (nx * ny)) as isize,
            ];
            for a in 0..3 {
                for step in [-1isize, 1] {
                    let mut nb = ijk;
                    nb[a] += step;
                    if self.is_active(nb) {
                        let idx = self.cell_index([nb[0] as usize, nb[1] as usize, nb[2] as usize]);
                        if !seen[idx] {
                            seen[idx] = true;
                            queue.push_back(idx);
                        }
                    }
                }
            }
        }
        if reached != total {
            return Err(Error::InvalidGrid(format!(
                "active cells are not face-connected: reached {reached} of {total} cells"
            )));
        }
        Ok(())
    }
}

/// Active entities of one degree.
#[derive(Clone, Debug, Default)]
pub struct EntitySet {
    /// Orientation axis: edge direction or face normal (0 for nodes and cells).
    pub axis: Vec<u8>,
    /// Lattice coordinates of the entity's lowest corner.
    pub ijk: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl EntitySet {
    pub fn len(&self) -> usize {
        self.ijk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ijk.is_empty()
    }

    /// Active index of the entity with box-level number `global`.
    pub fn active_index(&self, global: usize) -> Option<usize> {
        match self.lookup.get(global) {
            Some(&ix) if ix != ABSENT => Some(ix as usize),
            _ => None,
        }
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn interior_count(&self) -> usize {
        self.len() - self.boundary_count()
    }

    fn push(&mut self, global: usize, axis: usize, ijk: [usize; 3], boundary: bool) {
        self.lookup[global] = self.ijk.len() as u32;
        self.axis.push(axis as u8);
        self.ijk.push(ijk);
        self.boundary.push(boundary);
    }
}

/// Box-level numbering of lattice entities.
#[derive(Clone, Copy, Debug)]
struct Lattice {
    n: [usize; 3],
}

impl Lattice {
    fn node(&self, [i, j, k]: [usize; 3]) -> usize {
        i + (self.n[0] + 1) * (j + (self.n[1] + 1) * k)
    }

    fn node_count(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1) * (self.n[2] + 1)
    }

    /// Extent of the edge lattice of direction `a` (or face lattice of normal
    /// `a` when `face` is set).
    fn dims(&self, a: usize, face: bool) -> [usize; 3] {
        let mut d = [0; 3];
        for b in 0..3 {
            d[b] = if (b == a) != face { self.n[b] } else { self.n[b] + 1 };
        }
        d
    }

    fn offset(&self, a: usize, face: bool) -> usize {
        (0..a)
            .map(|b| self.dims(b, face).iter().product::<usize>())
            .sum()
    }

    fn count(&self, face: bool) -> usize {
        self.offset(3, face)
    }

    fn entity(&self, a: usize, face: bool, [i, j, k]: [usize; 3]) -> usize {
        let d = self.dims(a, face);
        self.offset(a, face) + i + d[0] * (j + d[1] * k)
    }

    fn each(&self, a: usize, face: bool) -> impl Iterator<Item = [usize; 3]> {
        let d = self.dims(a, face);
        (0..d[2]).flat_map(move |k| (0..d[1]).flat_map(move |j| (0..d[0]).map(move |i| [i, j, k])))
    }
}

fn shifted(p: [usize; 3], a: usize) -> [usize; 3] {
    let mut q = p;
    q[a] += 1;
    q
}

fn signed(p: [usize; 3]) -> [isize; 3] {
    [p[0] as isize, p[1] as isize, p[2] as isize]
}

/// Cells adjacent to an entity, as signed lattice coordinates.
fn adjacent_cells(p: [usize; 3], fixed: &[usize]) -> Vec<[isize; 3]> {
    // Axes not in `fixed` straddle the entity: both the cell below and above.
    let base = signed(p);
    let mut out = vec![base];
    for a in 0..3 {
        if fixed.contains(&a) {
            continue;
        }
        let mut more = Vec::with_capacity(out.len() * 2);
        for c in &out {
            let mut lo = *c;
            lo[a] -= 1;
            more.push(lo);
            more.push(*c);
        }
        out = more;
    }
    out
}

/// Index maps and boundary flags for all active entities.
#[derive(Clone, Debug)]
pub struct DofLayout {
    pub cells_per_axis: [usize; 3],
    pub nodes: EntitySet,
    pub edges: EntitySet,
    pub faces: EntitySet,
    pub cells: EntitySet,
}

impl DofLayout {
    pub fn entities(&self, degree: Degree) -> &EntitySet {
        match degree {
            Degree::Node => &self.nodes,
            Degree::Edge => &self.edges,
            Degree::Face => &self.faces,
            Degree::Cell => &self.cells,
        }
    }

    pub fn count(&self, degree: Degree) -> usize {
        self.entities(degree).len()
    }

    /// Cells adjacent to an active entity that are themselves active, as
    /// active cell indices.
    pub fn active_neighbours(&self, degree: Degree, index: usize, spec: &GridSpec) -> Vec<usize> {
        let set = self.entities(degree);
        let p = set.ijk[index];
        let a = set.axis[index] as usize;
        let cells = match degree {
            Degree::Node => adjacent_cells(p, &[]),
            Degree::Edge => adjacent_cells(p, &[a]),
            Degree::Face => {
                let mut lo = signed(p);
                lo[a] -= 1;
                vec![lo, signed(p)]
            }
            Degree::Cell => vec![signed(p)],
        };
        cells
            .into_iter()
            .filter(|&c| spec.is_active(c))
            .map(|c| {
                let g = spec.cell_index([c[0] as usize, c[1] as usize, c[2] as usize]);
                self.cells.active_index(g).expect("active cell is in layout")
            })
            .collect()
    }
}

/// Signed incidence matrices of the complex.
#[derive(Clone, Debug)]
pub struct DiffOps {
    /// edge × node
    pub grad: CsrMatrix<i32>,
    /// face × edge
    pub curl: CsrMatrix<i32>,
    /// cell × face
    pub div: CsrMatrix<i32>,
}

/// A grid together with its layout and incidence operators.
#[derive(Clone, Debug)]
pub struct GridComplex {
    pub spec: GridSpec,
    pub layout: DofLayout,
    pub ops: DiffOps,
}

impl GridComplex {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let (layout, ops) = build_complex(&spec)?;
        Ok(GridComplex { spec, layout, ops })
    }

    pub fn n_edges(&self) -> usize {
        self.layout.edges.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.nodes.len()
    }

    pub fn n_faces(&self) -> usize {
        self.layout.faces.len()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.spec.spacing[self.layout.edges.axis[e] as usize]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let a = self.layout.faces.axis[f] as usize;
        self.spec.spacing[(a + 1) % 3] * self.spec.spacing[(a + 2) % 3]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spec.spacing.iter().product()
    }

    pub fn node_position(&self, n: usize) -> [f64; 3] {
        let p = self.layout.nodes.ijk[n];
        [0, 1, 2].map(|a| p[a] as f64 * self.spec.spacing[a])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 3] {
        let p = self.layout.edges.ijk[e];
        let ax = self.layout.edges.axis[e] as usize;
        [0, 1, 2].map(|a| {
            let off = if a == ax { 0.5 } else { 0.0 };
            (p[a] as f64 + off) * self.spec.spacing[a]
        })
    }

    pub fn face_center(&self, f: usize) -> [f64; 3] {
        let p = self.layout.faces.ijk[f];
        let ax = self.layout.faces.axis[f] as usize;
        [0, 1, 2].map(|a| {
            let off = if a == ax { 0.0 } else { 0.5 };
            (p[a] as f64 + off) * self.spec.spacing[a]
        })
    }

    pub fn cell_center(&self, c: usize) -> [f64; 3] {
        let p = self.layout.cells.ijk[c];
        [0, 1, 2].map(|a| (p[a] as f64 + 0.5) * self.spec.spacing[a])
    }

    pub fn zeros(&self, degree: Degree) -> Cochain {
        Cochain::zeros(degree, self.layout.count(degree))
    }
}

/// Coefficient vector attached to the active entities of one degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub degree: Degree,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn new(degree: Degree, values: Vec<f64>) -> Self {
        Cochain { degree, values }
    }

    pub fn zeros(degree: Degree, len: usize) -> Self {
        Cochain {
            degree,
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks degree and length against a layout.
    pub fn check(&self, degree: Degree, layout: &DofLayout) -> Result<()> {
        if self.degree != degree {
            return Err(Error::DegreeMismatch {
                expected: degree.as_u8(),
                found: self.degree.as_u8(),
            });
        }
        let n = layout.count(degree);
        if self.values.len() != n {
            return Err(Error::LengthMismatch {
                what: format!("degree-{degree} cochain"),
                expected: n,
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Builds the layout and incidence operators of `spec`.
pub fn build_complex(spec: &GridSpec) -> Result<(DofLayout, DiffOps)> {
    spec.validate()?;
    let lat = Lattice { n: spec.cells };
    let n = spec.cells;

    // Cells.
    let mut cells = EntitySet {
        lookup: vec![ABSENT; spec.cell_count_box()],
        ..Default::default()
    };
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let p = [i, j, k];
                if spec.is_active(signed(p)) {
                    cells.push(spec.cell_index(p), 0, p, false);
                }
            }
        }
    }

    // Faces: up to two adjacent cells along the normal.
    let mut faces = EntitySet {
        lookup: vec![ABSENT; lat.count(true)],
        ..Default::default()
    };
    for a in 0..3 {
        for p in lat.each(a, true) {
            let mut below = signed(p);
            below[a] -= 1;
            let hits = [below, signed(p)]
                .iter()
                .filter(|&&c| spec.is_active(c))
                .count();
            if hits > 0 {
                faces.push(lat.entity(a, true, p), a, p, hits == 1);
            }
        }
    }

    // Edges: up to four cells around the edge.
    let mut edges = EntitySet {
        lookup: vec![ABSENT; lat.count(false)],
        ..Default::default()
    };
    for a in 0..3 {
        for p in lat.each(a, false) {
            let around = adjacent_cells(p, &[a]);
            let hits = around.iter().filter(|&&c| spec.is_active(c)).count();
            if hits > 0 {
                edges.push(lat.entity(a, false, p), a, p, hits < around.len());
            }
        }
    }

    // Nodes: up to eight cells.
    let mut nodes = EntitySet {
        lookup: vec![ABSENT; lat.node_count()],
        ..Default::default()
    };
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let p = [i, j, k];
                let around = adjacent_cells(p, &[]);
                let hits = around.iter().filter(|&&c| spec.is_active(c)).count();
                if hits > 0 {
                    nodes.push(lat.node(p), 0, p, hits < around.len());
                }
            }
        }
    }

    let node_ix = |p: [usize; 3]| nodes.active_index(lat.node(p)).expect("node of active edge");
    let edge_ix = |a: usize, p: [usize; 3]| {
        edges
            .active_index(lat.entity(a, false, p))
            .expect("edge of active face")
    };
    let face_ix = |a: usize, p: [usize; 3]| {
        faces
            .active_index(lat.entity(a, true, p))
            .expect("face of active cell")
    };

    let mut trip = Vec::with_capacity(2 * edges.len());
    for e in 0..edges.len() {
        let (a, p) = (edges.axis[e] as usize, edges.ijk[e]);
        trip.push((e, node_ix(p), -1));
        trip.push((e, node_ix(shifted(p, a)), 1));
    }
    let grad = CsrMatrix::from_triplets(edges.len(), nodes.len(), trip);

    // Right-hand rule circulation around the face normal a, with (b, c) the
    // cyclic successors of a.
    let mut trip = Vec::with_capacity(4 * faces.len());
    for f in 0..faces.len() {
        let (a, p) = (faces.axis[f] as usize, faces.ijk[f]);
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        trip.push((f, edge_ix(b, p), 1));
        trip.push((f, edge_ix(c, shifted(p, b)), 1));
        trip.push((f, edge_ix(b, shifted(p, c)), -1));
        trip.push((f, edge_ix(c, p), -1));
    }
    let curl = CsrMatrix::from_triplets(faces.len(), edges.len(), trip);

    let mut trip = Vec::with_capacity(6 * cells.len());
    for c in 0..cells.len() {
        let p = cells.ijk[c];
        for a in 0..3 {
            trip.push((c, face_ix(a, p), -1));
            trip.push((c, face_ix(a, shifted(p, a)), 1));
        }
    }
    let div = CsrMatrix::from_triplets(cells.len(), faces.len(), trip);

    let layout = DofLayout {
        cells_per_axis: spec.cells,
        nodes,
        edges,
        faces,
        cells,
    };
    Ok((layout, DiffOps { grad, curl, div }))
}

/// Zeroes every boundary edge value, leaving interior edges untouched.
pub fn zero_tangential(u: &Cochain, layout: &DofLayout) -> Result<Cochain> {
    u.check(Degree::Edge, layout)?;
    let mut out = u.clone();
    zero_tangential_in_place(&mut out.values, layout);
    Ok(out)
}

/// Keeps only the boundary edge values.
pub fn tangential_boundary_part(u: &Cochain, layout: &DofLayout) -> Result<Cochain> {
    u.check(Degree::Edge, layout)?;
    let values = u
        .values
        .iter()
        .zip(&layout.edges.boundary)
        .map(|(&v, &b)| if b { v } else { 0.0 })
        .collect();
    Ok(Cochain::new(Degree::Edge, values))
}

pub(crate) fn zero_tangential_in_place(values: &mut [f64], layout: &DofLayout) {
    for (v, &b) in values.iter_mut().zip(&layout.edges.boundary) {
        if b {
            *v = 0.0;
        }
    }
}

/// True when no boundary edge carries a nonzero value.
pub fn is_tangential_zero(values: &[f64], layout: &DofLayout) -> bool {
    values
        .iter()
        .zip(&layout.edges.boundary)
        .all(|(&v, &b)| !b || v == 0.0)
}
