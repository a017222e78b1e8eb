//! Graded tensor-product meshes over cylinders `Ω × (0, L)`.
//!
//! `Ω` is the unit interval (rectangular cells) or the unit square split into
//! triangles (prismatic cells). The `y` direction is graded towards `y = 0`
//! with `y_j = (j/N)^(2/(2-β)) L`.
//!
//! Facet orientation: every facet carries one global unit normal pointing in
//! the increasing coordinate direction (lateral facets: `x1` first, then
//! `x2`; horizontal facets: `+y`). The cell on the negative side of a facet
//! has incidence sign `+1`, the cell on the positive side `-1`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::error::{Error, Result};

/// Parameters of the graded `y` partition and the base resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedSpec {
    /// Number of `y` slabs.
    pub n_slabs: usize,
    /// Truncation height `L`.
    pub height: f64,
    /// Grading exponent `β`.
    pub beta: f64,
    /// Cells per unit length of `Ω` in each base direction.
    pub base_resolution: usize,
}

impl GradedSpec {
    pub fn new(n_slabs: usize, height: f64, beta: f64, base_resolution: usize) -> Result<Self> {
        let grading = GradedSpec {
            n_slabs,
            height,
            beta,
            base_resolution,
        };
        grading.validate()?;
        Ok(grading)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slabs < 1 {
            return Err(Error::InvalidMesh("at least one y-slab is required".into()));
        }
        if self.base_resolution < 1 {
            return Err(Error::InvalidMesh("base resolution must be positive".into()));
        }
        if !(self.height > 0.0) || !self.height.is_finite() {
            return Err(Error::InvalidMesh(format!("height must be positive, got {}", self.height)));
        }
        if !(self.beta < 2.0) {
            return Err(Error::InvalidGrading(format!("beta must be < 2, got {}", self.beta)));
        }
        Ok(())
    }

    /// Checks `β ∈ (1 - α, 2)` for the weight exponent `α`.
    pub fn validate_for_alpha(&self, alpha: f64) -> Result<()> {
        if !(self.beta > 1.0 - alpha && self.beta < 2.0) {
            return Err(Error::InvalidGrading(format!(
                "beta = {} must lie in (1 - alpha, 2) = ({}, 2)",
                self.beta,
                1.0 - alpha
            )));
        }
        Ok(())
    }
}

/// `y_j = (j/N)^(2/(2-β)) L` for `j = 0..=N`.
pub fn graded_breaks(n: usize, height: f64, beta: f64) -> Result<Vec<f64>> {
    if !(beta < 2.0) {
        return Err(Error::InvalidGrading(format!(
            "beta = {beta} >= 2 makes the grading exponent blow up"
        )));
    }
    if n < 1 || !(height > 0.0) {
        return Err(Error::InvalidMesh(format!("need N >= 1 and L > 0, got N = {n}, L = {height}")));
    }
    let exponent = 2.0 / (2.0 - beta);
    let mut y: Vec<f64> = (0..=n)
        .map(|j| (j as f64 / n as f64).powf(exponent) * height)
        .collect();
    y[n] = height;
    for j in 1..=n {
        if !(y[j] > y[j - 1]) {
            return Err(Error::InvalidGrading(format!(
                "breaks not strictly increasing at j = {j} (beta = {beta}, N = {n})"
            )));
        }
    }
    Ok(y)
}

/// `max_{j ≥ 1} (y_{j+1} - y_j)² / (h² y_j^β L^(2-β))`, the empirical grading constant.
pub fn check_increment_bound(breaks: &[f64], beta: f64, height: f64, h: f64) -> f64 {
    breaks
        .windows(2)
        .skip(1)
        .map(|w| {
            let dy = w[1] - w[0];
            dy * dy / (h * h * w[0].powf(beta) * height.powf(2.0 - beta))
        })
        .fold(0.0, f64::max)
}

/// An edge of the base triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub length: f64,
    /// Global unit normal (`x1` component positive, or zero with `x2` positive).
    pub normal: [f64; 2],
    /// Triangle on the negative side of the normal.
    pub neg: Option<usize>,
    /// Triangle on the positive side of the normal.
    pub pos: Option<usize>,
}

/// A conforming triangulation of the base domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TriBase {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `tri_edges[t][i]` is the edge opposite vertex `i` of triangle `t`.
    pub tri_edges: Vec<[usize; 3]>,
}

impl TriBase {
    /// Builds edges and their orientation from vertices and ccw triangles.
    pub fn from_triangles(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        use std::collections::HashMap;
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if signed_area(&vertices, tri) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counterclockwise")));
            }
            let mut local = [0usize; 3];
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    let pa = vertices[key.0];
                    let pb = vertices[key.1];
                    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                    let length = (dx * dx + dy * dy).sqrt();
                    let mut normal = [dy / length, -dx / length];
                    if normal[0] < -1e-14 || (normal[0].abs() <= 1e-14 && normal[1] < 0.0) {
                        normal = [-normal[0], -normal[1]];
                    }
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        length,
                        normal,
                        neg: None,
                        pos: None,
                    });
                    edges.len() - 1
                });
                // Outward normal of the ccw triangle across edge (a, b).
                let (pa, pb) = (vertices[a], vertices[b]);
                let outward = [pb[1] - pa[1], -(pb[0] - pa[0])];
                let e = &mut edges[id];
                let dot = outward[0] * e.normal[0] + outward[1] * e.normal[1];
                let slot = if dot > 0.0 { &mut e.neg } else { &mut e.pos };
                if slot.is_some() {
                    return Err(Error::InvalidMesh(format!("edge {id} is shared inconsistently")));
                }
                *slot = Some(t);
                local[i] = id;
            }
            tri_edges.push(local);
        }
        Ok(TriBase {
            vertices,
            triangles,
            edges,
            tri_edges,
        })
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Largest `h_K / ρ_K` (diameter over inradius) over all triangles.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.corners(t);
                let len = |i: usize, j: usize| {
                    ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt()
                };
                let sides = [len(0, 1), len(1, 2), len(2, 0)];
                let diameter = sides.iter().cloned().fold(0.0, f64::max);
                let inradius = 2.0 * self.area(t) / sides.iter().sum::<f64>();
                diameter / inradius
            })
            .fold(0.0, f64::max)
    }
}

fn signed_area(v: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// `m × m` squares on `(0,1)²`, each cut along its lower-left to upper-right diagonal.
pub fn triangulate_unit_square(m: usize) -> Result<TriBase> {
    if m < 1 {
        return Err(Error::InvalidMesh("m must be at least 1".into()));
    }
    let h = 1.0 / m as f64;
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut triangles = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (ll, lr, ul, ur) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    TriBase::from_triangles(vertices, triangles)
}

/// Partition of the base domain `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMesh {
    /// Breakpoints of `(0, 1)`.
    Interval(Vec<f64>),
    Triangles(TriBase),
}

impl BaseMesh {
    pub fn dim(&self) -> usize {
        match self {
            BaseMesh::Interval(_) => 1,
            BaseMesh::Triangles(_) => 2,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            BaseMesh::Interval(x) => x.len() - 1,
            BaseMesh::Triangles(t) => t.triangles.len(),
        }
    }

    pub fn cell_measure(&self, b: usize) -> f64 {
        match self {
            BaseMesh::Interval(x) => x[b + 1] - x[b],
            BaseMesh::Triangles(t) => t.area(b),
        }
    }

    /// Whether a base point lies in base cell `b` (with a small tolerance).
    pub fn contains(&self, b: usize, x: [f64; 2]) -> bool {
        let tol = 1e-12;
        match self {
            BaseMesh::Interval(breaks) => x[0] >= breaks[b] - tol && x[0] <= breaks[b + 1] + tol,
            BaseMesh::Triangles(t) => {
                let l = barycentric(&t.corners(b), x);
                l.iter().all(|&v| v >= -tol)
            }
        }
    }
}

pub(crate) fn barycentric(p: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
    let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Boundary classification of a facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Interior,
    /// Bottom `Ω × {0}`.
    GammaN,
    /// Lateral and top boundary.
    GammaD,
}

impl FacetTag {
    fn label(self) -> &'static str {
        match self {
            FacetTag::Interior => "interior",
            FacetTag::GammaN => "gamma_n",
            FacetTag::GammaD => "gamma_d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetKind {
    /// Base facet (point or edge) times a slab.
    Lateral { base_facet: usize, slab: usize },
    /// Base cell at height `y_level`.
    Horizontal { base_cell: usize, level: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub kind: FacetKind,
    pub area: f64,
    /// Global unit normal `[n_x1, n_x2, n_y]`.
    pub normal: [f64; 3],
    pub neg: Option<usize>,
    pub pos: Option<usize>,
    pub tag: FacetTag,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.tag != FacetTag::Interior
    }

    /// `+1` when the global normal is the outward normal of the only adjacent
    /// cell, `-1` otherwise. Interior facets return `0`.
    pub fn outward_sign(&self) -> f64 {
        match (self.neg, self.pos) {
            (Some(_), None) => 1.0,
            (None, Some(_)) => -1.0,
            _ => 0.0,
        }
    }
}

/// A rectangle or prism `base cell × [y_j, y_{j+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub base: usize,
    pub slab: usize,
    pub volume: f64,
    /// Local facets: lateral ones first (left, right for rectangles; the edge
    /// opposite vertex 0, 1, 2 for prisms), then bottom and top.
    pub facets: Vec<usize>,
    /// Incidence signs `±1`, aligned with `facets`.
    pub signs: Vec<f64>,
}

/// Tensor-product mesh of `Ω × (0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh {
    pub base: BaseMesh,
    pub y_breaks: Vec<f64>,
    pub cells: Vec<Cell>,
    pub facets: Vec<Facet>,
    n_lateral: usize,
}

/// A base facet: a point of the interval partition or an edge of the triangulation.
struct BaseFacet {
    measure: f64,
    normal: [f64; 2],
    neg: Option<usize>,
    pos: Option<usize>,
}

fn base_facets(base: &BaseMesh) -> Vec<BaseFacet> {
    match base {
        BaseMesh::Interval(x) => {
            let nc = x.len() - 1;
            (0..=nc)
                .map(|i| BaseFacet {
                    measure: 1.0,
                    normal: [1.0, 0.0],
                    neg: if i > 0 { Some(i - 1) } else { None },
                    pos: if i < nc { Some(i) } else { None },
                })
                .collect()
        }
        BaseMesh::Triangles(t) => t
            .edges
            .iter()
            .map(|e| BaseFacet {
                measure: e.length,
                normal: e.normal,
                neg: e.neg,
                pos: e.pos,
            })
            .collect(),
    }
}

/// Local base facets of a base cell with their incidence signs.
fn base_cell_facets(base: &BaseMesh, b: usize) -> Vec<(usize, f64)> {
    match base {
        BaseMesh::Interval(_) => vec![(b, -1.0), (b + 1, 1.0)],
        BaseMesh::Triangles(t) => t.tri_edges[b]
            .iter()
            .map(|&e| (e, if t.edges[e].neg == Some(b) { 1.0 } else { -1.0 }))
            .collect(),
    }
}

/// Builds the cylinder mesh. `dim_base = 1` gives rectangles over
/// `(0,1)`, `dim_base = 2` prisms over the triangulated unit square.
pub fn build_mesh(grading: &GradedSpec, dim_base: usize) -> Result<TensorMesh> {
    grading.validate()?;
    let y = graded_breaks(grading.n_slabs, grading.height, grading.beta)?;
    let m = grading.base_resolution;
    let base = match dim_base {
        1 => BaseMesh::Interval((0..=m).map(|i| i as f64 / m as f64).collect()),
        2 => BaseMesh::Triangles(triangulate_unit_square(m)?),
        d => return Err(Error::InvalidMesh(format!("base dimension must be 1 or 2, got {d}"))),
    };
    TensorMesh::from_parts(base, y)
}

impl TensorMesh {
    /// Assembles cells and facets from a base partition and `y` breaks.
    pub fn from_parts(base: BaseMesh, y_breaks: Vec<f64>) -> Result<Self> {
        if y_breaks.len() < 2 || y_breaks[0] != 0.0 || y_breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMesh(
                "y breaks must start at 0 and increase strictly".into(),
            ));
        }
        let n_slabs = y_breaks.len() - 1;
        let nb = base.n_cells();
        let bfacets = base_facets(&base);
        let nbf = bfacets.len();
        let n_lateral = nbf * n_slabs;
        let mut facets = Vec::with_capacity(n_lateral + nb * (n_slabs + 1));
        let cell_id = |b: usize, j: usize| j * nb + b;

        for j in 0..n_slabs {
            let dy = y_breaks[j + 1] - y_breaks[j];
            for (f, bf) in bfacets.iter().enumerate() {
                let tag = if bf.neg.is_some() && bf.pos.is_some() {
                    FacetTag::Interior
                } else {
                    FacetTag::GammaD
                };
                facets.push(Facet {
                    kind: FacetKind::Lateral { base_facet: f, slab: j },
                    area: bf.measure * dy,
                    normal: [bf.normal[0], bf.normal[1], 0.0],
                    neg: bf.neg.map(|b| cell_id(b, j)),
                    pos: bf.pos.map(|b| cell_id(b, j)),
                    tag,
                });
            }
        }
        for level in 0..=n_slabs {
            for b in 0..nb {
                let tag = if level == 0 {
                    FacetTag::GammaN
                } else if level == n_slabs {
                    FacetTag::GammaD
                } else {
                    FacetTag::Interior
                };
                facets.push(Facet {
                    kind: FacetKind::Horizontal { base_cell: b, level },
                    area: base.cell_measure(b),
                    normal: [0.0, 0.0, 1.0],
                    neg: if level > 0 { Some(cell_id(b, level - 1)) } else { None },
                    pos: if level < n_slabs { Some(cell_id(b, level)) } else { None },
                    tag,
                });
            }
        }

        let mut cells = Vec::with_capacity(nb * n_slabs);
        for j in 0..n_slabs {
            let dy = y_breaks[j + 1] - y_breaks[j];
            for b in 0..nb {
                let mut ids = Vec::with_capacity(5);
                let mut signs = Vec::with_capacity(5);
                for (f, sign) in base_cell_facets(&base, b) {
                    ids.push(j * nbf + f);
                    signs.push(sign);
                }
                ids.push(n_lateral + j * nb + b);
                signs.push(-1.0);
                ids.push(n_lateral + (j + 1) * nb + b);
                signs.push(1.0);
                cells.push(Cell {
                    base: b,
                    slab: j,
                    volume: base.cell_measure(b) * dy,
                    facets: ids,
                    signs,
                });
            }
        }
        Ok(TensorMesh {
            base,
            y_breaks,
            cells,
            facets,
            n_lateral,
        })
    }

    pub fn dim_base(&self) -> usize {
        self.base.dim()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn n_slabs(&self) -> usize {
        self.y_breaks.len() - 1
    }

    pub fn n_base_cells(&self) -> usize {
        self.base.n_cells()
    }

    pub fn height(&self) -> f64 {
        *self.y_breaks.last().unwrap()
    }

    pub fn cell_index(&self, base: usize, slab: usize) -> usize {
        slab * self.n_base_cells() + base
    }

    /// Facet id of the horizontal facet over base cell `b` at `y_level`.
    pub fn horizontal_facet(&self, base: usize, level: usize) -> usize {
        self.n_lateral + level * self.n_base_cells() + base
    }

    pub fn slab_bounds(&self, slab: usize) -> (f64, f64) {
        (self.y_breaks[slab], self.y_breaks[slab + 1])
    }

    pub fn bottom_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_base_cells()).map(move |b| self.horizontal_facet(b, 0))
    }

    /// Base-domain measure `|Ω|` (always 1 for the built-in domains).
    pub fn base_measure(&self) -> f64 {
        (0..self.n_base_cells()).map(|b| self.base.cell_measure(b)).sum()
    }

    /// Endpoints of a base facet: a single point in 1D, the edge in 2D.
    pub(crate) fn base_facet_points(&self, f: usize) -> ([f64; 2], [f64; 2]) {
        match &self.base {
            BaseMesh::Interval(x) => ([x[f], 0.0], [x[f], 0.0]),
            BaseMesh::Triangles(t) => {
                let [a, b] = t.edges[f].vertices;
                (t.vertices[a], t.vertices[b])
            }
        }
    }

    /// Plain-text dump: one `cell` line per cell, one `facet` line per facet.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, c) in self.cells.iter().enumerate() {
            let _ = writeln!(out, "cell {id} {} {} {:.17e}", c.base, c.slab, c.volume);
        }
        let side = |c: Option<usize>| c.map_or("-".to_string(), |c| c.to_string());
        for (id, f) in self.facets.iter().enumerate() {
            let _ = write!(out, "facet {id} {} {:.17e} ", f.tag.label(), f.area);
            if self.dim_base() == 1 {
                let _ = write!(out, "{} {}", f.normal[0], f.normal[2]);
            } else {
                let _ = write!(out, "{} {} {}", f.normal[0], f.normal[1], f.normal[2]);
            }
            let _ = writeln!(out, " {} {}", side(f.neg), side(f.pos));
        }
        out
    }

    pub fn write_dump(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn graded_breaks_examples() {
        let y = graded_breaks(4, 1.0, 1.0).unwrap();
        assert_eq!(y, vec![0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0]);
        assert_eq!(graded_breaks(2, 1.0, 0.0).unwrap(), vec![0.0, 0.5, 1.0]);
        // (3/8)^(20/7) * 2 = 0.1213323124698083226615... (mpmath, 40 digits)
        let y = graded_breaks(8, 2.0, 1.3).unwrap();
        assert_relative_eq!(y[3], 0.121_332_312_469_808_32, max_relative = 1e-12);
        assert!(matches!(graded_breaks(4, 1.0, 2.0), Err(Error::InvalidGrading(_))));
        assert!(matches!(graded_breaks(4, 1.0, 2.5), Err(Error::InvalidGrading(_))));
    }

    #[test]
    fn increment_bound_uniform_is_one() {
        let n = 10;
        let y = graded_breaks(n, 3.0, 0.0).unwrap();
        let c = check_increment_bound(&y, 0.0, 3.0, 1.0 / n as f64);
        assert_relative_eq!(c, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn increment_bound_pinned_value() {
        // N = 8, beta = 1, L = 1: ratio_j = (2j+1)^2 / j^2, largest at j = 1.
        let y = graded_breaks(8, 1.0, 1.0).unwrap();
        let c = check_increment_bound(&y, 1.0, 1.0, 1.0 / 8.0);
        assert_relative_eq!(c, 9.0, max_relative = 1e-12);
    }

    #[test]
    fn triangulation_counts() {
        let t1 = triangulate_unit_square(1).unwrap();
        assert_eq!(t1.triangles.len(), 2);
        let t2 = triangulate_unit_square(2).unwrap();
        assert_eq!(t2.triangles.len(), 8);
        assert_eq!(t2.vertices.len(), 9);
        for m in [1, 3, 7] {
            let t = triangulate_unit_square(m).unwrap();
            let total: f64 = (0..t.triangles.len()).map(|i| t.area(i)).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-14);
            assert!(t.shape_regularity().is_finite());
        }
    }

    #[test]
    fn mesh_counts_1d() {
        let grading = GradedSpec::new(2, 1.0, 0.0, 2).unwrap();
        let mesh = build_mesh(&grading, 1).unwrap();
        assert_eq!(mesh.n_cells(), 4);
        assert_eq!(mesh.n_facets(), 12);
        let lateral = mesh
            .facets
            .iter()
            .filter(|f| matches!(f.kind, FacetKind::Lateral { .. }))
            .count();
        assert_eq!(lateral, 6);
    }

    #[test]
    fn mesh_counts_prisms() {
        let grading = GradedSpec::new(1, 1.0, 0.0, 1).unwrap();
        let mesh = build_mesh(&grading, 2).unwrap();
        assert_eq!(mesh.n_cells(), 2);
        let lateral: Vec<&Facet> = mesh
            .facets
            .iter()
            .filter(|f| matches!(f.kind, FacetKind::Lateral { .. }))
            .collect();
        assert_eq!(lateral.iter().filter(|f| !f.is_boundary()).count(), 1);
        assert_eq!(lateral.iter().filter(|f| f.is_boundary()).count(), 4);
        let horizontal = mesh.n_facets() - lateral.len();
        assert_eq!(horizontal, 4);
    }

    #[test]
    fn rectangle_signs_left_right_bottom_top() {
        let grading = GradedSpec::new(3, 2.0, 1.0, 3).unwrap();
        let mesh = build_mesh(&grading, 1).unwrap();
        for c in &mesh.cells {
            assert_eq!(c.signs, vec![-1.0, 1.0, -1.0, 1.0]);
        }
    }

    #[test]
    fn invalid_gradings_rejected() {
        assert!(GradedSpec::new(0, 1.0, 0.0, 1).is_err());
        assert!(GradedSpec::new(2, 0.0, 0.0, 1).is_err());
        assert!(matches!(GradedSpec::new(2, 1.0, 2.0, 1), Err(Error::InvalidGrading(_))));
        let grading = GradedSpec::new(4, 1.0, 0.3, 2).unwrap();
        assert!(grading.validate_for_alpha(0.6).is_err());
        assert!(grading.validate_for_alpha(0.8).is_ok());
        assert!(build_mesh(&grading, 3).is_err());
    }

    #[test]
    fn dump_has_one_line_per_entity() {
        let grading = GradedSpec::new(2, 1.0, 0.5, 1).unwrap();
        let mesh = build_mesh(&grading, 2).unwrap();
        let text = mesh.dump();
        assert_eq!(text.lines().count(), mesh.n_cells() + mesh.n_facets());
        assert!(text.lines().next().unwrap().starts_with("cell 0 0 0 "));
        assert!(text.contains("gamma_n"));
    }
}
