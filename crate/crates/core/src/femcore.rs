//! Lowest-order Raviart–Thomas spaces on rectangles and triangular prisms.
//!
//! Degrees of freedom are net normal fluxes through facets, measured along
//! the facet's global normal. The local basis function attached to a facet
//! carries unit net flux through that facet (global direction) and zero
//! through every other facet of the cell, so `∫_cell div φ_i` is exactly the
//! incidence sign of the facet.

use crate::error::{Error, Result};
use crate::mesh::{barycentric, BaseMesh, FacetKind, TensorMesh};
use crate::quadrature::{gauss_on, shifted_moments, slab_rule, triangle_collapsed_gauss, triangle_quad};
use crate::weight::Weight;

pub type VectorField<'a> = dyn Fn(&[f64; 3]) -> [f64; 3] + Sync + 'a;
pub type ScalarField<'a> = dyn Fn(&[f64; 3]) -> f64 + Sync + 'a;

/// One net flux per global facet.
#[derive(Debug, Clone, PartialEq)]
pub struct DofVector(pub Vec<f64>);

impl DofVector {
    pub fn zeros(n: usize) -> Self {
        DofVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Quadrature orders for facet and cell integrals of non-polynomial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Gauss points per base direction (collapsed rule on triangles).
    pub base_order: usize,
    /// Gauss points in `y` away from the origin.
    pub y_order: usize,
    /// Points in `y` on the first slab.
    pub first_slab_order: usize,
    /// Exponent `gamma ∈ (-1, 0]` of an integrand singularity `y^gamma` at
    /// `y = 0`, absorbed on the first slab. Zero means plain Gauss.
    pub first_slab_gamma: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            base_order: 8,
            y_order: 12,
            first_slab_order: 24,
            first_slab_gamma: 0.0,
        }
    }
}

impl QuadOptions {
    pub fn with_singularity(mut self, gamma: f64) -> Self {
        self.first_slab_gamma = gamma;
        self
    }

    /// Rule for plain `y` integrals over the given slab.
    ///
    /// Slabs away from the origin are split geometrically so that every
    /// panel has `hi/lo <= 4`; strongly graded meshes have slabs spanning
    /// several decades next to the singular first one.
    pub fn y_rule(&self, y0: f64, y1: f64) -> Result<Vec<(f64, f64)>> {
        if y0 == 0.0 {
            return Ok(slab_rule(y0, y1, self.first_slab_gamma, self.first_slab_order)?.iter().collect());
        }
        let panels = ((y1 / y0).ln() / 4f64.ln()).ceil().max(1.0) as usize;
        let ratio = (y1 / y0).powf(1.0 / panels as f64);
        let q = gauss_on(0.0, 1.0, self.y_order)?;
        let mut out = Vec::with_capacity(panels * q.len());
        let mut lo = y0;
        for k in 0..panels {
            let hi = if k + 1 == panels { y1 } else { lo * ratio };
            out.extend(q.mapped(lo, hi).iter());
            lo = hi;
        }
        Ok(out)
    }
}

/// Quadrature points and weights on base cell `b` in physical coordinates.
pub fn base_cell_rule(base: &BaseMesh, b: usize, order: usize) -> Result<Vec<([f64; 2], f64)>> {
    match base {
        BaseMesh::Interval(x) => Ok(gauss_on(x[b], x[b + 1], order)?
            .iter()
            .map(|(p, w)| ([p, 0.0], w))
            .collect()),
        BaseMesh::Triangles(t) => {
            let p = t.corners(b);
            let jac = 2.0 * t.area(b);
            let rule = triangle_collapsed_gauss(order)?;
            Ok(rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(r, &w)| (map_reference(&p, *r), w * jac))
                .collect())
        }
    }
}

fn map_reference(p: &[[f64; 2]; 3], r: [f64; 2]) -> [f64; 2] {
    [
        p[0][0] + r[0] * (p[1][0] - p[0][0]) + r[1] * (p[2][0] - p[0][0]),
        p[0][1] + r[0] * (p[1][1] - p[0][1]) + r[1] * (p[2][1] - p[0][1]),
    ]
}

/// Geometry of a single cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellShape {
    Rect { x0: f64, x1: f64 },
    Prism { corners: [[f64; 2]; 3], area: f64 },
}

/// A cell with its local RT0 basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RT0Cell {
    pub shape: CellShape,
    pub y0: f64,
    pub y1: f64,
    pub facets: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Dense symmetric local matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LocalMatrix {
    fn zeros(n: usize) -> Self {
        LocalMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Cholesky succeeds iff the matrix is symmetric positive definite.
    pub fn is_positive_definite(&self) -> bool {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return false;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        true
    }
}

impl RT0Cell {
    pub fn new(mesh: &TensorMesh, c: usize) -> Self {
        let cell = &mesh.cells[c];
        let (y0, y1) = mesh.slab_bounds(cell.slab);
        let shape = match &mesh.base {
            BaseMesh::Interval(x) => CellShape::Rect {
                x0: x[cell.base],
                x1: x[cell.base + 1],
            },
            BaseMesh::Triangles(t) => CellShape::Prism {
                corners: t.corners(cell.base),
                area: t.area(cell.base),
            },
        };
        RT0Cell {
            shape,
            y0,
            y1,
            facets: cell.facets.clone(),
            signs: cell.signs.clone(),
        }
    }

    pub fn n_local(&self) -> usize {
        self.facets.len()
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn base_measure(&self) -> f64 {
        match self.shape {
            CellShape::Rect { x0, x1 } => x1 - x0,
            CellShape::Prism { area, .. } => area,
        }
    }

    pub fn volume(&self) -> f64 {
        self.base_measure() * self.height()
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let tol = 1e-12 * (1.0 + self.y1.abs());
        if p[2] < self.y0 - tol || p[2] > self.y1 + tol {
            return false;
        }
        match self.shape {
            CellShape::Rect { x0, x1 } => p[0] >= x0 - 1e-12 && p[0] <= x1 + 1e-12,
            CellShape::Prism { corners, .. } => {
                barycentric(&corners, [p[0], p[1]]).iter().all(|&l| l >= -1e-12)
            }
        }
    }

    /// Basis function `i` (global orientation) at `p`.
    pub fn basis(&self, i: usize, p: &[f64; 3]) -> [f64; 3] {
        let hy = self.height();
        let n_lat = self.n_local() - 2;
        if i == n_lat {
            let scale = 1.0 / (self.base_measure() * hy);
            return [0.0, 0.0, (self.y1 - p[2]) * scale];
        }
        if i == n_lat + 1 {
            let scale = 1.0 / (self.base_measure() * hy);
            return [0.0, 0.0, (p[2] - self.y0) * scale];
        }
        match self.shape {
            CellShape::Rect { x0, x1 } => {
                let scale = 1.0 / ((x1 - x0) * hy);
                if i == 0 {
                    [(x1 - p[0]) * scale, 0.0, 0.0]
                } else {
                    [(p[0] - x0) * scale, 0.0, 0.0]
                }
            }
            CellShape::Prism { corners, area } => {
                // o_i (x - p_i) / (2|K|) has unit flux through the edge
                // opposite p_i along the global normal.
                let scale = self.signs[i] / (2.0 * area * hy);
                let q = corners[i];
                [(p[0] - q[0]) * scale, (p[1] - q[1]) * scale, 0.0]
            }
        }
    }

    /// Constant divergence of each basis function.
    pub fn basis_div(&self, i: usize) -> f64 {
        self.signs[i] / self.volume()
    }

    /// `∫_cell w φ_i·φ_j`, exact for power weights.
    pub fn local_mass(&self, w: &Weight) -> Result<LocalMatrix> {
        match w {
            Weight::Power(pw) => self.local_mass_power(pw.gamma),
            Weight::Callback { order, .. } => self.local_mass_quadrature(w, *order),
        }
    }

    fn local_mass_power(&self, gamma: f64) -> Result<LocalMatrix> {
        let n = self.n_local();
        let hy = self.height();
        let m = shifted_moments(self.y0, self.y1, gamma)?;
        let low = hy * hy * m[0] - 2.0 * hy * m[1] + m[2];
        let mixed = hy * m[1] - m[2];
        let high = m[2];
        let mut out = LocalMatrix::zeros(n);
        let base = self.base_measure();
        match self.shape {
            CellShape::Rect { x0, x1 } => {
                let hx = x1 - x0;
                // ∫ (x1 - x)² dx = hx³/3, ∫ (x1 - x)(x - x0) dx = hx³/6
                let c = hx / (3.0 * hy * hy);
                out.set_sym(0, 0, c * m[0]);
                out.set_sym(1, 1, c * m[0]);
                out.set_sym(0, 1, 0.5 * c * m[0]);
            }
            CellShape::Prism { corners, area } => {
                let rule = triangle_quad(4)?;
                let jac = 2.0 * area;
                for i in 0..3 {
                    for j in i..3 {
                        let mut s = 0.0;
                        for (r, &wq) in rule.points.iter().zip(&rule.weights) {
                            let x = map_reference(&corners, *r);
                            let (pi, pj) = (corners[i], corners[j]);
                            s += wq
                                * ((x[0] - pi[0]) * (x[0] - pj[0]) + (x[1] - pi[1]) * (x[1] - pj[1]));
                        }
                        let scale = self.signs[i] * self.signs[j] / (4.0 * area * area * hy * hy);
                        out.set_sym(i, j, s * jac * scale * m[0]);
                    }
                }
            }
        }
        let nl = n - 2;
        let c = base / (base * hy * base * hy);
        out.set_sym(nl, nl, c * low);
        out.set_sym(nl, nl + 1, c * mixed);
        out.set_sym(nl + 1, nl + 1, c * high);
        Ok(out)
    }

    fn local_mass_quadrature(&self, w: &Weight, order: usize) -> Result<LocalMatrix> {
        let n = self.n_local();
        let points = self.cell_rule(order, order)?;
        let mut out = LocalMatrix::zeros(n);
        for (p, wq) in points {
            let wv = w.eval(&p) * wq;
            let phi: Vec<[f64; 3]> = (0..n).map(|i| self.basis(i, &p)).collect();
            for i in 0..n {
                for j in i..n {
                    let v = out.get(i, j) + wv * dot(&phi[i], &phi[j]);
                    out.set_sym(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Tensor Gauss rule over the cell (collapsed rule on triangles).
    pub fn cell_rule(&self, base_order: usize, y_order: usize) -> Result<Vec<([f64; 3], f64)>> {
        let ys = gauss_on(self.y0, self.y1, y_order)?;
        self.cell_rule_with_y(base_order, &ys.iter().collect::<Vec<_>>())
    }

    pub fn cell_rule_with_y(&self, base_order: usize, ys: &[(f64, f64)]) -> Result<Vec<([f64; 3], f64)>> {
        let base: Vec<([f64; 2], f64)> = match self.shape {
            CellShape::Rect { x0, x1 } => gauss_on(x0, x1, base_order)?
                .iter()
                .map(|(x, w)| ([x, 0.0], w))
                .collect(),
            CellShape::Prism { corners, area } => {
                let rule = triangle_collapsed_gauss(base_order)?;
                rule.points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(r, &w)| (map_reference(&corners, *r), w * 2.0 * area))
                    .collect()
            }
        };
        let mut out = Vec::with_capacity(base.len() * ys.len());
        for &(y, wy) in ys {
            for &(x, wx) in &base {
                out.push(([x[0], x[1], y], wx * wy));
            }
        }
        Ok(out)
    }

    /// `(∫_cell div φ_i)_i` (the incidence signs) and the cell volume.
    pub fn local_div(&self) -> (Vec<f64>, f64) {
        (self.signs.clone(), self.volume())
    }

    /// Evaluates `Σ dof_i φ_i` at `p`.
    pub fn eval(&self, local_dofs: &[f64], p: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, &d) in local_dofs.iter().enumerate() {
            if d != 0.0 {
                let phi = self.basis(i, p);
                for k in 0..3 {
                    out[k] += d * phi[k];
                }
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `(∫_cell div φ_i)_i` and `|cell|`.
pub fn local_div(cell: &RT0Cell) -> (Vec<f64>, f64) {
    cell.local_div()
}

/// `∫_cell w φ_i·φ_j`.
pub fn local_mass(cell: &RT0Cell, w: &Weight) -> Result<LocalMatrix> {
    cell.local_mass(w)
}

/// Quadrature points on facet `f` in physical coordinates.
pub fn facet_rule(mesh: &TensorMesh, f: usize, opts: &QuadOptions) -> Result<Vec<([f64; 3], f64)>> {
    let facet = &mesh.facets[f];
    match facet.kind {
        FacetKind::Lateral { base_facet, slab } => {
            let (y0, y1) = mesh.slab_bounds(slab);
            let ys = opts.y_rule(y0, y1)?;
            let (a, b) = mesh.base_facet_points(base_facet);
            let base: Vec<([f64; 2], f64)> = if mesh.dim_base() == 1 {
                vec![(a, 1.0)]
            } else {
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                gauss_on(0.0, 1.0, opts.base_order)?
                    .iter()
                    .map(|(t, w)| ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * len))
                    .collect()
            };
            let mut out = Vec::with_capacity(base.len() * ys.len());
            for &(y, wy) in &ys {
                for &(x, wx) in &base {
                    out.push(([x[0], x[1], y], wx * wy));
                }
            }
            Ok(out)
        }
        FacetKind::Horizontal { base_cell, level } => {
            let y = mesh.y_breaks[level];
            Ok(base_cell_rule(&mesh.base, base_cell, opts.base_order)?
                .into_iter()
                .map(|(x, w)| ([x[0], x[1], y], w))
                .collect())
        }
    }
}

/// Raviart–Thomas interpolation: the DOF of facet `F` is `∫_F field·n_F`.
pub fn interpolate_rt(field: &VectorField, mesh: &TensorMesh, opts: &QuadOptions) -> Result<DofVector> {
    let mut dofs = Vec::with_capacity(mesh.n_facets());
    for (f, facet) in mesh.facets.iter().enumerate() {
        let mut s = 0.0;
        for (p, w) in facet_rule(mesh, f, opts)? {
            s += w * dot(&field(&p), &facet.normal);
        }
        dofs.push(s);
    }
    Ok(DofVector(dofs))
}

/// Cell averages `(1/|K|) ∫_K g`.
pub fn project_p0(g: &ScalarField, mesh: &TensorMesh, opts: &QuadOptions) -> Result<Vec<f64>> {
    (0..mesh.n_cells())
        .map(|c| {
            let cell = RT0Cell::new(mesh, c);
            let ys = opts.y_rule(cell.y0, cell.y1)?;
            let s: f64 = cell
                .cell_rule_with_y(opts.base_order, &ys)?
                .iter()
                .map(|(p, w)| w * g(p))
                .sum();
            Ok(s / cell.volume())
        })
        .collect()
}

/// Local DOFs of cell `c` gathered from a global vector.
pub fn local_dofs(mesh: &TensorMesh, dofs: &DofVector, c: usize) -> Vec<f64> {
    mesh.cells[c].facets.iter().map(|&f| dofs.0[f]).collect()
}

/// Value of the RT0 field with DOFs `dofs` at `point` inside cell `c`.
pub fn eval_rt(mesh: &TensorMesh, dofs: &DofVector, c: usize, point: &[f64; 3]) -> Result<[f64; 3]> {
    if dofs.len() != mesh.n_facets() {
        return Err(Error::MeshMismatch(format!(
            "{} DOFs for {} facets",
            dofs.len(),
            mesh.n_facets()
        )));
    }
    let cell = RT0Cell::new(mesh, c);
    if !cell.contains(point) {
        return Err(Error::PointOutsideCell { cell: c, point: *point });
    }
    Ok(cell.eval(&local_dofs(mesh, dofs, c), point))
}

/// Cell containing `point`, if any.
pub fn locate_cell(mesh: &TensorMesh, point: &[f64; 3]) -> Option<usize> {
    let y = point[2];
    let ys = &mesh.y_breaks;
    if y < 0.0 || y > mesh.height() {
        return None;
    }
    let slab = match ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
        Ok(j) => j.min(mesh.n_slabs() - 1),
        Err(j) => j - 1,
    };
    let x = [point[0], point[1]];
    let base = match &mesh.base {
        BaseMesh::Interval(breaks) => {
            if x[0] < 0.0 || x[0] > 1.0 {
                return None;
            }
            match breaks.binary_search_by(|v| v.partial_cmp(&x[0]).unwrap()) {
                Ok(i) => i.min(breaks.len() - 2),
                Err(i) => i - 1,
            }
        }
        BaseMesh::Triangles(_) => (0..mesh.n_base_cells()).find(|&b| mesh.base.contains(b, x))?,
    };
    Some(mesh.cell_index(base, slab))
}

/// Cellwise `div` of an RT0 field: `Σ_i sign_i dof_i / |K|`.
pub fn cell_divergence(mesh: &TensorMesh, dofs: &DofVector) -> Vec<f64> {
    mesh.cells
        .iter()
        .map(|cell| {
            cell.facets
                .iter()
                .zip(&cell.signs)
                .map(|(&f, &s)| s * dofs.0[f])
                .sum::<f64>()
                / cell.volume
        })
        .collect()
}
