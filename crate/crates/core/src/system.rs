//! Global saddle-point system of the mixed method and its solution.
//!
//! With `A_ij = ∫ a⁻¹ φ_i·φ_j` and `B_{K,F} = ∫_K div φ_F` (the incidence
//! sign), the discrete problem for the flux DOFs `x` and the cell values `u`
//! reads
//!
//! ```text
//!   A x - Bᵀ u = -G_D          (G_D)_F = ∫_F u_D φ_F·n on free boundary facets
//!   B x        = (∫_K g)_K
//! ```
//!
//! The unknown stored internally is `p = -u`, which makes the block matrix
//! `[[A, Bᵀ], [B, 0]]` symmetric. Facets with prescribed fluxes are removed
//! and their contributions moved to the right-hand side. Free boundary facets
//! carry the natural Dirichlet condition.

use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::femcore::{facet_rule, DofVector, QuadOptions, RT0Cell, ScalarField};
use crate::linalg::{minres, norm, BandCholesky, CsrMatrix};
use crate::mesh::TensorMesh;
use crate::quadrature::power_integral;
use crate::weight::Weight;

/// Prescribed net fluxes, keyed by global facet id.
pub type FixedDofs = BTreeMap<usize, f64>;

/// Bottom-facet fluxes `∫_F f` in the global `+y` direction.
///
/// This makes the discrete vertical flux at `y = 0⁺` equal to the facet
/// average of `f`. Callers scale `f` as their flux law requires.
pub fn neumann_face_data(f: &ScalarField, mesh: &TensorMesh, opts: &QuadOptions) -> Result<FixedDofs> {
    let mut out = FixedDofs::new();
    for id in mesh.bottom_facets() {
        let s: f64 = facet_rule(mesh, id, opts)?.iter().map(|(p, w)| w * f(p)).sum();
        out.insert(id, s);
    }
    Ok(out)
}

/// The eliminated block system for one mesh.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// Weighted mass matrix on free facets.
    pub a: CsrMatrix,
    /// Cell rows (pinned cell removed) by free facets, entries `±1`.
    pub b: CsrMatrix,
    pub rhs_flux: Vec<f64>,
    pub rhs_cell: Vec<f64>,
    pub fixed: FixedDofs,
    /// Free index to global facet id.
    pub free: Vec<usize>,
    /// Row of `b` to cell id.
    pub cell_rows: Vec<usize>,
    /// Cell whose value is pinned when every boundary facet is fixed.
    pub pinned: Option<usize>,
    pub n_facets: usize,
    pub cell_volumes: Vec<f64>,
    /// `∫_K g` for every cell.
    pub cell_source: Vec<f64>,
    /// `∫_K a` for every cell (the weight's reciprocal).
    pub cell_weight: Vec<f64>,
    /// All cells by all facets, entries `±1`.
    pub incidence: CsrMatrix,
}

impl SaddleSystem {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_volumes.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.free.len() + self.cell_rows.len()
    }

    /// The full block matrix `[[A, Bᵀ], [B, 0]]`.
    pub fn kkt_matrix(&self) -> CsrMatrix {
        let nf = self.n_free();
        let mut t = Vec::with_capacity(self.a.nnz() + 2 * self.b.nnz());
        for i in 0..nf {
            t.extend(self.a.row(i).map(|(j, v)| (i, j, v)));
        }
        for r in 0..self.cell_rows.len() {
            for (j, v) in self.b.row(r) {
                t.push((nf + r, j, v));
                t.push((j, nf + r, v));
            }
        }
        let n = self.n_unknowns();
        CsrMatrix::from_triplets(n, n, &t)
    }

    pub fn write_matrix(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.kkt_matrix().dump())?;
        Ok(())
    }
}

/// Assembles the system for weight `w = a⁻¹`, source `g`, prescribed fluxes
/// `fixed` and Dirichlet data `u_D` (zero when `None`) on free boundary facets.
pub fn assemble(
    mesh: &TensorMesh,
    w: &Weight,
    g: &ScalarField,
    fixed: &FixedDofs,
    dirichlet: Option<&ScalarField>,
    opts: &QuadOptions,
) -> Result<SaddleSystem> {
    let nfac = mesh.n_facets();
    let ncell = mesh.n_cells();
    if let Some((&f, _)) = fixed.iter().find(|(&f, _)| f >= nfac) {
        return Err(Error::MeshMismatch(format!("fixed facet {f} of {nfac}")));
    }

    let mut free_index = vec![usize::MAX; nfac];
    let mut free = Vec::with_capacity(nfac - fixed.len());
    for f in 0..nfac {
        if !fixed.contains_key(&f) {
            free_index[f] = free.len();
            free.push(f);
        }
    }
    let has_dirichlet = free.iter().any(|&f| mesh.facets[f].is_boundary());
    let pinned = if has_dirichlet { None } else { Some(0) };
    if free.is_empty() && ncell > 1 {
        return Err(Error::DegenerateSystem(
            "every facet flux is prescribed; cell values are undetermined".into(),
        ));
    }
    let mut row_of_cell = vec![usize::MAX; ncell];
    let mut cell_rows = Vec::with_capacity(ncell);
    for c in 0..ncell {
        if Some(c) != pinned {
            row_of_cell[c] = cell_rows.len();
            cell_rows.push(c);
        }
    }

    let nf = free.len();
    let mut a_trip = Vec::with_capacity(ncell * 25);
    let mut b_trip = Vec::with_capacity(ncell * 5);
    let mut inc_trip = Vec::with_capacity(ncell * 5);
    let mut rhs_flux = vec![0.0; nf];
    let mut rhs_cell = vec![0.0; cell_rows.len()];
    let mut cell_volumes = Vec::with_capacity(ncell);
    let mut cell_source = Vec::with_capacity(ncell);
    let mut cell_weight = Vec::with_capacity(ncell);
    let a_weight = w.reciprocal();

    for c in 0..ncell {
        let cell = RT0Cell::new(mesh, c);
        let m = cell.local_mass(w)?;
        let ys = opts.y_rule(cell.y0, cell.y1)?;
        let rule = cell.cell_rule_with_y(opts.base_order, &ys)?;
        let source: f64 = rule.iter().map(|(p, wq)| wq * g(p)).sum();
        let wint = match &a_weight {
            Weight::Power(pw) => cell.base_measure() * power_integral(cell.y0, cell.y1, pw.gamma, 0)?,
            Weight::Callback { .. } => rule.iter().map(|(p, wq)| wq * a_weight.eval(p)).sum(),
        };
        cell_volumes.push(cell.volume());
        cell_source.push(source);
        cell_weight.push(wint);

        let row = row_of_cell[c];
        if row != usize::MAX {
            rhs_cell[row] += source;
        }
        for (i, &fi) in cell.facets.iter().enumerate() {
            inc_trip.push((c, fi, cell.signs[i]));
            let ii = free_index[fi];
            if ii == usize::MAX {
                let d = fixed[&fi];
                if row != usize::MAX {
                    rhs_cell[row] -= cell.signs[i] * d;
                }
                continue;
            }
            if row != usize::MAX {
                b_trip.push((row, ii, cell.signs[i]));
            }
            for (j, &fj) in cell.facets.iter().enumerate() {
                let jj = free_index[fj];
                if jj == usize::MAX {
                    rhs_flux[ii] -= m.get(i, j) * fixed[&fj];
                } else {
                    a_trip.push((ii, jj, m.get(i, j)));
                }
            }
        }
    }

    for (ii, &f) in free.iter().enumerate() {
        let facet = &mesh.facets[f];
        if !facet.is_boundary() {
            continue;
        }
        if let Some(ud) = dirichlet {
            let mean = facet_rule(mesh, f, opts)?.iter().map(|(p, wq)| wq * ud(p)).sum::<f64>() / facet.area;
            // natural condition: the load -∫_F u_D φ_F·n moves to the right-hand side
            rhs_flux[ii] -= facet.outward_sign() * mean;
        }
    }

    if pinned.is_some() {
        let inflow: f64 = fixed
            .iter()
            .map(|(&f, &d)| mesh.facets[f].outward_sign() * d)
            .sum();
        let total: f64 = cell_source.iter().sum();
        let scale = total.abs().max(inflow.abs()).max(f64::MIN_POSITIVE);
        if (total - inflow).abs() > 1e-10 * scale {
            warn!(
                "pure Neumann data are incompatible: ∫g = {total:.6e}, net outflow = {inflow:.6e}"
            );
        }
    }

    Ok(SaddleSystem {
        a: CsrMatrix::from_triplets(nf, nf, &a_trip),
        b: CsrMatrix::from_triplets(cell_rows.len(), nf, &b_trip),
        rhs_flux,
        rhs_cell,
        fixed: fixed.clone(),
        free,
        cell_rows,
        pinned,
        n_facets: nfac,
        cell_volumes,
        cell_source,
        cell_weight,
        incidence: CsrMatrix::from_triplets(ncell, nfac, &inc_trip),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// Dense LU below `dense_threshold` unknowns, sparse LU above.
    #[default]
    Auto,
    Dense,
    /// Sparse LU with fill-reducing ordering and iterative refinement.
    SparseLu,
    Minres,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolveMethod::Auto),
            "dense" => Ok(SolveMethod::Dense),
            "sparse-lu" => Ok(SolveMethod::SparseLu),
            "minres" => Ok(SolveMethod::Minres),
            _ => Err(Error::Config(format!(
                "unknown solver '{s}' (expected auto, dense, sparse-lu or minres)"
            ))),
        }
    }
}

/// Cell-block preconditioner for MINRES.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellPreconditioner {
    /// Exact Cholesky of `B diag(A)⁻¹ Bᵀ`.
    SchurDiag,
    /// `diag(∫_K a)`.
    LumpedMass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub method: SolveMethod,
    pub precond: CellPreconditioner,
    pub max_iter: usize,
    pub dense_threshold: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-11,
            method: SolveMethod::Auto,
            precond: CellPreconditioner::SchurDiag,
            max_iter: 20_000,
            dense_threshold: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    /// Method actually used; never `Auto`.
    pub method: SolveMethod,
    pub iterations: usize,
    /// `‖K z - b‖ / ‖b‖` of the block system.
    pub residual: f64,
    /// `max_K |Σ sign·flux - ∫_K g|` over all cells.
    pub max_cell_imbalance: f64,
    pub unknowns: usize,
}

#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    /// Net fluxes on every facet, prescribed ones included.
    pub sigma: DofVector,
    /// One value per cell.
    pub u: Vec<f64>,
    pub stats: SolveStats,
}

impl DiscreteSolution {
    pub fn check_mesh(&self, mesh: &TensorMesh) -> Result<()> {
        if self.sigma.len() != mesh.n_facets() || self.u.len() != mesh.n_cells() {
            return Err(Error::MeshMismatch(format!(
                "solution has {} fluxes and {} cells, mesh has {} and {}",
                self.sigma.len(),
                self.u.len(),
                mesh.n_facets(),
                mesh.n_cells()
            )));
        }
        Ok(())
    }
}

/// The block operator together with the scalings used by the preconditioner:
/// `D = diag(A)^{-1/2}` and `E = diag(B D² Bᵀ)^{-1/2}`.
///
/// Iteration and residuals use the unscaled system. On strongly graded
/// meshes the mass diagonal spans many decades while the block system
/// itself stays well conditioned, so Jacobi scaling of the whole operator
/// would do more harm than good; it only enters through the preconditioner.
struct Kkt<'s> {
    sys: &'s SaddleSystem,
    d: Vec<f64>,
    e: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'s> Kkt<'s> {
    fn new(sys: &'s SaddleSystem) -> Result<Self> {
        let diag = sys.a.diagonal();
        if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateSystem(format!("mass matrix diagonal not positive at free DOF {i}")));
        }
        let d: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
        let e: Vec<f64> = (0..sys.b.n_rows)
            .map(|r| {
                let s: f64 = sys.b.row(r).map(|(j, v)| (v * d[j]).powi(2)).sum();
                if s > 0.0 {
                    1.0 / s.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut rhs = sys.rhs_flux.clone();
        rhs.extend_from_slice(&sys.rhs_cell);
        Ok(Kkt { sys, d, e, rhs })
    }

    fn nf(&self) -> usize {
        self.d.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nf = self.nf();
        let (xf, xc) = x.split_at(nf);
        let (yf, yc) = y.split_at_mut(nf);
        self.sys.a.matvec(xf, yf);
        let mut bt = vec![0.0; nf];
        self.sys.b.matvec_t(xc, &mut bt);
        for (a, b) in yf.iter_mut().zip(&bt) {
            *a += b;
        }
        self.sys.b.matvec(xf, yc);
    }

    /// `‖K z - b‖ / ‖b‖`.
    fn residual(&self, x: &[f64]) -> f64 {
        let bn = norm(&self.rhs);
        if bn == 0.0 {
            return norm(x);
        }
        let mut r = vec![0.0; x.len()];
        self.apply(x, &mut r);
        r.iter().zip(&self.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / bn
    }

    fn solve_dense(&self) -> Result<Vec<f64>> {
        let n = self.rhs.len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        let nf = self.nf();
        for i in 0..nf {
            for (j, v) in self.sys.a.row(i) {
                k[(i, j)] += v;
            }
        }
        for r in 0..self.sys.b.n_rows {
            for (j, v) in self.sys.b.row(r) {
                k[(nf + r, j)] += v;
                k[(j, nf + r)] += v;
            }
        }
        let rhs = DVector::from_column_slice(&self.rhs);
        let x = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateSystem("block matrix is singular".into()))?;
        Ok(x.as_slice().to_vec())
    }

    /// Sparse LU of the block matrix followed by iterative refinement; the
    /// iteration count is the number of refinement steps.
    fn solve_sparse(&self, tol: f64) -> Result<(Vec<f64>, usize, f64)> {
        let n = self.rhs.len();
        let nf = self.nf();
        let mut t = Vec::new();
        for i in 0..nf {
            for (j, v) in self.sys.a.row(i) {
                t.push(Triplet::new(i, j, v));
            }
        }
        for r in 0..self.sys.b.n_rows {
            for (j, v) in self.sys.b.row(r) {
                t.push(Triplet::new(nf + r, j, v));
                t.push(Triplet::new(j, nf + r, v));
            }
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::DegenerateSystem(format!("sparse block matrix: {e:?}")))?;
        let lu = k.sp_lu().map_err(|e| Error::DegenerateSystem(format!("sparse LU: {e:?}")))?;
        let solve = |r: &[f64]| -> Vec<f64> {
            let x = lu.solve(Mat::from_fn(n, 1, |i, _| r[i]));
            (0..n).map(|i| x[(i, 0)]).collect()
        };
        let mut z = solve(&self.rhs);
        let mut res = self.residual(&z);
        let mut steps = 0;
        while res > tol * 1e-2 && steps < 5 {
            let mut r = vec![0.0; n];
            self.apply(&z, &mut r);
            r.iter_mut().zip(&self.rhs).for_each(|(a, b)| *a = b - *a);
            let dz = solve(&r);
            let next: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
            let next_res = self.residual(&next);
            steps += 1;
            if next_res >= res {
                break;
            }
            z = next;
            res = next_res;
        }
        if !res.is_finite() {
            return Err(Error::DegenerateSystem("sparse LU produced a non-finite solution".into()));
        }
        Ok((z, steps, res))
    }

    fn cell_precond(&self, kind: CellPreconditioner) -> Result<CellBlock> {
        Ok(match kind {
            CellPreconditioner::SchurDiag => {
                // E B D (E B D)ᵀ has unit diagonal; factor that and undo E when applying
                let nr = self.sys.b.n_rows;
                let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nf()];
                for r in 0..nr {
                    for (j, v) in self.sys.b.row(r) {
                        cols[j].push((r, self.e[r] * v * self.d[j]));
                    }
                }
                let mut t = Vec::new();
                for col in &cols {
                    for &(r1, v1) in col {
                        for &(r2, v2) in col {
                            t.push((r1, r2, v1 * v2));
                        }
                    }
                }
                let mut s = CsrMatrix::from_triplets(nr, nr, &t);
                // strongly graded slabs can make the factorization lose definiteness
                // in floating point; a small diagonal shift keeps it usable
                let mut shift = 0.0;
                let chol = loop {
                    match BandCholesky::factor(&s) {
                        Ok(c) => break c,
                        Err(e) if shift < 1e-4 => {
                            let next = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
                            debug!("{e}; retrying with diagonal shift {next:e}");
                            let add = next - shift;
                            t.extend((0..nr).map(|r| (r, r, add)));
                            s = CsrMatrix::from_triplets(nr, nr, &t);
                            shift = next;
                        }
                        Err(e) => return Err(e),
                    }
                };
                debug!("Schur approximation: {nr} rows, bandwidth {}", chol.bandwidth());
                CellBlock::Chol(chol, self.e.clone())
            }
            CellPreconditioner::LumpedMass => CellBlock::Diag(
                self.sys.cell_rows.iter().map(|&c| 1.0 / self.sys.cell_weight[c]).collect(),
            ),
        })
    }
}

enum CellBlock {
    Chol(BandCholesky, Vec<f64>),
    Diag(Vec<f64>),
}

impl CellBlock {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            CellBlock::Chol(c, e) => {
                for i in 0..x.len() {
                    y[i] = e[i] * x[i];
                }
                c.solve_in_place(y);
                for i in 0..x.len() {
                    y[i] *= e[i];
                }
            }
            CellBlock::Diag(d) => {
                for i in 0..x.len() {
                    y[i] = d[i] * x[i];
                }
            }
        }
    }
}

/// Solves the system so that the relative residual `‖K z - b‖ / ‖b‖` of
/// the block system is at most `opts.tol`.
pub fn solve(sys: &SaddleSystem, opts: &SolveOptions) -> Result<DiscreteSolution> {
    if !(opts.tol >= 1e-14 && opts.tol <= 1e-6) {
        return Err(Error::Config(format!("solver tolerance {} outside [1e-14, 1e-6]", opts.tol)));
    }
    let n = sys.n_unknowns();
    let (z, method, iterations, residual) = if n == 0 {
        (Vec::new(), SolveMethod::Dense, 0, 0.0)
    } else {
        let sc = Kkt::new(sys)?;
        let method = match opts.method {
            SolveMethod::Auto if n < opts.dense_threshold => SolveMethod::Dense,
            SolveMethod::Auto => SolveMethod::SparseLu,
            m => m,
        };
        match method {
            SolveMethod::Minres => {
                let (z, it, res) = solve_minres(&sc, opts)?;
                (z, method, it, res)
            }
            _ => {
                let (z, it, res) = if method == SolveMethod::Dense {
                    let z = sc.solve_dense()?;
                    let res = sc.residual(&z);
                    (z, 0, res)
                } else {
                    sc.solve_sparse(opts.tol)?
                };
                if res > opts.tol {
                    return Err(Error::NotConverged {
                        iterations: it,
                        residual: res,
                        history: vec![res],
                    });
                }
                (z, method, it, res)
            }
        }
    };

    let nf = sys.n_free();
    let mut sigma = vec![0.0; sys.n_facets];
    for (i, &f) in sys.free.iter().enumerate() {
        sigma[f] = z[i];
    }
    for (&f, &d) in &sys.fixed {
        sigma[f] = d;
    }
    let mut u = vec![0.0; sys.n_cells()];
    for (r, &c) in sys.cell_rows.iter().enumerate() {
        u[c] = -z[nf + r];
    }
    if sys.pinned.is_some() {
        let vol: f64 = sys.cell_volumes.iter().sum();
        let mean = u.iter().zip(&sys.cell_volumes).map(|(a, b)| a * b).sum::<f64>() / vol;
        u.iter_mut().for_each(|v| *v -= mean);
    }

    let sigma = DofVector(sigma);
    let max_cell_imbalance = mass_balance(sys, &sigma).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(DiscreteSolution {
        sigma,
        u,
        stats: SolveStats {
            method,
            iterations,
            residual,
            max_cell_imbalance,
            unknowns: n,
        },
    })
}

fn solve_minres(sc: &Kkt, opts: &SolveOptions) -> Result<(Vec<f64>, usize, f64)> {
    let nf = sc.nf();
    let n = sc.rhs.len();
    let cell = sc.cell_precond(opts.precond)?;
    let precond = |x: &[f64], y: &mut [f64]| {
        for i in 0..nf {
            y[i] = sc.d[i] * sc.d[i] * x[i];
        }
        cell.apply(&x[nf..], &mut y[nf..]);
    };
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    let mut used = 0;
    let mut inner_tol = 0.5 * opts.tol;
    let mut res = sc.residual(&z);
    while res > opts.tol {
        if used >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: used,
                residual: res,
                history,
            });
        }
        let rep = minres(|x, y| sc.apply(x, y), precond, &sc.rhs, &mut z, inner_tol, opts.max_iter - used);
        used += rep.iterations;
        history.extend(rep.history);
        let new_res = sc.residual(&z);
        debug!("minres: {} iterations, true residual {new_res:.3e}", rep.iterations);
        if rep.iterations == 0 || (new_res > 0.5 * res && !rep.converged) {
            res = new_res;
            return Err(Error::NotConverged {
                iterations: used,
                residual: res,
                history,
            });
        }
        // the preconditioned estimate can be optimistic; tighten and restart
        if new_res > opts.tol {
            inner_tol = (inner_tol * opts.tol / new_res).max(1e-16);
        }
        res = new_res;
    }
    Ok((z, used, res))
}

/// Cellwise `Σ sign·flux - ∫_K g` over all cells.
pub fn mass_balance(sys: &SaddleSystem, sigma: &DofVector) -> Vec<f64> {
    let mut div = vec![0.0; sys.n_cells()];
    sys.incidence.matvec(&sigma.0, &mut div);
    div.iter().zip(&sys.cell_source).map(|(d, g)| d - g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femcore::{interpolate_rt, project_p0};
    use crate::mesh::{BaseMesh, FacetKind};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn rect_mesh(nx: usize, ys: Vec<f64>) -> TensorMesh {
        let xs = (0..=nx).map(|i| i as f64 / nx as f64).collect();
        TensorMesh::from_parts(BaseMesh::Interval(xs), ys).unwrap()
    }

    fn zero(_: &[f64; 3]) -> f64 {
        0.0
    }

    fn horizontal_boundary(mesh: &TensorMesh) -> Vec<usize> {
        (0..mesh.n_facets())
            .filter(|&f| mesh.facets[f].is_boundary() && matches!(mesh.facets[f].kind, FacetKind::Horizontal { .. }))
            .collect()
    }

    fn dense() -> SolveOptions {
        SolveOptions {
            method: SolveMethod::Dense,
            ..Default::default()
        }
    }

    fn iterative() -> SolveOptions {
        SolveOptions {
            method: SolveMethod::Minres,
            ..Default::default()
        }
    }

    #[test]
    fn neumann_data_examples() {
        let mesh = rect_mesh(8, vec![0.0, 0.5, 1.0]);
        let q = QuadOptions::default();
        let z = neumann_face_data(&zero, &mesh, &q).unwrap();
        assert_eq!(z.len(), 8);
        assert!(z.values().all(|&v| v == 0.0));
        let one = neumann_face_data(&|_: &[f64; 3]| 1.0, &mesh, &q).unwrap();
        assert!(one.values().all(|&v| (v - 0.125).abs() < 1e-15));

        let mesh = rect_mesh(4, vec![0.0, 1.0]);
        let s = neumann_face_data(&|p: &[f64; 3]| (PI * p[0]).sin(), &mesh, &q).unwrap();
        let first = *s.values().next().unwrap();
        assert_relative_eq!(first, (1.0 - (PI / 4.0).cos()) / PI, max_relative = 1e-13);
        assert!(s.values().all(|&v| v > 0.0));
    }

    #[test]
    fn single_cell_all_fixed_gives_zero() {
        let mesh = rect_mesh(1, vec![0.0, 1.0]);
        // uniform flow in x: in through the left, out through the right
        let mut fixed = FixedDofs::new();
        for f in 0..mesh.n_facets() {
            let n = mesh.facets[f].normal;
            fixed.insert(f, if n[0] != 0.0 { 1.0 } else { 0.0 });
        }
        let sys = assemble(&mesh, &Weight::constant(), &zero, &fixed, None, &QuadOptions::default()).unwrap();
        assert_eq!(sys.n_unknowns(), 0);
        let sol = solve(&sys, &dense()).unwrap();
        assert_eq!(sol.u, vec![0.0]);
        for (&f, &d) in &fixed {
            assert_eq!(sol.sigma.0[f], d);
        }
    }

    #[test]
    fn all_fixed_multi_cell_is_degenerate() {
        let mesh = rect_mesh(2, vec![0.0, 1.0]);
        let fixed: FixedDofs = (0..mesh.n_facets()).map(|f| (f, 0.0)).collect();
        let err = assemble(&mesh, &Weight::constant(), &zero, &fixed, None, &QuadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSystem(_)));
    }

    fn patch(mesh: &TensorMesh, opts: &SolveOptions) {
        let q = QuadOptions::default();
        let sigma = |_: &[f64; 3]| [-1.0, 0.0, 0.0];
        let pi = interpolate_rt(&sigma, mesh, &q).unwrap();
        let fixed: FixedDofs = horizontal_boundary(mesh).into_iter().map(|f| (f, pi.0[f])).collect();
        let ud = |p: &[f64; 3]| p[0];
        let sys = assemble(mesh, &Weight::constant(), &zero, &fixed, Some(&ud), &q).unwrap();
        assert!(sys.pinned.is_none());
        let sol = solve(&sys, opts).unwrap();
        for (a, b) in sol.sigma.0.iter().zip(&pi.0) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let pu = project_p0(&ud, mesh, &q).unwrap();
        for (a, b) in sol.u.iter().zip(&pu) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn patch_test_dense_and_iterative() {
        let mesh = rect_mesh(2, vec![0.0, 0.5, 1.0]);
        patch(&mesh, &dense());
        patch(&mesh, &iterative());
        let graded = rect_mesh(5, vec![0.0, 0.01, 0.1, 0.4, 1.0]);
        patch(&graded, &iterative());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = rect_mesh(3, vec![0.0, 0.2, 1.0]);
        let fixed: FixedDofs = mesh.bottom_facets().map(|f| (f, 0.0)).collect();
        let sys = assemble(&mesh, &Weight::power(0.4).unwrap(), &zero, &fixed, None, &QuadOptions::default()).unwrap();
        for opts in [dense(), iterative()] {
            let sol = solve(&sys, &opts).unwrap();
            assert!(sol.sigma.0.iter().all(|&v| v == 0.0));
            assert!(sol.u.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_cell_minres_matches_dense() {
        let mesh = rect_mesh(2, vec![0.0, 1.0]);
        let fixed: FixedDofs = mesh.bottom_facets().map(|f| (f, 0.3 + f as f64)).collect();
        let g = |p: &[f64; 3]| 1.0 + p[0] * p[2];
        let sys = assemble(&mesh, &Weight::power(-0.6).unwrap(), &g, &fixed, None, &QuadOptions::default()).unwrap();
        let a = solve(&sys, &dense()).unwrap();
        let b = solve(&sys, &iterative()).unwrap();
        let scale = a.sigma.0.iter().chain(&a.u).fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.sigma.0.iter().zip(&b.sigma.0).chain(a.u.iter().zip(&b.u)) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    /// Oracle: keep every facet as an unknown and impose the prescribed
    /// fluxes with Lagrange multipliers in one dense bordered system.
    #[test]
    fn elimination_matches_bordered_system() {
        let mesh = rect_mesh(2, vec![0.0, 0.3, 1.0]);
        let q = QuadOptions::default();
        let w = Weight::power(0.2).unwrap();
        let g = |p: &[f64; 3]| (p[0] + 2.0 * p[2]).cos();
        let mut fixed: FixedDofs = mesh.bottom_facets().map(|f| (f, 0.7 - 0.2 * f as f64)).collect();
        // one interior facet as well
        let interior = (0..mesh.n_facets()).find(|&f| !mesh.facets[f].is_boundary()).unwrap();
        fixed.insert(interior, -0.4);

        let reduced = solve(&assemble(&mesh, &w, &g, &fixed, None, &q).unwrap(), &dense()).unwrap();

        let full = assemble(&mesh, &w, &g, &FixedDofs::new(), None, &q).unwrap();
        let (nf, nc, nk) = (full.n_free(), full.cell_rows.len(), fixed.len());
        let n = nf + nc + nk;
        let mut k = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..nf {
            for (j, v) in full.a.row(i) {
                k[(i, j)] = v;
            }
            rhs[i] = full.rhs_flux[i];
        }
        for r in 0..nc {
            for (j, v) in full.b.row(r) {
                k[(nf + r, j)] = v;
                k[(j, nf + r)] = v;
            }
            rhs[nf + r] = full.rhs_cell[r];
        }
        for (m, (&f, &d)) in fixed.iter().enumerate() {
            let col = full.free.iter().position(|&x| x == f).unwrap();
            k[(nf + nc + m, col)] = 1.0;
            k[(col, nf + nc + m)] = 1.0;
            rhs[nf + nc + m] = d;
        }
        let z = k.lu().solve(&rhs).unwrap();
        for (i, &f) in full.free.iter().enumerate() {
            assert!((z[i] - reduced.sigma.0[f]).abs() < 1e-10);
        }
        for (r, &c) in full.cell_rows.iter().enumerate() {
            assert!((-z[nf + r] - reduced.u[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_in_the_data() {
        let mesh = rect_mesh(3, vec![0.0, 0.1, 0.5, 1.0]);
        let q = QuadOptions::default();
        let w = Weight::power(-0.2).unwrap();
        let f1: FixedDofs = mesh.bottom_facets().map(|f| (f, (f as f64).sin())).collect();
        let f2: FixedDofs = f1.iter().map(|(&k, &v)| (k, -3.5 * v)).collect();
        let g1 = |p: &[f64; 3]| p[0] - p[2];
        let g2 = |p: &[f64; 3]| -3.5 * (p[0] - p[2]);
        let s1 = solve(&assemble(&mesh, &w, &g1, &f1, None, &q).unwrap(), &dense()).unwrap();
        let s2 = solve(&assemble(&mesh, &w, &g2, &f2, None, &q).unwrap(), &dense()).unwrap();
        let scale = s1.sigma.0.iter().chain(&s1.u).fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in s1.sigma.0.iter().zip(&s2.sigma.0).chain(s1.u.iter().zip(&s2.u)) {
            assert!((-3.5 * a - b).abs() <= 1e-12 * 3.5 * scale);
        }
    }

    #[test]
    fn conservation_and_first_equation() {
        let mesh = rect_mesh(6, vec![0.0, 0.01, 0.05, 0.2, 0.6, 1.0]);
        let q = QuadOptions::default();
        let w = Weight::power(-0.6).unwrap();
        let fixed = neumann_face_data(&|p: &[f64; 3]| (PI * p[0]).sin(), &mesh, &q).unwrap();
        let sys = assemble(&mesh, &w, &zero, &fixed, None, &q).unwrap();
        let sol = solve(&sys, &iterative()).unwrap();
        let tol = SolveOptions::default().tol;
        let scale = sol.sigma.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sol.stats.max_cell_imbalance <= 10.0 * tol * scale);

        // A σ_free - Bᵀ u = rhs_flux on every free facet, in the equilibrated scale
        let d: Vec<f64> = sys.a.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
        let x: Vec<f64> = sys.free.iter().map(|&f| sol.sigma.0[f]).collect();
        let p: Vec<f64> = sys.cell_rows.iter().map(|&c| -sol.u[c]).collect();
        let mut ax = vec![0.0; x.len()];
        sys.a.matvec(&x, &mut ax);
        let mut bt = vec![0.0; x.len()];
        sys.b.matvec_t(&p, &mut bt);
        let bnorm = norm(&sys.rhs_flux.iter().zip(&d).map(|(r, s)| r * s).collect::<Vec<_>>())
            .max(norm(&sys.rhs_cell));
        for i in 0..x.len() {
            assert!((d[i] * (ax[i] + bt[i] - sys.rhs_flux[i])).abs() <= 10.0 * tol * bnorm);
        }
    }

    #[test]
    fn pure_neumann_recovers_mean_zero_solution() {
        let mesh = rect_mesh(4, vec![0.0, 0.25, 0.5, 1.0]);
        let q = QuadOptions::default();
        let sigma = |_: &[f64; 3]| [-1.0, 0.0, 0.0];
        let pi = interpolate_rt(&sigma, &mesh, &q).unwrap();
        let fixed: FixedDofs = (0..mesh.n_facets())
            .filter(|&f| mesh.facets[f].is_boundary())
            .map(|f| (f, pi.0[f]))
            .collect();
        let sys = assemble(&mesh, &Weight::constant(), &zero, &fixed, None, &q).unwrap();
        assert_eq!(sys.pinned, Some(0));
        for opts in [dense(), iterative()] {
            let sol = solve(&sys, &opts).unwrap();
            let pu = project_p0(&|p: &[f64; 3]| p[0] - 0.5, &mesh, &q).unwrap();
            for (a, b) in sol.u.iter().zip(&pu) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in sol.sigma.0.iter().zip(&pi.0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn incompatible_neumann_data_still_solves() {
        let mesh = rect_mesh(2, vec![0.0, 1.0]);
        let fixed: FixedDofs = (0..mesh.n_facets())
            .filter(|&f| mesh.facets[f].is_boundary())
            .map(|f| (f, 0.0))
            .collect();
        let sys = assemble(&mesh, &Weight::constant(), &|_: &[f64; 3]| 1.0, &fixed, None, &QuadOptions::default()).unwrap();
        assert!(sys.pinned.is_some());
        assert!(solve(&sys, &dense()).is_ok());
    }

    #[test]
    fn lumped_mass_preconditioner_converges() {
        let mesh = rect_mesh(4, vec![0.0, 0.1, 0.4, 1.0]);
        let q = QuadOptions::default();
        let fixed = neumann_face_data(&|p: &[f64; 3]| p[0], &mesh, &q).unwrap();
        let sys = assemble(&mesh, &Weight::power(0.2).unwrap(), &zero, &fixed, None, &q).unwrap();
        let a = solve(&sys, &dense()).unwrap();
        let b = solve(
            &sys,
            &SolveOptions {
                precond: CellPreconditioner::LumpedMass,
                ..iterative()
            },
        )
        .unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_lu_matches_dense_on_graded_mesh() {
        // first slab many decades thinner than the base cells
        let mesh = rect_mesh(6, vec![0.0, 1e-12, 1e-6, 1e-2, 0.3, 1.0]);
        let q = QuadOptions::default();
        let fixed = neumann_face_data(&|p: &[f64; 3]| (3.0 * p[0]).sin(), &mesh, &q).unwrap();
        let sys = assemble(&mesh, &Weight::power(-0.6).unwrap(), &zero, &fixed, None, &q).unwrap();
        let a = solve(&sys, &dense()).unwrap();
        let b = solve(
            &sys,
            &SolveOptions {
                method: SolveMethod::SparseLu,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(b.stats.method, SolveMethod::SparseLu);
        assert!(b.stats.residual <= 1e-11);
        let scale = a.sigma.0.iter().chain(&a.u).fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.sigma.0.iter().zip(&b.sigma.0).chain(a.u.iter().zip(&b.u)) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
        let auto = solve(
            &sys,
            &SolveOptions {
                dense_threshold: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(auto.stats.method, SolveMethod::SparseLu);
    }

    #[test]
    fn block_matrix_is_symmetric_and_dumps() {
        let mesh = rect_mesh(2, vec![0.0, 0.5, 1.0]);
        let fixed: FixedDofs = mesh.bottom_facets().map(|f| (f, 1.0)).collect();
        let sys = assemble(&mesh, &Weight::power(0.6).unwrap(), &zero, &fixed, None, &QuadOptions::default()).unwrap();
        let k = sys.kkt_matrix();
        assert!(k.is_symmetric(1e-14));
        assert!(sys.a.is_symmetric(1e-14));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kkt.txt");
        sys.write_matrix(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), k.nnz());
        for line in text.lines() {
            assert_eq!(line.split_whitespace().count(), 3);
        }
    }

    #[test]
    fn tolerance_out_of_range_is_rejected() {
        let mesh = rect_mesh(1, vec![0.0, 1.0]);
        let sys = assemble(&mesh, &Weight::constant(), &zero, &FixedDofs::new(), None, &QuadOptions::default()).unwrap();
        let opts = SolveOptions {
            tol: 1e-3,
            ..Default::default()
        };
        assert!(matches!(solve(&sys, &opts), Err(Error::Config(_))));
    }
}
