//! The fractional Laplacian `(-Δ)^s v = f` on `Ω = (0,1)^n` through its
//! extension to the truncated cylinder `Ω × (0, L)`:
//!
//! ```text
//!   div(y^α ∇u) = 0            in Ω × (0, L),   α = 1 - 2s
//!   u = 0                      on ∂Ω × (0, L) and Ω × {L}
//!   -y^α ∂_y u → d_s f         as y → 0
//! ```
//!
//! The mixed unknown is `σ = -y^α ∇u`, discretised with RT0 on a mesh graded
//! towards `y = 0`, and the trace `v = u(·, 0)` is recovered by integrating
//! the vertical flux.
//!
//! For the sine data `f = λ₁^s X` with `X` the first Dirichlet eigenfunction
//! the exact extension is `u = φ(y) X(x)` with
//! `φ(y) = 2^{1-s}/Γ(s) (κy)^s K_s(κy)`, `κ = √λ₁`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::femcore::{base_cell_rule, local_dofs, DofVector, QuadOptions, RT0Cell};
use crate::mesh::{build_mesh, BaseMesh, GradedSpec, TensorMesh};
use crate::quadrature::shifted_moments;
use crate::specfun::{bessel_k, d_s_const, gamma_fn, FracOrder};
use crate::system::{assemble, neumann_face_data, solve, DiscreteSolution, SolveOptions};
use crate::weight::{ScalarFn, Weight};

/// Right-hand side `f` of the fractional problem.
#[derive(Clone)]
pub enum Rhs {
    /// `λ₁^s` times the first Dirichlet eigenfunction; the exact solution is known.
    Sine,
    /// Arbitrary `f(x)`; points are `[x1, x2, y]` with `y` ignored.
    Callback(ScalarFn),
}

impl std::fmt::Debug for Rhs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rhs::Sine => write!(f, "Sine"),
            Rhs::Callback(_) => write!(f, "Callback"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtensionProblem {
    pub order: FracOrder,
    /// Dimension of `Ω`, 1 or 2.
    pub dim: usize,
    pub rhs: Rhs,
    pub lambda1: f64,
    /// Truncation constant in `L = max(1, C1 |log h|)`.
    pub c1: f64,
    pub beta: f64,
    pub d_s: f64,
    pub quad: QuadOptions,
    pub solver: SolveOptions,
}

impl ExtensionProblem {
    /// Sine data, `C1 = 1` and `β` at the midpoint of `(1 - α, 2)`.
    pub fn new(s: f64, dim: usize) -> Result<Self> {
        let order = FracOrder::new(s)?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("base dimension must be 1 or 2, got {dim}")));
        }
        let alpha = order.alpha();
        Ok(ExtensionProblem {
            order,
            dim,
            rhs: Rhs::Sine,
            lambda1: dim as f64 * PI * PI,
            c1: 1.0,
            beta: 0.5 * ((1.0 - alpha) + 2.0),
            d_s: d_s_const(s)?,
            quad: QuadOptions::default().with_singularity(-alpha.abs()),
            solver: SolveOptions::default(),
        })
    }

    pub fn with_c1(mut self, c1: f64) -> Result<Self> {
        if !(c1 > 0.0) || !c1.is_finite() {
            return Err(Error::Config(format!("C1 must be positive, got {c1}")));
        }
        self.c1 = c1;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        let alpha = self.alpha();
        if !(beta > 1.0 - alpha && beta < 2.0) {
            return Err(Error::InvalidGrading(format!(
                "beta = {beta} must lie in (1 - alpha, 2) = ({}, 2)",
                1.0 - alpha
            )));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_rhs(mut self, rhs: Rhs) -> Self {
        self.rhs = rhs;
        self
    }

    pub fn s(&self) -> f64 {
        self.order.s()
    }

    pub fn alpha(&self) -> f64 {
        self.order.alpha()
    }

    /// `L = max(1, C1 log N)`.
    pub fn height(&self, n: usize) -> f64 {
        (self.c1 * (n as f64).ln()).max(1.0)
    }

    /// Graded mesh with `N` slabs and `N` base cells per unit length.
    pub fn mesh(&self, n: usize) -> Result<TensorMesh> {
        if n < 2 {
            return Err(Error::InvalidMesh(format!("refinement level N must be at least 2, got {n}")));
        }
        let grading = GradedSpec::new(n, self.height(n), self.beta, n)?;
        grading.validate_for_alpha(self.alpha())?;
        build_mesh(&grading, self.dim)
    }

    fn eigenfunction(&self, p: &[f64; 3]) -> f64 {
        let x = (PI * p[0]).sin();
        if self.dim == 1 {
            x
        } else {
            x * (PI * p[1]).sin()
        }
    }

    fn eigen_gradient(&self, p: &[f64; 3]) -> [f64; 2] {
        let (s1, c1) = (PI * p[0]).sin_cos();
        if self.dim == 1 {
            [PI * c1, 0.0]
        } else {
            let (s2, c2) = (PI * p[1]).sin_cos();
            [PI * c1 * s2, PI * s1 * c2]
        }
    }

    /// `f(x)`.
    pub fn f(&self, p: &[f64; 3]) -> f64 {
        match &self.rhs {
            Rhs::Sine => self.lambda1.powf(self.s()) * self.eigenfunction(p),
            Rhs::Callback(g) => g(p),
        }
    }

    fn require_exact(&self) -> Result<Profile> {
        match self.rhs {
            Rhs::Sine => Profile::new(self),
            Rhs::Callback(_) => Err(Error::Domain("no exact solution is known for callback data".into())),
        }
    }

    /// Exact `u` at `[x1, x2, y]`; at `y = 0` this is the limit `v(x)`.
    pub fn exact_u(&self, p: &[f64; 3]) -> Result<f64> {
        Ok(self.require_exact()?.phi(p[2])? * self.eigenfunction(p))
    }

    /// Exact `σ = -y^α ∇u`. At `y = 0` only the vertical component is
    /// defined; the horizontal ones are returned as zero there.
    pub fn exact_sigma(&self, p: &[f64; 3]) -> Result<[f64; 3]> {
        let prof = self.require_exact()?;
        Ok(prof.sigma(p[2])?.at(self, p))
    }

    /// Exact trace `v(x) = X(x)`.
    pub fn exact_v(&self, p: &[f64; 3]) -> Result<f64> {
        self.require_exact()?;
        Ok(self.eigenfunction(p))
    }
}

/// Values of the `y`-profiles at one height.
#[derive(Debug, Clone, Copy)]
struct ProfileAt {
    /// `φ(y)`
    phi: f64,
    /// `-y^α φ'(y)`
    flux: f64,
    /// `y^α`
    y_alpha: f64,
}

impl ProfileAt {
    fn at(&self, prob: &ExtensionProblem, p: &[f64; 3]) -> [f64; 3] {
        let g = prob.eigen_gradient(p);
        let lateral = -self.y_alpha * self.phi;
        [lateral * g[0], lateral * g[1], self.flux * prob.eigenfunction(p)]
    }
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    s: f64,
    alpha: f64,
    kappa: f64,
    c: f64,
    flux0: f64,
}

impl Profile {
    fn new(prob: &ExtensionProblem) -> Result<Self> {
        let s = prob.s();
        Ok(Profile {
            s,
            alpha: prob.alpha(),
            kappa: prob.lambda1.sqrt(),
            c: 2f64.powf(1.0 - s) / gamma_fn(s)?,
            flux0: prob.d_s * prob.lambda1.powf(s),
        })
    }

    fn phi(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(1.0);
        }
        let z = self.kappa * y;
        Ok(self.c * z.powf(self.s) * bessel_k(self.s, z)?)
    }

    fn sigma(&self, y: f64) -> Result<ProfileAt> {
        if y == 0.0 {
            return Ok(ProfileAt {
                phi: 1.0,
                flux: self.flux0,
                y_alpha: 0.0,
            });
        }
        let z = self.kappa * y;
        let zs = z.powf(self.s);
        let y_alpha = y.powf(self.alpha);
        // d/dz (z^s K_s) = -z^s K_{s-1} = -z^s K_{1-s}
        Ok(ProfileAt {
            phi: self.c * zs * bessel_k(self.s, z)?,
            flux: self.c * self.kappa * y_alpha * zs * bessel_k(1.0 - self.s, z)?,
            y_alpha,
        })
    }
}

/// A solved level.
#[derive(Debug, Clone)]
pub struct ExtensionSolution {
    pub n: usize,
    pub height: f64,
    pub mesh: TensorMesh,
    pub discrete: DiscreteSolution,
}

/// Builds the level-`N` mesh, applies the flux data `d_s f` at `y = 0` and solves.
pub fn setup_and_solve(prob: &ExtensionProblem, n: usize) -> Result<ExtensionSolution> {
    let mesh = prob.mesh(n)?;
    let d_s = prob.d_s;
    let fixed = neumann_face_data(&|p: &[f64; 3]| d_s * prob.f(p), &mesh, &prob.quad)?;
    let w = Weight::power(-prob.alpha())?;
    let sys = assemble(&mesh, &w, &|_: &[f64; 3]| 0.0, &fixed, None, &prob.quad)?;
    let discrete = solve(&sys, &prob.solver)?;
    Ok(ExtensionSolution {
        n,
        height: mesh.height(),
        mesh,
        discrete,
    })
}

/// Quadrature rules per base cell, shared by every slab.
fn base_rules(prob: &ExtensionProblem, mesh: &TensorMesh) -> Result<Vec<Vec<([f64; 2], f64)>>> {
    (0..mesh.n_base_cells())
        .map(|b| base_cell_rule(&mesh.base, b, prob.quad.base_order))
        .collect()
}

/// `(y, weight, profiles)` for every slab.
fn slab_profiles(prob: &ExtensionProblem, prof: &Profile, mesh: &TensorMesh) -> Result<Vec<Vec<(f64, f64, ProfileAt)>>> {
    (0..mesh.n_slabs())
        .map(|j| {
            let (y0, y1) = mesh.slab_bounds(j);
            prob.quad
                .y_rule(y0, y1)?
                .into_iter()
                .map(|(y, w)| Ok((y, w, prof.sigma(y)?)))
                .collect()
        })
        .collect()
}

/// `‖σ - σ_h‖` in `L²_{y^{-α}}` of the cylinder, for any RT0 field `σ_h`.
pub fn error_sigma_dofs(prob: &ExtensionProblem, mesh: &TensorMesh, dofs: &DofVector) -> Result<f64> {
    if dofs.len() != mesh.n_facets() {
        return Err(Error::MeshMismatch(format!("{} DOFs for {} facets", dofs.len(), mesh.n_facets())));
    }
    let prof = prob.require_exact()?;
    let bases = base_rules(prob, mesh)?;
    let slabs = slab_profiles(prob, &prof, mesh)?;
    let neg_alpha = -prob.alpha();
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let cell = RT0Cell::new(mesh, c);
        let local = local_dofs(mesh, dofs, c);
        let b = mesh.cells[c].base;
        for &(y, wy, at) in &slabs[mesh.cells[c].slab] {
            let wy = wy * y.powf(neg_alpha);
            for &(x, wx) in &bases[b] {
                let p = [x[0], x[1], y];
                let exact = at.at(prob, &p);
                let disc = cell.eval(&local, &p);
                let d2 = (exact[0] - disc[0]).powi(2) + (exact[1] - disc[1]).powi(2) + (exact[2] - disc[2]).powi(2);
                total += wy * wx * d2;
            }
        }
    }
    Ok(total.sqrt())
}

/// `‖u - u_h‖` in `L²_{y^α}` of the cylinder, for piecewise constant `u_h`.
pub fn error_u_cells(prob: &ExtensionProblem, mesh: &TensorMesh, u: &[f64]) -> Result<f64> {
    if u.len() != mesh.n_cells() {
        return Err(Error::MeshMismatch(format!("{} values for {} cells", u.len(), mesh.n_cells())));
    }
    let prof = prob.require_exact()?;
    let bases = base_rules(prob, mesh)?;
    let slabs = slab_profiles(prob, &prof, mesh)?;
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let b = mesh.cells[c].base;
        for &(_, wy, at) in &slabs[mesh.cells[c].slab] {
            let wy = wy * at.y_alpha;
            for &(x, wx) in &bases[b] {
                let exact = at.phi * prob.eigenfunction(&[x[0], x[1], 0.0]);
                total += wy * wx * (exact - u[c]).powi(2);
            }
        }
    }
    Ok(total.sqrt())
}

pub fn error_sigma(prob: &ExtensionProblem, sol: &ExtensionSolution) -> Result<f64> {
    error_sigma_dofs(prob, &sol.mesh, &sol.discrete.sigma)
}

pub fn error_u(prob: &ExtensionProblem, sol: &ExtensionSolution) -> Result<f64> {
    error_u_cells(prob, &sol.mesh, &sol.discrete.u)
}

/// Piecewise constant approximation of `v` on the base partition.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSolution {
    pub values: Vec<f64>,
    pub base: BaseMesh,
}

impl TraceSolution {
    /// Value at a point of `Ω`, or `None` outside.
    pub fn eval(&self, x: [f64; 2]) -> Option<f64> {
        match &self.base {
            BaseMesh::Interval(breaks) => {
                if !(x[0] >= 0.0 && x[0] <= 1.0) {
                    return None;
                }
                let i = breaks.partition_point(|&v| v <= x[0]).clamp(1, breaks.len() - 1) - 1;
                Some(self.values[i])
            }
            BaseMesh::Triangles(_) => (0..self.values.len())
                .find(|&b| self.base.contains(b, x))
                .map(|b| self.values[b]),
        }
    }
}

/// Vertical flux DOFs (bottom, top) of the column `b` in slab `j`.
fn vertical_dofs(mesh: &TensorMesh, sigma: &DofVector, b: usize, j: usize) -> (f64, f64) {
    (sigma.0[mesh.horizontal_facet(b, j)], sigma.0[mesh.horizontal_facet(b, j + 1)])
}

/// `v_h = u_h(first slab) + ∫_0^{y_1} τ_0 y^{-α} σ_{h,y} dy` with the hat
/// function `τ_0 = (y_1 - y)/y_1`, integrated in closed form.
pub fn postprocess_trace(prob: &ExtensionProblem, mesh: &TensorMesh, sol: &DiscreteSolution) -> Result<TraceSolution> {
    sol.check_mesh(mesh)?;
    let (_, y1) = mesh.slab_bounds(0);
    let [m0, m1, m2] = shifted_moments(0.0, y1, -prob.alpha())?;
    // ∫ y^{-α}(y1 - y)² and ∫ y^{-α}(y1 - y) y
    let i_bottom = y1 * y1 * m0 - 2.0 * y1 * m1 + m2;
    let i_top = y1 * m1 - m2;
    let values = (0..mesh.n_base_cells())
        .map(|b| {
            let (db, dt) = vertical_dofs(mesh, &sol.sigma, b, 0);
            let area = mesh.base.cell_measure(b);
            sol.u[mesh.cell_index(b, 0)] + (db * i_bottom + dt * i_top) / (area * y1 * y1)
        })
        .collect();
    Ok(TraceSolution {
        values,
        base: mesh.base.clone(),
    })
}

/// `∫_0^L y^{-α} σ_{h,y} dy` per base cell, the other side of the trace identity.
pub fn trace_identity_rhs(prob: &ExtensionProblem, mesh: &TensorMesh, sol: &DiscreteSolution) -> Result<Vec<f64>> {
    sol.check_mesh(mesh)?;
    let moments = (0..mesh.n_slabs())
        .map(|j| {
            let (y0, y1) = mesh.slab_bounds(j);
            Ok((y1 - y0, shifted_moments(y0, y1, -prob.alpha())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..mesh.n_base_cells())
        .map(|b| {
            let area = mesh.base.cell_measure(b);
            moments
                .iter()
                .enumerate()
                .map(|(j, &(hy, [m0, m1, _]))| {
                    let (db, dt) = vertical_dofs(mesh, &sol.sigma, b, j);
                    (db * (hy * m0 - m1) + dt * m1) / (area * hy)
                })
                .sum()
        })
        .collect())
}

/// `‖v - v_h‖_{L²(Ω)}`.
pub fn error_v(prob: &ExtensionProblem, trace: &TraceSolution) -> Result<f64> {
    prob.require_exact()?;
    let mut total = 0.0;
    for (b, &v) in trace.values.iter().enumerate() {
        for (x, w) in base_cell_rule(&trace.base, b, prob.quad.base_order)? {
            total += w * (prob.eigenfunction(&[x[0], x[1], 0.0]) - v).powi(2);
        }
    }
    Ok(total.sqrt())
}
