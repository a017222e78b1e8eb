//! Refinement studies: solve a sequence of levels, measure errors, fit rates.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::femcore::{interpolate_rt, DofVector, QuadOptions, RT0Cell};
use crate::fraclap::{
    error_sigma, error_u, error_v, postprocess_trace, setup_and_solve, trace_identity_rhs, ExtensionProblem,
};
use crate::mesh::{build_mesh, GradedSpec, TensorMesh};
use crate::system::{assemble, solve, DiscreteSolution, FixedDofs, SolveMethod, SolveOptions};
use crate::weight::Weight;

/// Errors below this are treated as exact and get no fitted rate.
pub const SLOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "fraclap-1d")]
    Fraclap1d,
    #[serde(rename = "fraclap-2d")]
    Fraclap2d,
    /// `-div(y^α ∇u) = 0` on `(0,1)²` with exact solution `u = x`.
    #[serde(rename = "general")]
    General,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fraclap-1d" => Ok(Mode::Fraclap1d),
            "fraclap-2d" => Ok(Mode::Fraclap2d),
            "general" => Ok(Mode::General),
            _ => Err(Error::Config(format!(
                "unknown mode '{s}' (expected fraclap-1d, fraclap-2d or general)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadOrders {
    pub base: usize,
    pub y: usize,
    pub first_slab: usize,
}

impl Default for QuadOrders {
    fn default() -> Self {
        let q = QuadOptions::default();
        QuadOrders {
            base: q.base_order,
            y: q.y_order,
            first_slab: q.first_slab_order,
        }
    }
}

fn default_c1() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    SolveOptions::default().tol
}

/// Flat JSON description of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: Mode,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    pub n_list: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub solver: SolveMethod,
    #[serde(default)]
    pub quad: QuadOrders,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write zero wall times so that repeated runs give identical files.
    #[serde(default)]
    pub deterministic: bool,
}

impl StudyConfig {
    pub fn new(mode: Mode, n_list: Vec<usize>) -> Self {
        StudyConfig {
            mode,
            s: None,
            alpha: None,
            c1: default_c1(),
            beta: None,
            n_list,
            tol: default_tol(),
            solver: SolveMethod::Auto,
            quad: QuadOrders::default(),
            out: None,
            deterministic: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// `α`, from whichever of `s` and `alpha` is given. General mode
    /// defaults to `α = 0`.
    pub fn alpha(&self) -> Result<f64> {
        let alpha = match (self.s, self.alpha) {
            (Some(s), None) => 1.0 - 2.0 * s,
            (None, Some(a)) => a,
            (Some(s), Some(a)) => {
                if (1.0 - 2.0 * s - a).abs() > 1e-12 {
                    return Err(Error::Config(format!("s = {s} and alpha = {a} disagree (alpha = 1 - 2s)")));
                }
                a
            }
            (None, None) if self.mode == Mode::General => 0.0,
            (None, None) => return Err(Error::Config("one of s or alpha is required".into())),
        };
        if !(alpha > -1.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in (-1, 1)")));
        }
        Ok(alpha)
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha()?;
        if self.n_list.len() < 2 {
            return Err(Error::Config("n_list needs at least two levels".into()));
        }
        if self.n_list[0] < 2 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "n_list must be strictly increasing and start at 2 or more, got {:?}",
                self.n_list
            )));
        }
        if !(self.tol >= 1e-14 && self.tol <= 1e-6) {
            return Err(Error::Config(format!("tol = {} outside [1e-14, 1e-6]", self.tol)));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::Config(format!("c1 must be positive, got {}", self.c1)));
        }
        let q = self.quad;
        if q.base == 0 || q.y == 0 || q.first_slab == 0 {
            return Err(Error::Config("quadrature orders must be positive".into()));
        }
        Ok(())
    }

    fn quad_options(&self, alpha: f64) -> QuadOptions {
        QuadOptions {
            base_order: self.quad.base,
            y_order: self.quad.y,
            first_slab_order: self.quad.first_slab,
            first_slab_gamma: 0.0,
        }
        .with_singularity(-alpha.abs())
    }

    fn solver(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            method: self.solver,
            ..Default::default()
        }
    }

    fn beta_for(&self, alpha: f64) -> Result<f64> {
        let beta = self.beta.unwrap_or(0.5 * (3.0 - alpha));
        if !(beta > 1.0 - alpha && beta < 2.0) {
            return Err(Error::Config(format!("beta = {beta} must lie in ({}, 2)", 1.0 - alpha)));
        }
        Ok(beta)
    }

    /// The fractional problem described by this configuration.
    pub fn problem(&self) -> Result<ExtensionProblem> {
        let dim = match self.mode {
            Mode::Fraclap1d => 1,
            Mode::Fraclap2d => 2,
            Mode::General => return Err(Error::Config("general mode has no fractional problem".into())),
        };
        let alpha = self.alpha()?;
        let mut p = ExtensionProblem::new((1.0 - alpha) / 2.0, dim)?
            .with_c1(self.c1)?
            .with_beta(self.beta_for(alpha)?)?;
        p.quad = self.quad_options(alpha);
        p.solver = self.solver();
        Ok(p)
    }
}

/// One refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub dof: usize,
    pub err_sigma: f64,
    pub err_u: f64,
    pub err_v: f64,
    pub seconds: f64,
}

impl StudyRow {
    pub fn errors(&self) -> [f64; 3] {
        [self.err_sigma, self.err_u, self.err_v]
    }
}

pub const ERROR_KINDS: [&str; 3] = ["err_sigma", "err_u", "err_v"];

/// Extra diagnostics of a level that do not go into the table.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    /// `max |v_h - ∫ y^{-α} σ_{h,y}| / max |∫ y^{-α} σ_{h,y}|` over base cells.
    pub trace_identity_gap: f64,
    pub solver_residual: f64,
    pub solver_iterations: usize,
    pub max_cell_imbalance: f64,
}

/// Fitted convergence rates, one entry per error kind. `None` when an
/// error is below [`SLOPE_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub global: [Option<f64>; 3],
    /// Between consecutive levels.
    pub pairwise: Vec<[Option<f64>; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub rates: Rates,
}

/// Least-squares slope of `log err` against `log h`.
pub fn fit_slope(h: &[f64], err: &[f64]) -> Option<f64> {
    if h.len() < 2 || h.len() != err.len() || err.iter().any(|&e| !(e >= SLOPE_FLOOR)) {
        return None;
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn fit_rates(rows: &[StudyRow]) -> Rates {
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let column = |k: usize| rows.iter().map(|r| r.errors()[k]).collect::<Vec<_>>();
    let global = [0, 1, 2].map(|k| fit_slope(&h, &column(k)));
    let pairwise = rows
        .windows(2)
        .map(|w| {
            let hh = [w[0].h, w[1].h];
            [0, 1, 2].map(|k| fit_slope(&hh, &[w[0].errors()[k], w[1].errors()[k]]))
        })
        .collect();
    Rates { global, pairwise }
}

/// Runs every level in order. With `out` set, the CSV is rewritten after
/// each level so that a failure leaves the completed levels on disk.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for &n in &config.n_list {
        let start = Instant::now();
        let (mut row, diag) = match config.mode {
            Mode::General => general_level(config, n)?,
            _ => fraclap_level(&config.problem()?, n)?,
        };
        row.seconds = if config.deterministic { 0.0 } else { start.elapsed().as_secs_f64() };
        info!(
            "N = {n}: err_sigma = {:.3e}, err_u = {:.3e}, err_v = {:.3e} ({:.2} s)",
            row.err_sigma, row.err_u, row.err_v, row.seconds
        );
        rows.push(row);
        diagnostics.push(diag);
        if let Some(path) = &config.out {
            emit_csv(&rows, path)?;
        }
    }
    let rates = fit_rates(&rows);
    Ok(StudyResult {
        rows,
        diagnostics,
        rates,
    })
}

/// Solves and measures one fractional level.
pub fn fraclap_level(prob: &ExtensionProblem, n: usize) -> Result<(StudyRow, LevelDiagnostics)> {
    let sol = setup_and_solve(prob, n)?;
    let trace = postprocess_trace(prob, &sol.mesh, &sol.discrete)?;
    let rhs = trace_identity_rhs(prob, &sol.mesh, &sol.discrete)?;
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = trace.values.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let row = StudyRow {
        n,
        h: 1.0 / n as f64,
        l: sol.height,
        dof: sol.mesh.n_facets() + sol.mesh.n_cells(),
        err_sigma: error_sigma(prob, &sol)?,
        err_u: error_u(prob, &sol)?,
        err_v: error_v(prob, &trace)?,
        seconds: 0.0,
    };
    Ok((row, diagnostics(&sol.discrete, if scale > 0.0 { gap / scale } else { gap })))
}

fn diagnostics(sol: &DiscreteSolution, gap: f64) -> LevelDiagnostics {
    LevelDiagnostics {
        trace_identity_gap: gap,
        solver_residual: sol.stats.residual,
        solver_iterations: sol.stats.iterations,
        max_cell_imbalance: sol.stats.max_cell_imbalance,
    }
}

/// The general test problem on `(0,1) × (0,1)`: `a = y^α`, `u = x`,
/// `σ = (-y^α, 0)`, `g = 0`, no flux through the bottom and `u = x` on the
/// rest of the boundary.
pub struct GeneralProblem {
    pub alpha: f64,
    pub quad: QuadOptions,
}

impl GeneralProblem {
    pub fn exact_u(&self, p: &[f64; 3]) -> f64 {
        p[0]
    }

    pub fn exact_sigma(&self, p: &[f64; 3]) -> [f64; 3] {
        let a = if self.alpha == 0.0 { 1.0 } else { p[2].powf(self.alpha) };
        [-a, 0.0, 0.0]
    }

    pub fn solve(&self, mesh: &TensorMesh, solver: &SolveOptions) -> Result<DiscreteSolution> {
        let fixed: FixedDofs = mesh.bottom_facets().map(|f| (f, 0.0)).collect();
        let w = Weight::power(-self.alpha)?;
        let ud = |p: &[f64; 3]| p[0];
        let sys = assemble(mesh, &w, &|_: &[f64; 3]| 0.0, &fixed, Some(&ud), &self.quad)?;
        solve(&sys, solver)
    }

    pub fn interpolant(&self, mesh: &TensorMesh) -> Result<DofVector> {
        interpolate_rt(&|p: &[f64; 3]| self.exact_sigma(p), mesh, &self.quad)
    }

    /// `‖σ - σ_h‖` in `L²_{y^{-α}}`.
    pub fn error_sigma(&self, mesh: &TensorMesh, dofs: &DofVector) -> Result<f64> {
        let mut total = 0.0;
        for c in 0..mesh.n_cells() {
            let cell = RT0Cell::new(mesh, c);
            let local: Vec<f64> = cell.facets.iter().map(|&f| dofs.0[f]).collect();
            let ys = self.quad.y_rule(cell.y0, cell.y1)?;
            for (p, w) in cell.cell_rule_with_y(self.quad.base_order, &ys)? {
                let e = self.exact_sigma(&p);
                let d = cell.eval(&local, &p);
                let d2 = (e[0] - d[0]).powi(2) + (e[1] - d[1]).powi(2) + (e[2] - d[2]).powi(2);
                total += w * p[2].powf(-self.alpha) * d2;
            }
        }
        Ok(total.sqrt())
    }

    /// `‖u - u_h‖` in `L²_{y^α}`.
    pub fn error_u(&self, mesh: &TensorMesh, u: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for c in 0..mesh.n_cells() {
            let cell = RT0Cell::new(mesh, c);
            let ys = self.quad.y_rule(cell.y0, cell.y1)?;
            for (p, w) in cell.cell_rule_with_y(self.quad.base_order, &ys)? {
                total += w * p[2].powf(self.alpha) * (self.exact_u(&p) - u[c]).powi(2);
            }
        }
        Ok(total.sqrt())
    }

    /// `‖u(·,0) - u_h(first slab)‖_{L²(Ω)}`.
    pub fn error_v(&self, mesh: &TensorMesh, u: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for b in 0..mesh.n_base_cells() {
            let uh = u[mesh.cell_index(b, 0)];
            for (x, w) in crate::femcore::base_cell_rule(&mesh.base, b, self.quad.base_order)? {
                total += w * (x[0] - uh).powi(2);
            }
        }
        Ok(total.sqrt())
    }
}

fn general_level(config: &StudyConfig, n: usize) -> Result<(StudyRow, LevelDiagnostics)> {
    let alpha = config.alpha()?;
    let prob = GeneralProblem {
        alpha,
        quad: config.quad_options(alpha),
    };
    let grading = GradedSpec::new(n, 1.0, config.beta_for(alpha)?, n)?;
    let mesh = build_mesh(&grading, 1)?;
    let sol = prob.solve(&mesh, &config.solver())?;
    let row = StudyRow {
        n,
        h: 1.0 / n as f64,
        l: 1.0,
        dof: mesh.n_facets() + mesh.n_cells(),
        err_sigma: prob.error_sigma(&mesh, &sol.sigma)?,
        err_u: prob.error_u(&mesh, &sol.u)?,
        err_v: prob.error_v(&mesh, &sol.u)?,
        seconds: 0.0,
    };
    Ok((row, diagnostics(&sol, 0.0)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes the table with header `N,h,L,dof,err_sigma,err_u,err_v,seconds`;
/// reals carry 17 significant digits.
pub fn emit_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["N", "h", "L", "dof", "err_sigma", "err_u", "err_v", "seconds"])
        .map_err(csv_err)?;
    for r in rows {
        let real = |v: f64| format!("{v:.16e}");
        w.write_record([
            r.n.to_string(),
            real(r.h),
            real(r.l),
            r.dof.to_string(),
            real(r.err_sigma),
            real(r.err_u),
            real(r.err_v),
            real(r.seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv(path: &Path) -> Result<Vec<StudyRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes one `log10(h) log10(err)` file per error kind, named
/// `<path>.<kind>.dat`. Zero errors have no logarithm and are skipped.
pub fn emit_plotdata(rows: &[StudyRow], path: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let mut written = Vec::new();
    for (k, kind) in ERROR_KINDS.iter().enumerate() {
        let lines: String = rows
            .iter()
            .filter(|r| r.errors()[k] > 0.0)
            .map(|r| format!("{:.16e} {:.16e}\n", r.h.log10(), r.errors()[k].log10()))
            .collect();
        if lines.is_empty() {
            continue;
        }
        let mut name = path.as_os_str().to_owned();
        name.push(format!(".{kind}.dat"));
        let file = PathBuf::from(name);
        fs::write(&file, lines)?;
        written.push(file);
    }
    Ok(written)
}
