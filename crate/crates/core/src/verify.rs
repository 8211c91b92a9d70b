//! Manufactured solutions, error norms, convergence studies and the
//! property battery.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{
    assemble_convection, assemble_mass, assemble_stokes_blocks, assemble_weighted_stiffness, AssemblyOptions,
    Coefficient, FlowSolution, ScalarPotentialSolution,
};
use crate::driver::{solve_fhd, ElementPair, FhdConfig, FhdProblem, FhdSolution, FlowSource, PotentialSource, VectorFn};
use crate::error::{FhdError, Result};
use crate::fespace::{interpolate_edge, interpolate_scalar, FEField, FESpace};
use crate::linalg::SpdFactor;
use crate::material::{alpha_raw, beta_raw, magnetization, MaterialParams};
use crate::mesh::Mesh2D;
use crate::refelem::{quadrature, ElementFamily};
use crate::Point;

/// Degree of the quadrature used for every error integral.
pub const ERROR_QUAD_DEGREE: usize = 8;
const RELATIVE_GUARD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Potential {
    /// `(x^2 - x)(y^2 - y)`.
    Polynomial,
    /// `0.1 sin(pi x) sin(pi y)`.
    Trigonometric,
}

/// Exact fields of a manufactured problem. The velocity is
/// `(sin pi y, sin pi x)` and the pressure `60 x^2 y - 20 y^3 - 5` in both
/// cases; only the potential changes.
#[derive(Debug, Clone, Serialize)]
pub struct ManufacturedCase {
    pub name: String,
    pub potential: Potential,
    pub params: MaterialParams,
    /// Mean of `p - mu0 psi`, subtracted so the exact `p~` has zero mean.
    pub ptilde_mean: f64,
}

impl ManufacturedCase {
    pub fn case_2d_l0() -> Self {
        Self::new("2d-l0", Potential::Polynomial, MaterialParams::default())
    }

    pub fn case_2d_l1() -> Self {
        Self::new("2d-l1", Potential::Trigonometric, MaterialParams::default())
    }

    pub fn for_pair(pair: ElementPair) -> Self {
        match pair {
            ElementPair::L0 => Self::case_2d_l0(),
            ElementPair::L1 => Self::case_2d_l1(),
        }
    }

    pub fn new(name: &str, potential: Potential, params: MaterialParams) -> Self {
        let mut case = Self {
            name: name.into(),
            potential,
            params,
            ptilde_mean: 0.0,
        };
        case.ptilde_mean = case.mean_of(|c, x| c.p(x) - c.params.mu0 * c.psi(x));
        case
    }

    pub fn with_params(&self, params: MaterialParams) -> Self {
        Self::new(&self.name, self.potential, params)
    }

    fn mean_of(&self, f: impl Fn(&Self, Point) -> f64) -> f64 {
        let mesh = Mesh2D::build_uniform_square(64).expect("fixed level");
        let q = quadrature(ERROR_QUAD_DEGREE).expect("stocked rule");
        let mut s = 0.0;
        for t in 0..mesh.n_triangles() {
            let geo = mesh.affine(t);
            for (&b, &w) in q.points.iter().zip(&q.weights) {
                s += w * geo.det.abs() * f(self, geo.map_bary(b));
            }
        }
        s
    }

    pub fn phi(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self.potential {
            Potential::Polynomial => (x * x - x) * (y * y - y),
            Potential::Trigonometric => 0.1 * (PI * x).sin() * (PI * y).sin(),
        }
    }

    pub fn grad_phi(&self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self.potential {
            Potential::Polynomial => [(2.0 * x - 1.0) * (y * y - y), (x * x - x) * (2.0 * y - 1.0)],
            Potential::Trigonometric => [
                0.1 * PI * (PI * x).cos() * (PI * y).sin(),
                0.1 * PI * (PI * x).sin() * (PI * y).cos(),
            ],
        }
    }

    pub fn hess_phi(&self, p: Point) -> [[f64; 2]; 2] {
        let [x, y] = p;
        match self.potential {
            Potential::Polynomial => {
                let c = (2.0 * x - 1.0) * (2.0 * y - 1.0);
                [[2.0 * (y * y - y), c], [c, 2.0 * (x * x - x)]]
            }
            Potential::Trigonometric => {
                let k = 0.1 * PI * PI;
                let ss = (PI * x).sin() * (PI * y).sin();
                let cc = (PI * x).cos() * (PI * y).cos();
                [[-k * ss, k * cc], [k * cc, -k * ss]]
            }
        }
    }

    pub fn h(&self, p: Point) -> [f64; 2] {
        self.grad_phi(p)
    }

    pub fn m(&self, p: Point) -> [f64; 2] {
        magnetization(self.h(p), &self.params)
    }

    pub fn psi(&self, p: Point) -> f64 {
        let h = self.h(p);
        beta_raw(h[0].hypot(h[1]), &self.params)
    }

    /// `grad psi = Hess(phi) M`.
    pub fn grad_psi(&self, p: Point) -> [f64; 2] {
        let hs = self.hess_phi(p);
        let m = self.m(p);
        [hs[0][0] * m[0] + hs[0][1] * m[1], hs[1][0] * m[0] + hs[1][1] * m[1]]
    }

    pub fn b(&self, p: Point) -> [f64; 2] {
        let (h, m) = (self.h(p), self.m(p));
        [self.params.mu0 * (h[0] + m[0]), self.params.mu0 * (h[1] + m[1])]
    }

    pub fn velocity(&self, p: Point) -> [f64; 2] {
        [(PI * p[1]).sin(), (PI * p[0]).sin()]
    }

    pub fn p(&self, p: Point) -> f64 {
        let [x, y] = p;
        60.0 * x * x * y - 20.0 * y * y * y - 5.0
    }

    pub fn grad_p(&self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        [120.0 * x * y, 60.0 * x * x - 60.0 * y * y]
    }

    pub fn ptilde(&self, p: Point) -> f64 {
        self.p(p) - self.params.mu0 * self.psi(p) - self.ptilde_mean
    }

    /// Solver configuration for this case on level `n`.
    pub fn config(&self, n: usize, pair: ElementPair) -> FhdConfig {
        let mut c = FhdConfig::new(n, pair, self.params);
        let shared = Arc::new(self.clone());
        c.potential = PotentialSource::Manufactured(shared.clone());
        c.flow = FlowSource::Manufactured(shared);
        c
    }
}

impl ScalarPotentialSolution for ManufacturedCase {
    fn grad_phi(&self, p: Point) -> [f64; 2] {
        ManufacturedCase::grad_phi(self, p)
    }
}

impl FlowSolution for ManufacturedCase {
    fn u(&self, p: Point) -> [f64; 2] {
        self.velocity(p)
    }

    fn grad_u(&self, p: Point) -> [[f64; 2]; 2] {
        [[0.0, PI * (PI * p[1]).cos()], [PI * (PI * p[0]).cos(), 0.0]]
    }

    fn laplacian_u(&self, p: Point) -> [f64; 2] {
        let u = self.velocity(p);
        [-PI * PI * u[0], -PI * PI * u[1]]
    }

    fn grad_ptilde(&self, p: Point) -> [f64; 2] {
        let (gp, gs) = (self.grad_p(p), self.grad_psi(p));
        [gp[0] - self.params.mu0 * gs[0], gp[1] - self.params.mu0 * gs[1]]
    }
}

/// An error integral together with the matching norm of the exact field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorNorm {
    pub absolute: f64,
    pub exact_norm: f64,
    /// `absolute / exact_norm`, or `absolute` when the exact norm is below 1e-14.
    pub relative: f64,
    pub absolute_fallback: bool,
}

impl ErrorNorm {
    fn from_squares(err_sq: f64, exact_sq: f64) -> Self {
        let absolute = err_sq.max(0.0).sqrt();
        let exact_norm = exact_sq.max(0.0).sqrt();
        let fallback = exact_norm < RELATIVE_GUARD;
        Self {
            absolute,
            exact_norm,
            relative: if fallback { absolute } else { absolute / exact_norm },
            absolute_fallback: fallback,
        }
    }
}

// Sums (error^2, exact^2) over the mesh of `field`.
fn integrate_pair(field: &FEField, f: impl Fn(&crate::fespace::FieldValue, Point) -> (f64, f64)) -> (f64, f64) {
    let space = field.space();
    let mesh = space.mesh();
    let q = quadrature(ERROR_QUAD_DEGREE).expect("stocked rule");
    let (mut e, mut x) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let geo = mesh.affine(t);
        for (&b, &w) in q.points.iter().zip(&q.weights) {
            let v = field.eval_with(&space.basis(t, &geo, b));
            let (de, dx) = f(&v, geo.map_bary(b));
            e += w * geo.det.abs() * de;
            x += w * geo.det.abs() * dx;
        }
    }
    (e, x)
}

fn sq2(a: [f64; 2]) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

fn diff2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// `||grad(f - f_h)||` for a scalar field.
pub fn error_h1_semi(field: &FEField, grad: &dyn Fn(Point) -> [f64; 2]) -> ErrorNorm {
    let (e, x) = integrate_pair(field, |v, p| {
        let g = grad(p);
        (sq2(diff2(g, v.grad[0])), sq2(g))
    });
    ErrorNorm::from_squares(e, x)
}

/// `||f - f_h||` for scalar (first component of `f`) or vector fields.
pub fn error_l2(field: &FEField, f: &dyn Fn(Point) -> [f64; 2]) -> ErrorNorm {
    let (e, x) = integrate_pair(field, |v, p| {
        let ex = f(p);
        (sq2(diff2(ex, v.value)), sq2(ex))
    });
    ErrorNorm::from_squares(e, x)
}

/// `||curl(v - v_h)||` for an edge field.
pub fn error_curl(field: &FEField, curl: &dyn Fn(Point) -> f64) -> ErrorNorm {
    let (e, x) = integrate_pair(field, |v, p| {
        let c = curl(p);
        ((c - v.curl).powi(2), c * c)
    });
    ErrorNorm::from_squares(e, x)
}

/// Graph-norm error `(||v - v_h||^2 + ||curl(v - v_h)||^2)^{1/2}` of an edge field.
pub fn error_hcurl(field: &FEField, v: &dyn Fn(Point) -> [f64; 2], curl: &dyn Fn(Point) -> f64) -> ErrorNorm {
    let (e, x) = integrate_pair(field, |fv, p| {
        let (ex, c) = (v(p), curl(p));
        (sq2(diff2(ex, fv.value)) + (c - fv.curl).powi(2), sq2(ex) + c * c)
    });
    ErrorNorm::from_squares(e, x)
}

/// Element-wise gradient error `(sum_K ||grad(u - u_h)||_K^2)^{1/2}` of a
/// two-component field.
pub fn error_h1_broken(field: &FEField, grad_u: &dyn Fn(Point) -> [[f64; 2]; 2]) -> ErrorNorm {
    let (e, x) = integrate_pair(field, |v, p| {
        let g = grad_u(p);
        (
            sq2(diff2(g[0], v.grad[0])) + sq2(diff2(g[1], v.grad[1])),
            sq2(g[0]) + sq2(g[1]),
        )
    });
    ErrorNorm::from_squares(e, x)
}

/// Largest `|curl v_h|` over the error quadrature points of every element.
pub fn curl_inf(field: &FEField) -> f64 {
    let space = field.space();
    let mesh = space.mesh();
    let q = quadrature(ERROR_QUAD_DEGREE).expect("stocked rule");
    let mut m: f64 = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = mesh.affine(t);
        for &b in &q.points {
            m = m.max(field.eval_with(&space.basis(t, &geo, b)).curl.abs());
        }
    }
    m
}

/// Pairwise orders `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` and the
/// least-squares slope of `log e` against `log h`.
pub fn convergence_orders(errors: &[f64], hs: &[f64]) -> Result<(Vec<f64>, f64)> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(FhdError::Verify("orders need at least two matching levels".into()));
    }
    if errors.iter().chain(hs).any(|&v| !(v > 0.0)) {
        return Err(FhdError::Verify("orders need positive errors and mesh sizes".into()));
    }
    let pairwise = errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok((pairwise, sxy / sxx))
}

pub const ERROR_COLUMNS: [&str; 5] = ["err_phi_h1", "err_H_hcurl", "err_M_l2", "err_u_h1h", "err_p_l2"];

/// Relative errors of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub err_phi_h1: f64,
    #[serde(rename = "err_H_hcurl")]
    pub err_h_hcurl: f64,
    #[serde(rename = "err_M_l2")]
    pub err_m_l2: f64,
    pub err_u_h1h: f64,
    pub err_p_l2: f64,
    pub curl_inf: f64,
    /// Modified pressure error, for reference.
    pub err_ptilde_l2: f64,
}

impl StudyRow {
    pub fn errors(&self) -> [f64; 5] {
        [self.err_phi_h1, self.err_h_hcurl, self.err_m_l2, self.err_u_h1h, self.err_p_l2]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDiagnostics {
    pub n: usize,
    pub diagnostics: crate::driver::Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Orders {
    /// `pairwise[c][i]` is the order of column `c` between levels `i` and `i+1`.
    pub pairwise: Vec<Vec<f64>>,
    pub lsq: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub case: String,
    pub pair: ElementPair,
    pub rows: Vec<StudyRow>,
    pub orders: Option<Orders>,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// Level and message of the first failed solve, if any.
    pub failed: Option<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudySettings {
    pub picard_iters: usize,
    pub oseen_iters: usize,
    pub quad_bump: usize,
    /// Solve the levels on separate threads; rows are still ordered by level.
    pub parallel: bool,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            picard_iters: 2,
            oseen_iters: 2,
            quad_bump: 2,
            parallel: false,
        }
    }
}

/// Relative errors of a solution against the exact fields of `case`.
pub fn measure(case: &ManufacturedCase, sol: &FhdSolution) -> StudyRow {
    let mesh = sol.phi.space().mesh();
    let phi = error_h1_semi(&sol.phi, &|x| case.grad_phi(x));
    let h = error_hcurl(&sol.h, &|x| case.h(x), &|_| 0.0);
    let m = error_l2(&sol.m, &|x| case.m(x));
    let u_semi = error_h1_broken(&sol.u, &|x| case.grad_u(x));
    let u_l2 = error_l2(&sol.u, &|x| case.velocity(x));
    let p = error_l2(&sol.p, &|x| [case.p(x), 0.0]);
    let pt = error_l2(&sol.ptilde, &|x| [case.ptilde(x), 0.0]);
    // full H1 error over the full H1 norm
    let u = ErrorNorm::from_squares(
        u_semi.absolute.powi(2) + u_l2.absolute.powi(2),
        u_semi.exact_norm.powi(2) + u_l2.exact_norm.powi(2),
    );
    StudyRow {
        n: mesh.n_vertices().isqrt() - 1,
        h: mesh.mesh_size(),
        err_phi_h1: phi.relative,
        err_h_hcurl: h.relative,
        err_m_l2: m.relative,
        err_u_h1h: u.relative,
        err_p_l2: p.relative,
        curl_inf: curl_inf(&sol.h),
        err_ptilde_l2: pt.relative,
    }
}

fn solve_level(case: &ManufacturedCase, pair: ElementPair, n: usize, s: &StudySettings) -> Result<(StudyRow, LevelDiagnostics)> {
    let mut config = case.config(n, pair);
    config.picard_iters = s.picard_iters;
    config.oseen_iters = s.oseen_iters;
    config.quad_bump = s.quad_bump;
    let sol = solve_fhd(&config)?;
    let row = measure(case, &sol);
    Ok((
        row,
        LevelDiagnostics {
            n,
            diagnostics: sol.diagnostics,
        },
    ))
}

/// One full solve per level. Stops at the first failure and returns the
/// rows gathered so far.
pub fn run_convergence_study(
    case: &ManufacturedCase,
    pair: ElementPair,
    levels: &[usize],
    settings: &StudySettings,
) -> Result<StudyReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FhdError::Verify("levels must be nonempty and ascending".into()));
    }
    let results: Vec<Result<(StudyRow, LevelDiagnostics)>> = if settings.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = levels
                .iter()
                .map(|&n| scope.spawn(move || solve_level(case, pair, n, settings)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(FhdError::Verify("level thread panicked".into()))))
                .collect()
        })
    } else {
        let mut out = Vec::new();
        for &n in levels {
            let r = solve_level(case, pair, n, settings);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    };
    let mut report = StudyReport {
        case: case.name.clone(),
        pair,
        rows: Vec::new(),
        orders: None,
        diagnostics: Vec::new(),
        failed: None,
    };
    for (r, &n) in results.into_iter().zip(levels) {
        match r {
            Ok((row, diag)) => {
                report.rows.push(row);
                report.diagnostics.push(diag);
            }
            Err(e) => {
                report.failed = Some((n, e.to_string()));
                break;
            }
        }
    }
    report.orders = study_orders(&report.rows)?;
    Ok(report)
}

pub fn study_orders(rows: &[StudyRow]) -> Result<Option<Orders>> {
    if rows.len() < 2 {
        return Ok(None);
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let mut pairwise = Vec::new();
    let mut lsq = Vec::new();
    for c in 0..ERROR_COLUMNS.len() {
        let errs: Vec<f64> = rows.iter().map(|r| r.errors()[c]).collect();
        let (pw, slope) = convergence_orders(&errs, &hs)?;
        pairwise.push(pw);
        lsq.push(slope);
    }
    Ok(Some(Orders { pairwise, lsq }))
}

/// Distance between the solutions for two iteration counts, set against the
/// discretization error of the cheaper one.
#[derive(Debug, Clone, Serialize)]
pub struct IterationGap {
    pub column: &'static str,
    /// Norm of `solution(low) - solution(high)`.
    pub difference: f64,
    /// Absolute error of `solution(low)` in the same norm.
    pub discretization_error: f64,
}

impl IterationGap {
    pub fn ratio(&self) -> f64 {
        self.difference / self.discretization_error
    }
}

fn field_diff(a: &FEField, b: &FEField) -> Result<FEField> {
    let c = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
    FEField::from_coeffs(a.space().clone(), c)
}

// Absolute errors in the five study norms; `None` measures the field itself.
fn absolute_errors(case: Option<&ManufacturedCase>, sol: &FhdSolution) -> [f64; 5] {
    let grad_phi = |x| case.map_or([0.0; 2], |c| c.grad_phi(x));
    let h = |x| case.map_or([0.0; 2], |c| c.h(x));
    let m = |x| case.map_or([0.0; 2], |c| c.m(x));
    let u = |x| case.map_or([0.0; 2], |c| c.velocity(x));
    let grad_u = |x| case.map_or([[0.0; 2]; 2], |c| c.grad_u(x));
    let p = |x| [case.map_or(0.0, |c| c.p(x)), 0.0];
    let u_semi = error_h1_broken(&sol.u, &grad_u).absolute;
    let u_l2 = error_l2(&sol.u, &u).absolute;
    [
        error_h1_semi(&sol.phi, &grad_phi).absolute,
        error_hcurl(&sol.h, &h, &|_| 0.0).absolute,
        error_l2(&sol.m, &m).absolute,
        u_semi.hypot(u_l2),
        error_l2(&sol.p, &p).absolute,
    ]
}

/// Solves level `n` with `low` and `high` Picard/Oseen sweeps and compares
/// the two solutions in every study norm.
pub fn iteration_gap(case: &ManufacturedCase, pair: ElementPair, n: usize, low: usize, high: usize) -> Result<Vec<IterationGap>> {
    let solve = |l: usize| {
        let mut config = case.config(n, pair);
        config.picard_iters = l;
        config.oseen_iters = l;
        solve_fhd(&config)
    };
    let (a, b) = (solve(low)?, solve(high)?);
    let diff = FhdSolution {
        phi: field_diff(&a.phi, &b.phi)?,
        h: field_diff(&a.h, &b.h)?,
        m: field_diff(&a.m, &b.m)?,
        u: field_diff(&a.u, &b.u)?,
        p: field_diff(&a.p, &b.p)?,
        ..a.clone()
    };
    let d = absolute_errors(None, &diff);
    let e = absolute_errors(Some(case), &a);
    Ok(ERROR_COLUMNS
        .iter()
        .zip(d.iter().zip(&e))
        .map(|(&column, (&difference, &discretization_error))| IterationGap {
            column,
            difference,
            discretization_error,
        })
        .collect())
}

/// Smallest nonzero generalized eigenvalue root of `B A^{-1} B^T` against the
/// pressure mass matrix: the discrete inf-sup constant of the velocity/pressure
/// pair on level `n`.
pub fn inf_sup_constant(pair: ElementPair, n: usize) -> Result<f64> {
    let mesh = Arc::new(Mesh2D::build_uniform_square(n)?);
    let [_, _, vf, wf] = pair.families();
    let v = FESpace::build(mesh.clone(), vf, 2)?;
    let w = FESpace::build_unconstrained(mesh, wf, 1)?;
    let opts = AssemblyOptions::default();
    let sys = assemble_stokes_blocks(&v, &w, 1.0, &opts)?;
    let free = v.free_dofs();
    let a = sys.a.restrict(&free, &free);
    let pdofs: Vec<usize> = (0..w.n_dofs()).collect();
    let b = sys.b.restrict(&pdofs, &free);
    let bt = b.transpose();
    let np = w.n_dofs();
    let factor = SpdFactor::new(&a).map_err(FhdError::solve("inf-sup"))?;
    let mut s = Mat::<f64>::zeros(np, np);
    let btd = bt.to_dense();
    for j in 0..np {
        let col: Vec<f64> = btd.iter().map(|r| r[j]).collect();
        let (x, _) = factor.solve(&col).map_err(FhdError::solve("inf-sup"))?;
        let bx = b.mul_vec(&x);
        for i in 0..np {
            s[(i, j)] = bx[i];
        }
    }
    let md = assemble_mass(&w, &opts)?.to_dense();
    let mp = Mat::<f64>::from_fn(np, np, |i, j| md[i][j]);
    let llt = mp
        .llt(Side::Lower)
        .map_err(|e| FhdError::Verify(format!("pressure mass is not SPD: {e:?}")))?;
    let l = llt.L();
    // C = L^{-1} S L^{-T}
    let mut x = s.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(c.as_mut());
    let sym = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let ev = sym
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| FhdError::Verify(format!("eigenvalues failed: {e:?}")))?;
    let top = ev.last().copied().unwrap_or(0.0);
    // the constant pressure is the one null mode; skip it
    ev.iter()
        .copied()
        .find(|&l| l > 1e-10 * top)
        .map(f64::sqrt)
        .ok_or_else(|| FhdError::Verify("no positive eigenvalue".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Replacement for `alpha` used by the battery; lets callers inject a broken
/// coefficient as a negative control.
pub type AlphaHook = fn(f64, &MaterialParams) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct BatteryOptions {
    pub seed: u64,
    pub alpha: AlphaHook,
}

impl BatteryOptions {
    pub fn new(seed: u64) -> Self {
        Self { seed, alpha: alpha_raw }
    }
}

fn result(name: &'static str, passed: bool, detail: String) -> PropertyResult {
    PropertyResult { name, passed, detail }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn random_params(rng: &mut ChaCha8Rng) -> MaterialParams {
    let ms = rng.random_range(0.2..5.0);
    let gamma = rng.random_range(0.2..5.0);
    MaterialParams::new(rng.random_range(0.5..2.0), ms, gamma, 1.0, 1.0).expect("positive draws")
}

fn check_alpha_bounds(opts: &BatteryOptions, rng: &mut ChaCha8Rng) -> PropertyResult {
    let xs = log_space(1e-8, 1e8, 1000);
    let mut sets = vec![MaterialParams::default()];
    sets.extend((0..4).map(|_| random_params(rng)));
    for p in &sets {
        let hi = p.alpha_max();
        for &x in &xs {
            let a = (opts.alpha)(x, p);
            if !(a > 1.0 && a <= hi * (1.0 + 1e-15)) {
                return result("alpha_bounds", false, format!("alpha({x:e}) = {a} outside (1, {hi}] for {p:?}"));
            }
        }
    }
    result("alpha_bounds", true, format!("{} samples x {} parameter sets", xs.len(), sets.len()))
}

fn check_beta_derivative(rng: &mut ChaCha8Rng) -> PropertyResult {
    let xs = log_space(1e-4, 1e4, 1000);
    let mut sets = vec![MaterialParams::default()];
    sets.extend((0..4).map(|_| random_params(rng)));
    for p in &sets {
        for &x in &xs {
            let h = 1e-5 * x;
            let d = (beta_raw(x + h, p) - beta_raw(x - h, p)) / (2.0 * h);
            if !(d > 0.0 && d <= p.ms + 1e-8) {
                return result("beta_derivative", false, format!("beta'({x:e}) = {d} outside (0, {}]", p.ms));
            }
        }
    }
    result("beta_derivative", true, format!("{} samples x {} parameter sets", xs.len(), sets.len()))
}

fn random_free(rng: &mut ChaCha8Rng, sp: &FESpace, scale: f64) -> Vec<f64> {
    let mask = sp.dirichlet_mask();
    (0..sp.n_dofs())
        .map(|i| if mask[i] { 0.0 } else { scale * rng.random_range(-1.0..1.0) })
        .collect()
}

fn check_coercivity(opts: &BatteryOptions, rng: &mut ChaCha8Rng) -> Result<PropertyResult> {
    let mesh = Arc::new(Mesh2D::build_uniform_square(4)?);
    let aopts = AssemblyOptions::default();
    let mut worst: f64 = f64::INFINITY;
    for (k, fam) in [ElementFamily::P1, ElementFamily::P2].into_iter().enumerate() {
        let s = Arc::new(FESpace::build(mesh.clone(), fam, 1)?);
        let lap = assemble_weighted_stiffness(&s, Coefficient::Unit, &aopts)?;
        for i in 0..50 {
            let p = if i % 5 == 0 { MaterialParams::default() } else { random_params(rng) };
            let scale = 10f64.powf(rng.random_range(-2.0..3.0));
            let wf = FEField::from_coeffs(s.clone(), random_free(rng, &s, scale))?;
            let alpha = opts.alpha;
            let a = assemble_weighted_stiffness(
                &s,
                Coefficient::Custom(&|x| {
                    let g = wf.eval_at(x).map(|v| v.grad[0]).unwrap_or([0.0; 2]);
                    alpha(g[0].hypot(g[1]), &p)
                }),
                &aopts,
            )?;
            let x = random_free(rng, &s, 1.0);
            let y = random_free(rng, &s, 1.0);
            let (nx, ny) = (lap.bilinear(&x, &x), lap.bilinear(&y, &y));
            let coer = a.bilinear(&x, &x) / nx;
            let cont = a.bilinear(&y, &x).abs() / (p.alpha_max() * (nx * ny).sqrt());
            worst = worst.min(coer);
            if coer < 1.0 - 1e-12 || cont > 1.0 + 1e-12 {
                return Ok(result(
                    "coercivity_continuity",
                    false,
                    format!("field {} ({fam:?}): a(w;x,x)/|x|^2 = {coer}, continuity ratio {cont}", 50 * k + i),
                ));
            }
        }
    }
    Ok(result("coercivity_continuity", true, format!("100 fields, min a(w;x,x)/|x|^2 = {worst:.6}")))
}

fn check_skew(rng: &mut ChaCha8Rng) -> Result<PropertyResult> {
    let mesh = Arc::new(Mesh2D::build_uniform_square(4)?);
    let aopts = AssemblyOptions::default();
    let mut worst: f64 = 0.0;
    for fam in [ElementFamily::CR, ElementFamily::P2] {
        let v = Arc::new(FESpace::build(mesh.clone(), fam, 2)?);
        for _ in 0..50 {
            let w = FEField::from_coeffs(v.clone(), (0..v.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let n = assemble_convection(&v, &w, 1.0, &aopts)?;
            let a: Vec<f64> = (0..v.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..v.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            worst = worst
                .max(n.bilinear(&a, &a).abs())
                .max((n.bilinear(&a, &b) + n.bilinear(&b, &a)).abs());
        }
    }
    Ok(result("trilinear_skew", worst <= 1e-13, format!("100 triples, max defect {worst:.3e}")))
}

fn check_commuting(rng: &mut ChaCha8Rng) -> Result<PropertyResult> {
    let mesh = Arc::new(Mesh2D::build_uniform_square(4)?);
    let mut worst: f64 = 0.0;
    for (sf, ef, cubic) in [(ElementFamily::P1, ElementFamily::NE0, true), (ElementFamily::P2, ElementFamily::NE1, false)] {
        let s = Arc::new(FESpace::build_unconstrained(mesh.clone(), sf, 1)?);
        let u = Arc::new(FESpace::build_unconstrained(mesh.clone(), ef, 1)?);
        let g = s.gradient_matrix(&u)?;
        for _ in 0..5 {
            let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = if cubic { 1.0 } else { 0.0 };
            let f = |p: Point| {
                let [x, y] = p;
                c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
                    + k * (c[6] * x * x * x + c[7] * x * x * y + c[8] * x * y * y + c[9] * y * y * y)
            };
            let grad = |p: Point| {
                let [x, y] = p;
                [
                    c[1] + 2.0 * c[3] * x + c[4] * y + k * (3.0 * c[6] * x * x + 2.0 * c[7] * x * y + c[8] * y * y),
                    c[2] + c[4] * x + 2.0 * c[5] * y + k * (c[7] * x * x + 2.0 * c[8] * x * y + 3.0 * c[9] * y * y),
                ]
            };
            let lhs = interpolate_edge(&u, grad)?;
            let rhs = g.mul_vec(&interpolate_scalar(&s, f)?.coeffs);
            for (a, b) in lhs.coeffs.iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(result("commuting_diagram", worst <= 1e-12, format!("max defect {worst:.3e}")))
}

fn check_inf_sup() -> Result<PropertyResult> {
    let mut detail = Vec::new();
    let mut passed = true;
    for pair in [ElementPair::L0, ElementPair::L1] {
        let betas: Vec<f64> = [4, 8, 16].iter().map(|&n| inf_sup_constant(pair, n)).collect::<Result<_>>()?;
        let (lo, hi) = betas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        passed &= lo >= 0.9 * hi;
        detail.push(format!("{pair}: {betas:.4?} (min/max {:.3})", lo / hi));
    }
    Ok(result("inf_sup", passed, detail.join("; ")))
}

fn check_stability(rng: &mut ChaCha8Rng) -> Result<PropertyResult> {
    let q = quadrature(ERROR_QUAD_DEGREE)?;
    for _ in 0..3 {
        let p = random_params(rng);
        let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.5..4.0));
        let h_e: VectorFn = Arc::new(move |x: Point| [a + b * x[1], (c * x[0]).sin()]);
        let mut config = FhdConfig::new(8, ElementPair::L0, p);
        config.potential = PotentialSource::External(h_e.clone());
        let prob = FhdProblem::new(config)?;
        let (phi0, _) = prob.initial_guess_phi()?;
        let (phi, _, _) = prob.picard_elliptic(phi0)?;
        let lap = assemble_weighted_stiffness(&prob.s, Coefficient::Unit, prob.options())?;
        let gnorm = lap.bilinear(&phi.coeffs, &phi.coeffs).sqrt();
        let mut he2 = 0.0;
        for t in 0..prob.mesh.n_triangles() {
            let geo = prob.mesh.affine(t);
            for (&bq, &w) in q.points.iter().zip(&q.weights) {
                he2 += w * geo.det.abs() * sq2(h_e(geo.map_bary(bq)));
            }
        }
        let bound = he2.sqrt() / p.mu0;
        if gnorm > bound * (1.0 + 1e-12) {
            return Ok(result("stability", false, format!("|grad phi_h| = {gnorm} > {bound}")));
        }
    }
    for pair in [ElementPair::L0, ElementPair::L1] {
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let f: VectorFn = Arc::new(move |x: Point| [a * x[1] + 1.0, b * x[0] * x[0]]);
        let params = MaterialParams::new(1.0, 1.0, 1.0, rng.random_range(0.5..5.0), rng.random_range(0.2..2.0))?;
        let mut config = FhdConfig::new(6, pair, params);
        config.flow = FlowSource::BodyForce(f.clone());
        config.oseen_iters = 3;
        let prob = FhdProblem::new(config)?;
        let (u0, _, _) = prob.initial_guess_velocity()?;
        let (u, _, _) = prob.oseen_ns(u0)?;
        let visc = assemble_weighted_stiffness(&prob.v, Coefficient::Unit, prob.options())?;
        let load = crate::assembly::assemble_load(&prob.v, f.as_ref(), prob.options())?;
        let lhs = params.eta * visc.bilinear(&u.coeffs, &u.coeffs);
        let rhs: f64 = load.iter().zip(&u.coeffs).map(|(a, b)| a * b).sum();
        if lhs > rhs + 1e-12 * rhs.abs() {
            return Ok(result("stability", false, format!("{pair}: eta |u_h|^2 = {lhs} > (f, u_h) = {rhs}")));
        }
    }
    Ok(result("stability", true, "potential and velocity energy bounds hold".into()))
}

/// Runs every property check in a fixed order.
pub fn run_property_battery(opts: &BatteryOptions) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    Ok(vec![
        check_alpha_bounds(opts, &mut rng),
        check_beta_derivative(&mut rng),
        check_coercivity(opts, &mut rng)?,
        check_skew(&mut rng)?,
        check_commuting(&mut rng)?,
        check_inf_sup()?,
        check_stability(&mut rng)?,
    ])
}
