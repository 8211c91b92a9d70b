//! Element-loop assembly of the bilinear and trilinear forms and of the
//! manufactured right-hand sides.
//!
//! Vector Lagrange and CR spaces are component-major, so every vector block is
//! the scalar kernel repeated on the diagonal. CR gradients are taken
//! element-wise throughout.

mod sparse;

use std::borrow::Cow;
use std::sync::Arc;

pub use sparse::{SparseMatrix, TripletBuilder};

use crate::error::{FhdError, Result};
use crate::fespace::{ElementBasis, FEField, FESpace};
use crate::material::{alpha_raw, MaterialParams};
use crate::refelem::{quadrature, ElementFamily, QuadratureRule, MAX_LOCAL};
use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOptions {
    /// Extra quadrature degrees for integrands with a non-polynomial factor.
    pub quad_bump: usize,
    /// Element traversal order; `None` means `0..n_triangles`.
    pub element_order: Option<Vec<usize>>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            quad_bump: 2,
            element_order: None,
        }
    }
}

impl AssemblyOptions {
    fn order(&self, n: usize) -> Result<Cow<'_, [usize]>> {
        match &self.element_order {
            None => Ok(Cow::Owned((0..n).collect())),
            Some(o) => {
                let mut seen = vec![false; n];
                for &t in o {
                    if t >= n || std::mem::replace(&mut seen[t], true) {
                        return Err(FhdError::Assembly("element order is not a permutation".into()));
                    }
                }
                if o.len() != n {
                    return Err(FhdError::Assembly("element order is not a permutation".into()));
                }
                Ok(Cow::Borrowed(o))
            }
        }
    }
}

/// Exact scalar potential, through its gradient `H = grad phi`.
pub trait ScalarPotentialSolution: Send + Sync {
    fn grad_phi(&self, p: Point) -> [f64; 2];
}

/// Exact velocity and modified pressure, with the derivatives the strong
/// form needs. `grad_u[c]` is the gradient of component `c`.
pub trait FlowSolution: Send + Sync {
    fn u(&self, p: Point) -> [f64; 2];
    fn grad_u(&self, p: Point) -> [[f64; 2]; 2];
    fn laplacian_u(&self, p: Point) -> [f64; 2];
    fn grad_ptilde(&self, p: Point) -> [f64; 2];
}

/// Pointwise weight of the stiffness form.
#[derive(Clone, Copy)]
pub enum Coefficient<'a> {
    Unit,
    /// `alpha(|grad w_h|)` for a discrete potential `w_h`.
    AlphaOfField(&'a FEField, &'a MaterialParams),
    /// `alpha(|g(x)|)` for an exact gradient `g`.
    AlphaOfGradient(&'a dyn Fn(Point) -> [f64; 2], &'a MaterialParams),
    Custom(&'a dyn Fn(Point) -> f64),
}

/// Source of the potential equation.
#[derive(Clone, Copy)]
pub enum EllipticSource<'a> {
    Zero,
    /// Weak residual of an exact potential: `tau -> (alpha(|grad phi|) grad phi, grad tau)`.
    Manufactured(&'a dyn ScalarPotentialSolution, &'a MaterialParams),
    /// Applied field: `tau -> (1/mu0)(H_e, grad tau)`.
    External(&'a dyn Fn(Point) -> [f64; 2], f64),
}

/// Oseen/Stokes saddle point system before boundary elimination.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    /// Velocity block, `n_u x n_u`.
    pub a: SparseMatrix,
    /// Divergence block `(q, div v)`, `n_p x n_u`.
    pub b: SparseMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    /// `int q_i` for every pressure basis function.
    pub mean_constraint: Vec<f64>,
    /// Velocity dofs carrying essential conditions.
    pub velocity_dirichlet: Vec<bool>,
    /// Prescribed values, read only on the essential dofs.
    pub velocity_boundary: Vec<f64>,
}

impl SaddleSystem {
    pub fn n_u(&self) -> usize {
        self.a.n_rows
    }

    pub fn n_p(&self) -> usize {
        self.b.n_rows
    }
}

fn check_mesh(space: &FESpace, field: &FEField) -> Result<()> {
    if Arc::ptr_eq(space.mesh(), field.space().mesh()) {
        Ok(())
    } else {
        Err(FhdError::Assembly("field lives on a different mesh".into()))
    }
}

fn rule(degree: usize) -> Result<QuadratureRule> {
    quadrature(degree.min(8))
}

// Adds a local scalar matrix to every component block.
fn scatter_block(b: &mut TripletBuilder, space: &FESpace, dofs: &[usize], local: &[[f64; MAX_LOCAL]; MAX_LOCAL]) {
    let n = dofs.len();
    for c in 0..space.components() {
        let off = c * space.n_scalar();
        for i in 0..n {
            for j in 0..n {
                b.push(off + dofs[i], off + dofs[j], local[i][j]);
            }
        }
    }
}

/// `(w grad phi, grad tau)` on a scalar or vector Lagrange/CR space.
pub fn assemble_weighted_stiffness(
    space: &FESpace,
    coef: Coefficient<'_>,
    opts: &AssemblyOptions,
) -> Result<SparseMatrix> {
    if space.family().is_edge_family() || space.family() == ElementFamily::P0 {
        return Err(FhdError::Assembly(format!(
            "stiffness needs an H1-type space, got {:?}",
            space.family()
        )));
    }
    if let Coefficient::AlphaOfField(f, _) = coef {
        check_mesh(space, f)?;
    }
    let k = space.family().degree();
    let bump = if matches!(coef, Coefficient::Unit) { 0 } else { opts.quad_bump };
    let q = rule(2 * (k - 1) + bump)?;
    let mesh = space.mesh();
    let nl = space.n_local();
    let mut b = TripletBuilder::with_capacity(space.n_dofs(), space.n_dofs(), mesh.n_triangles() * nl * nl * space.components());
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let x = geo.map_bary(bary);
            let weight = match coef {
                Coefficient::Unit => 1.0,
                Coefficient::AlphaOfField(f, p) => {
                    let g = f.eval(t, bary).grad[0];
                    alpha_raw(g[0].hypot(g[1]), p)
                }
                Coefficient::AlphaOfGradient(g, p) => {
                    let g = g(x);
                    alpha_raw(g[0].hypot(g[1]), p)
                }
                Coefficient::Custom(f) => f(x),
            };
            let s = w * geo.det.abs() * weight;
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += s * dot(bs.grad[i], bs.grad[j]);
                }
            }
        }
        scatter_block(&mut b, space, space.local_dofs(t), &local);
    }
    Ok(b.build())
}

/// `tau -> (F, grad tau)` for a vector field `F` given pointwise.
fn assemble_flux_rhs(space: &FESpace, flux: &dyn Fn(Point) -> [f64; 2], opts: &AssemblyOptions) -> Result<Vec<f64>> {
    let k = space.family().degree();
    let q = rule(2 * k + 2 + opts.quad_bump)?;
    let mesh = space.mesh();
    let mut rhs = vec![0.0; space.n_dofs()];
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let f = flux(geo.map_bary(bary));
            let s = w * geo.det.abs();
            for i in 0..bs.n {
                rhs[bs.dofs[i]] += s * dot(f, bs.grad[i]);
            }
        }
    }
    Ok(rhs)
}

pub fn assemble_elliptic_rhs(space: &FESpace, source: EllipticSource<'_>, opts: &AssemblyOptions) -> Result<Vec<f64>> {
    if space.components() != 1 || space.family().is_edge_family() {
        return Err(FhdError::Assembly("potential space must be scalar Lagrange".into()));
    }
    match source {
        EllipticSource::Zero => Ok(vec![0.0; space.n_dofs()]),
        EllipticSource::Manufactured(phi, p) => assemble_flux_rhs(
            space,
            &|x| {
                let g = phi.grad_phi(x);
                let a = alpha_raw(g[0].hypot(g[1]), p);
                [a * g[0], a * g[1]]
            },
            opts,
        ),
        EllipticSource::External(h_e, mu0) => assemble_flux_rhs(
            space,
            &|x| {
                let h = h_e(x);
                [h[0] / mu0, h[1] / mu0]
            },
            opts,
        ),
    }
}

/// Scalar mass matrix (block diagonal for vector spaces).
pub fn assemble_mass(space: &FESpace, opts: &AssemblyOptions) -> Result<SparseMatrix> {
    if space.family().is_edge_family() {
        return assemble_edge_mass(space, opts);
    }
    let q = rule((2 * space.family().degree()).max(1))?;
    let mesh = space.mesh();
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs(), space.n_dofs());
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let s = w * geo.det.abs();
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += s * bs.value[i] * bs.value[j];
                }
            }
        }
        scatter_block(&mut b, space, space.local_dofs(t), &local);
    }
    Ok(b.build())
}

/// `(w_i, w_j)` on an edge space, all dofs kept.
pub fn assemble_edge_mass(space: &FESpace, opts: &AssemblyOptions) -> Result<SparseMatrix> {
    if !space.family().is_edge_family() {
        return Err(FhdError::Assembly("edge mass needs an edge space".into()));
    }
    let q = rule(2 * space.family().degree())?;
    let mesh = space.mesh();
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs(), space.n_dofs());
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let s = w * geo.det.abs();
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += s * dot(bs.vector[i], bs.vector[j]);
                }
            }
        }
        scatter_block(&mut b, space, space.local_dofs(t), &local);
    }
    Ok(b.build())
}

/// `(v, w_i)` on an edge space; `v` receives the triangle, the barycentric
/// point and its physical image so it can evaluate discrete fields.
pub fn assemble_edge_rhs(
    space: &FESpace,
    v: &dyn Fn(usize, [f64; 3], Point) -> [f64; 2],
    opts: &AssemblyOptions,
) -> Result<Vec<f64>> {
    if !space.family().is_edge_family() {
        return Err(FhdError::Assembly("edge rhs needs an edge space".into()));
    }
    let q = rule(2 * space.family().degree() + opts.quad_bump)?;
    let mesh = space.mesh();
    let mut rhs = vec![0.0; space.n_dofs()];
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let f = v(t, bary, geo.map_bary(bary));
            let s = w * geo.det.abs();
            for i in 0..bs.n {
                rhs[bs.dofs[i]] += s * dot(f, bs.vector[i]);
            }
        }
    }
    Ok(rhs)
}

/// `(f, phi_i)` on a scalar Lagrange/P0 space, with the same callback shape
/// as [`assemble_edge_rhs`].
pub fn assemble_scalar_rhs(
    space: &FESpace,
    f: &dyn Fn(usize, [f64; 3], Point) -> f64,
    opts: &AssemblyOptions,
) -> Result<Vec<f64>> {
    if space.family().is_edge_family() || space.components() != 1 {
        return Err(FhdError::Assembly("scalar rhs needs a scalar space".into()));
    }
    let q = rule(2 * space.family().degree() + opts.quad_bump)?;
    let mesh = space.mesh();
    let mut rhs = vec![0.0; space.n_dofs()];
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let v = f(t, bary, geo.map_bary(bary));
            let s = w * geo.det.abs();
            for i in 0..bs.n {
                rhs[bs.dofs[i]] += s * v * bs.value[i];
            }
        }
    }
    Ok(rhs)
}

/// `(f, v)` on a two-component velocity space.
pub fn assemble_load(space: &FESpace, f: &dyn Fn(Point) -> [f64; 2], opts: &AssemblyOptions) -> Result<Vec<f64>> {
    if space.components() != 2 {
        return Err(FhdError::Assembly("load vector needs a two-component space".into()));
    }
    let q = rule(2 * space.family().degree() + 2 + opts.quad_bump)?;
    let mesh = space.mesh();
    let ns = space.n_scalar();
    let mut rhs = vec![0.0; space.n_dofs()];
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let bs = space.basis(t, &geo, bary);
            let v = f(geo.map_bary(bary));
            let s = w * geo.det.abs();
            for i in 0..bs.n {
                rhs[bs.dofs[i]] += s * v[0] * bs.value[i];
                rhs[ns + bs.dofs[i]] += s * v[1] * bs.value[i];
            }
        }
    }
    Ok(rhs)
}

/// Strong-form force `rho (u.grad)u - eta lap u + grad p~` of an exact flow,
/// tested against the velocity space.
pub fn assemble_ns_rhs(
    space: &FESpace,
    flow: &dyn FlowSolution,
    params: &MaterialParams,
    opts: &AssemblyOptions,
) -> Result<Vec<f64>> {
    assemble_load(space, &|x| manufactured_force(flow, params, x), opts)
}

pub fn manufactured_force(flow: &dyn FlowSolution, params: &MaterialParams, x: Point) -> [f64; 2] {
    let u = flow.u(x);
    let g = flow.grad_u(x);
    let lap = flow.laplacian_u(x);
    let gp = flow.grad_ptilde(x);
    let mut f = [0.0; 2];
    for c in 0..2 {
        f[c] = params.rho * dot(g[c], u) - params.eta * lap[c] + gp[c];
    }
    f
}

/// Viscous and divergence blocks of a supported velocity/pressure pair.
pub fn assemble_stokes_blocks(
    velocity: &FESpace,
    pressure: &FESpace,
    eta: f64,
    opts: &AssemblyOptions,
) -> Result<SaddleSystem> {
    match (velocity.family(), pressure.family()) {
        (ElementFamily::CR, ElementFamily::P0) | (ElementFamily::P2, ElementFamily::P1) => {}
        (v, p) => {
            return Err(FhdError::Assembly(format!(
                "unsupported velocity/pressure pair {v:?}/{p:?}"
            )))
        }
    }
    if velocity.components() != 2 || pressure.components() != 1 {
        return Err(FhdError::Assembly("velocity must have two components, pressure one".into()));
    }
    if !Arc::ptr_eq(velocity.mesh(), pressure.mesh()) {
        return Err(FhdError::Assembly("velocity and pressure meshes differ".into()));
    }
    let a = assemble_weighted_stiffness(velocity, Coefficient::Unit, opts)?.scaled(eta);
    let q = rule(velocity.family().degree() + pressure.family().degree() - 1)?;
    let mesh = velocity.mesh();
    let ns = velocity.n_scalar();
    let mut b = TripletBuilder::new(pressure.n_dofs(), velocity.n_dofs());
    let mut mean = vec![0.0; pressure.n_dofs()];
    let mean_rule = rule(pressure.family().degree())?;
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        let mut local = [[[0.0; 2]; MAX_LOCAL]; MAX_LOCAL];
        for (&bary, &w) in q.points.iter().zip(&q.weights) {
            let vb = velocity.basis(t, &geo, bary);
            let pb = pressure.basis(t, &geo, bary);
            let s = w * geo.det.abs();
            for i in 0..pb.n {
                for j in 0..vb.n {
                    local[i][j][0] += s * pb.value[i] * vb.grad[j][0];
                    local[i][j][1] += s * pb.value[i] * vb.grad[j][1];
                }
            }
        }
        let pd = pressure.local_dofs(t);
        let vd = velocity.local_dofs(t);
        for (i, &pi) in pd.iter().enumerate() {
            for (j, &vj) in vd.iter().enumerate() {
                b.push(pi, vj, local[i][j][0]);
                b.push(pi, ns + vj, local[i][j][1]);
            }
        }
        for (&bary, &w) in mean_rule.points.iter().zip(&mean_rule.weights) {
            let pb = pressure.basis(t, &geo, bary);
            for i in 0..pb.n {
                mean[pb.dofs[i]] += w * geo.det.abs() * pb.value[i];
            }
        }
    }
    Ok(SaddleSystem {
        a,
        b: b.build(),
        rhs_u: vec![0.0; velocity.n_dofs()],
        rhs_p: vec![0.0; pressure.n_dofs()],
        mean_constraint: mean,
        velocity_dirichlet: velocity.dirichlet_mask().to_vec(),
        velocity_boundary: vec![0.0; velocity.n_dofs()],
    })
}

/// Matrix `N(w)` with `v^T N(w) u = b(w; u, v)` for the skew-symmetrized
/// convection form `(rho/2)[((w.grad)u, v) - ((w.grad)v, u)]`.
pub fn assemble_convection(space: &FESpace, w: &FEField, rho: f64, opts: &AssemblyOptions) -> Result<SparseMatrix> {
    check_mesh(space, w)?;
    if space.components() != 2 || !space.same_layout(w.space()) {
        return Err(FhdError::Assembly("convecting field must live on the velocity space".into()));
    }
    let degree = match space.family() {
        ElementFamily::P2 => 6,
        _ => 3,
    };
    let q = rule(degree)?;
    let mesh = space.mesh();
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs(), space.n_dofs());
    for &t in opts.order(mesh.n_triangles())?.iter() {
        let geo = mesh.affine(t);
        // c[i][j] = ((w.grad) phi_j, phi_i)
        let mut c = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for (&bary, &wq) in q.points.iter().zip(&q.weights) {
            let bs: ElementBasis = space.basis(t, &geo, bary);
            let wv = w.eval_with(&bs).value;
            let s = wq * geo.det.abs();
            for j in 0..nl {
                let adv = s * dot(wv, bs.grad[j]);
                for i in 0..nl {
                    c[i][j] += adv * bs.value[i];
                }
            }
        }
        let mut local = [[0.0; MAX_LOCAL]; MAX_LOCAL];
        for i in 0..nl {
            for j in 0..nl {
                local[i][j] = 0.5 * rho * (c[i][j] - c[j][i]);
            }
        }
        scatter_block(&mut b, space, space.local_dofs(t), &local);
    }
    Ok(b.build())
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
