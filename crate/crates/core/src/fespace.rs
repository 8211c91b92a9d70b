//! Global degree-of-freedom layout, interpolation and the discrete gradient.

use std::sync::Arc;

use crate::assembly::{SparseMatrix, TripletBuilder};
use crate::error::{FhdError, Result};
use crate::mesh::{Affine, Mesh2D};
use crate::refelem::{eval_basis, gauss_1d, ElementFamily, MAX_LOCAL};
use crate::Point;

/// One element family on one mesh. Vector Lagrange/CR spaces are stored
/// component-major: all x-dofs, then all y-dofs.
#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Arc<Mesh2D>,
    family: ElementFamily,
    components: usize,
    n_scalar: usize,
    local_dofs: Vec<[usize; MAX_LOCAL]>,
    local_signs: Vec<[f64; MAX_LOCAL]>,
    dirichlet: Vec<bool>,
}

/// Basis functions of one element evaluated at one point, mapped to the
/// physical triangle, with global orientation signs applied.
#[derive(Debug, Clone, Copy)]
pub struct ElementBasis {
    pub n: usize,
    /// Scalar-level global dof indices (add `c * n_scalar` for component `c`).
    pub dofs: [usize; MAX_LOCAL],
    pub value: [f64; MAX_LOCAL],
    pub grad: [[f64; 2]; MAX_LOCAL],
    pub vector: [[f64; 2]; MAX_LOCAL],
    pub curl: [f64; MAX_LOCAL],
}

impl FESpace {
    /// Space with homogeneous essential conditions on every boundary dof
    /// (none for P0).
    pub fn build(mesh: Arc<Mesh2D>, family: ElementFamily, components: usize) -> Result<Self> {
        Self::build_with(mesh, family, components, true)
    }

    /// Same layout with no essential dofs, for pressure-like spaces.
    pub fn build_unconstrained(
        mesh: Arc<Mesh2D>,
        family: ElementFamily,
        components: usize,
    ) -> Result<Self> {
        Self::build_with(mesh, family, components, false)
    }

    fn build_with(
        mesh: Arc<Mesh2D>,
        family: ElementFamily,
        components: usize,
        essential: bool,
    ) -> Result<Self> {
        if !(1..=2).contains(&components) {
            return Err(FhdError::Space(format!(
                "components must be 1 or 2, got {components}"
            )));
        }
        if family.is_edge_family() && components != 1 {
            return Err(FhdError::Space("edge spaces are already vector valued".into()));
        }
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let n_scalar = match family {
            ElementFamily::P0 => mesh.n_triangles(),
            ElementFamily::P1 => nv,
            ElementFamily::P2 => nv + ne,
            ElementFamily::CR | ElementFamily::NE0 => ne,
            ElementFamily::NE1 => 2 * ne,
        };
        let mut local_dofs = Vec::with_capacity(mesh.n_triangles());
        let mut local_signs = Vec::with_capacity(mesh.n_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut dofs = [0usize; MAX_LOCAL];
            let mut signs = [1.0f64; MAX_LOCAL];
            let te = mesh.tri_edges[t];
            match family {
                ElementFamily::P0 => dofs[0] = t,
                ElementFamily::P1 => dofs[..3].copy_from_slice(tri),
                ElementFamily::P2 => {
                    dofs[..3].copy_from_slice(tri);
                    for k in 0..3 {
                        dofs[3 + k] = nv + te[k].0;
                    }
                }
                ElementFamily::CR => {
                    for k in 0..3 {
                        dofs[k] = te[k].0;
                    }
                }
                ElementFamily::NE0 => {
                    for k in 0..3 {
                        dofs[k] = te[k].0;
                        signs[k] = te[k].1;
                    }
                }
                ElementFamily::NE1 => {
                    for k in 0..3 {
                        dofs[2 * k] = 2 * te[k].0;
                        signs[2 * k] = te[k].1;
                        // the first-moment functional is invariant under edge reversal
                        dofs[2 * k + 1] = 2 * te[k].0 + 1;
                    }
                }
            }
            local_dofs.push(dofs);
            local_signs.push(signs);
        }
        let mut scalar_mask = vec![false; n_scalar];
        if essential {
            match family {
                ElementFamily::P0 => {}
                ElementFamily::P1 => scalar_mask.copy_from_slice(&mesh.boundary_vertex),
                ElementFamily::P2 => {
                    scalar_mask[..nv].copy_from_slice(&mesh.boundary_vertex);
                    scalar_mask[nv..].copy_from_slice(&mesh.boundary_edge);
                }
                ElementFamily::CR | ElementFamily::NE0 => {
                    scalar_mask.copy_from_slice(&mesh.boundary_edge)
                }
                ElementFamily::NE1 => {
                    for (e, &b) in mesh.boundary_edge.iter().enumerate() {
                        scalar_mask[2 * e] = b;
                        scalar_mask[2 * e + 1] = b;
                    }
                }
            }
        }
        let dirichlet = scalar_mask.repeat(components);
        Ok(Self {
            mesh,
            family,
            components,
            n_scalar,
            local_dofs,
            local_signs,
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn family(&self) -> ElementFamily {
        self.family
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_dofs(&self) -> usize {
        self.n_scalar * self.components
    }

    pub fn n_free(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| !d).count()
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&i| !self.dirichlet[i]).collect()
    }

    pub fn n_local(&self) -> usize {
        self.family.n_local()
    }

    pub fn local_dofs(&self, t: usize) -> &[usize] {
        &self.local_dofs[t][..self.n_local()]
    }

    pub fn local_signs(&self, t: usize) -> &[f64] {
        &self.local_signs[t][..self.n_local()]
    }

    /// Physical basis on triangle `t` at barycentric point `bary`.
    pub fn basis(&self, t: usize, geo: &Affine, bary: [f64; 3]) -> ElementBasis {
        let tab = eval_basis(self.family, bary);
        let signs = &self.local_signs[t];
        let mut out = ElementBasis {
            n: tab.n,
            dofs: self.local_dofs[t],
            value: tab.value,
            grad: [[0.0; 2]; MAX_LOCAL],
            vector: [[0.0; 2]; MAX_LOCAL],
            curl: [0.0; MAX_LOCAL],
        };
        if self.family.is_edge_family() {
            for i in 0..tab.n {
                let v = geo.covariant(tab.vector[i]);
                out.vector[i] = [signs[i] * v[0], signs[i] * v[1]];
                out.curl[i] = signs[i] * tab.curl[i] / geo.det;
            }
        } else {
            for i in 0..tab.n {
                out.grad[i] = geo.covariant(tab.grad[i]);
            }
        }
        out
    }

    pub(crate) fn same_layout(&self, other: &FESpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
            && self.family == other.family
            && self.components == other.components
    }

    /// Sparse matrix `G` with `G * coeffs(s_h)` the edge-space coefficients of
    /// `grad s_h`. Pairs P1 with NE0 and P2 with NE1.
    pub fn gradient_matrix(&self, edge: &FESpace) -> Result<SparseMatrix> {
        if !Arc::ptr_eq(&self.mesh, &edge.mesh) {
            return Err(FhdError::Space("gradient matrix needs a shared mesh".into()));
        }
        let mesh = &self.mesh;
        let nv = mesh.n_vertices();
        match (self.family, edge.family) {
            (ElementFamily::P1, ElementFamily::NE0) => {
                let mut b = TripletBuilder::new(edge.n_dofs(), self.n_dofs());
                for (e, &[lo, hi]) in mesh.edges.iter().enumerate() {
                    b.push(e, hi, 1.0);
                    b.push(e, lo, -1.0);
                }
                Ok(b.build())
            }
            (ElementFamily::P2, ElementFamily::NE1) => {
                // moment against 1: s(hi) - s(lo); against 2s-1:
                // s(lo) + s(hi) - 2 * mean = (2 s(lo) + 2 s(hi) - 4 s(mid)) / 3
                let mut b = TripletBuilder::new(edge.n_dofs(), self.n_dofs());
                for (e, &[lo, hi]) in mesh.edges.iter().enumerate() {
                    b.push(2 * e, hi, 1.0);
                    b.push(2 * e, lo, -1.0);
                    b.push(2 * e + 1, lo, 2.0 / 3.0);
                    b.push(2 * e + 1, hi, 2.0 / 3.0);
                    b.push(2 * e + 1, nv + e, -4.0 / 3.0);
                }
                Ok(b.build())
            }
            (s, u) => Err(FhdError::Space(format!(
                "no gradient inclusion from {s:?} into {u:?}"
            ))),
        }
    }
}

/// Discrete function: a space plus its coefficient vector.
#[derive(Debug, Clone)]
pub struct FEField {
    space: Arc<FESpace>,
    pub coeffs: Vec<f64>,
}

/// Value of a field at one point. Scalar fields use `value[0]` and `grad[0]`;
/// vector Lagrange fields store the Jacobian row-wise (`grad[c]` is the
/// gradient of component `c`); edge fields fill `value` and `curl`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValue {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub curl: f64,
}

impl FEField {
    pub fn zeros(space: Arc<FESpace>) -> Self {
        let n = space.n_dofs();
        Self {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(space: Arc<FESpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(FhdError::Space(format!(
                "coefficient length {} does not match {} dofs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn space(&self) -> &Arc<FESpace> {
        &self.space
    }

    /// Combines precomputed basis values with this field's coefficients.
    pub fn eval_with(&self, basis: &ElementBasis) -> FieldValue {
        let mut out = FieldValue::default();
        let sp = &self.space;
        if sp.family.is_edge_family() {
            for i in 0..basis.n {
                let c = self.coeffs[basis.dofs[i]];
                out.value[0] += c * basis.vector[i][0];
                out.value[1] += c * basis.vector[i][1];
                out.curl += c * basis.curl[i];
            }
        } else {
            for comp in 0..sp.components {
                let offset = comp * sp.n_scalar;
                for i in 0..basis.n {
                    let c = self.coeffs[offset + basis.dofs[i]];
                    out.value[comp] += c * basis.value[i];
                    out.grad[comp][0] += c * basis.grad[i][0];
                    out.grad[comp][1] += c * basis.grad[i][1];
                }
            }
        }
        out
    }

    pub fn eval(&self, t: usize, bary: [f64; 3]) -> FieldValue {
        let geo = self.space.mesh.affine(t);
        self.eval_with(&self.space.basis(t, &geo, bary))
    }

    /// Locates the containing triangle of `p` by brute force and evaluates.
    pub fn eval_at(&self, p: Point) -> Option<FieldValue> {
        let mesh = &self.space.mesh;
        (0..mesh.n_triangles()).find_map(|t| {
            let bary = barycentric(&mesh.affine(t), p);
            bary.iter()
                .all(|&l| l >= -1e-12)
                .then(|| self.eval(t, bary))
        })
    }
}

/// Barycentric coordinates of `p` relative to the triangle behind `geo`.
pub fn barycentric(geo: &Affine, p: Point) -> [f64; 3] {
    let d = [p[0] - geo.origin[0], p[1] - geo.origin[1]];
    // xi = J^{-1} d = inv_t^T d
    let x = geo.inv_t[0][0] * d[0] + geo.inv_t[1][0] * d[1];
    let y = geo.inv_t[0][1] * d[0] + geo.inv_t[1][1] * d[1];
    [1.0 - x - y, x, y]
}

/// Nodal interpolant on P0 (centroids), P1, P2 and CR. Scalar spaces read
/// component 0 of `f`.
pub fn interpolate_nodal(space: &Arc<FESpace>, f: impl Fn(Point) -> [f64; 2]) -> Result<FEField> {
    let mesh = &space.mesh;
    let nodes: Vec<Point> = match space.family {
        ElementFamily::P0 => (0..mesh.n_triangles()).map(|t| mesh.centroid(t)).collect(),
        ElementFamily::P1 => mesh.vertices.clone(),
        ElementFamily::P2 => mesh
            .vertices
            .iter()
            .copied()
            .chain((0..mesh.n_edges()).map(|e| mesh.edge_midpoint(e)))
            .collect(),
        ElementFamily::CR => (0..mesh.n_edges()).map(|e| mesh.edge_midpoint(e)).collect(),
        fam => {
            return Err(FhdError::Space(format!(
                "nodal interpolation is undefined for {fam:?}"
            )))
        }
    };
    let n = space.n_scalar;
    let mut coeffs = vec![0.0; space.n_dofs()];
    for (i, &p) in nodes.iter().enumerate() {
        let v = f(p);
        for c in 0..space.components {
            coeffs[c * n + i] = v[c];
        }
    }
    FEField::from_coeffs(space.clone(), coeffs)
}

pub fn interpolate_scalar(space: &Arc<FESpace>, f: impl Fn(Point) -> f64) -> Result<FEField> {
    interpolate_nodal(space, |p| [f(p), 0.0])
}

/// Edge interpolant: tangential moments along each globally oriented edge,
/// integrated with two-point Gauss.
pub fn interpolate_edge(space: &Arc<FESpace>, v: impl Fn(Point) -> [f64; 2]) -> Result<FEField> {
    let mesh = &space.mesh;
    let per_edge = match space.family {
        ElementFamily::NE0 => 1,
        ElementFamily::NE1 => 2,
        fam => {
            return Err(FhdError::Space(format!(
                "edge interpolation is undefined for {fam:?}"
            )))
        }
    };
    let (s, w) = gauss_1d(2);
    let mut coeffs = vec![0.0; space.n_dofs()];
    for (e, &[lo, hi]) in mesh.edges.iter().enumerate() {
        let a = mesh.vertices[lo];
        let b = mesh.vertices[hi];
        let t = [b[0] - a[0], b[1] - a[1]];
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (&s, &w) in s.iter().zip(&w) {
            let val = v([a[0] + s * t[0], a[1] + s * t[1]]);
            let tang = val[0] * t[0] + val[1] * t[1];
            m0 += w * tang;
            m1 += w * tang * (2.0 * s - 1.0);
        }
        coeffs[per_edge * e] = m0;
        if per_edge == 2 {
            coeffs[2 * e + 1] = m1;
        }
    }
    FEField::from_coeffs(space.clone(), coeffs)
}
