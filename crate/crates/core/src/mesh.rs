//! Conforming triangulations of the unit square with oriented edges.

use std::collections::HashMap;

use crate::error::{FhdError, Result};
use crate::Point;

const BOUNDARY_TOL: f64 = 1e-12;

/// Triangulation with global edge numbering.
///
/// Local edge `k` of a triangle is the edge opposite local vertex `k`,
/// traversed from local vertex `(k + 1) % 3` to `(k + 2) % 3`. Global edges are
/// oriented from the lower to the higher vertex index; `tri_edges[t][k].1` is
/// `+1` when the triangle's traversal agrees with that orientation.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub tri_edges: Vec<[(usize, f64); 3]>,
    pub boundary_vertex: Vec<bool>,
    pub boundary_edge: Vec<bool>,
}

/// Affine map from the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub origin: Point,
    /// Columns are the images of the reference axes.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse transpose of `jac`; maps reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

impl Affine {
    pub fn map(&self, xi: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn map_bary(&self, bary: [f64; 3]) -> Point {
        self.map([bary[1], bary[2]])
    }

    /// Covariant transform `J^{-T} v`, used for gradients and edge fields.
    pub fn covariant(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * v[0] + self.inv_t[0][1] * v[1],
            self.inv_t[1][0] * v[0] + self.inv_t[1][1] * v[1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

impl Mesh2D {
    /// Uniform `n x n` triangulation of the unit square, every cell cut by
    /// its lower-left to upper-right diagonal.
    pub fn build_uniform_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FhdError::Mesh("N must be at least 1".into()));
        }
        let stride = n + 1;
        let mut vertices = Vec::with_capacity(stride * stride);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * stride + i;
                let v10 = v00 + 1;
                let v01 = v00 + stride;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self::from_triangles(vertices, triangles))
    }

    /// Builds edge topology and boundary flags for a counterclockwise
    /// triangle list.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_count: Vec<u8> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let mut local = [(0usize, 1.0f64); 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let idx = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_count.push(0);
                    edges.len() - 1
                });
                edge_count[idx] += 1;
                *slot = (idx, if a < b { 1.0 } else { -1.0 });
            }
            tri_edges.push(local);
        }
        let boundary_edge: Vec<bool> = edge_count.iter().map(|&c| c == 1).collect();
        let boundary_vertex = vertices
            .iter()
            .map(|p| {
                p.iter()
                    .any(|&c| c.abs() < BOUNDARY_TOL || (c - 1.0).abs() < BOUNDARY_TOL)
            })
            .collect();
        Self {
            vertices,
            triangles,
            edges,
            tri_edges,
            boundary_vertex,
            boundary_edge,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn affine(&self, t: usize) -> Affine {
        let [a, b, c] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Affine {
            origin: p0,
            jac,
            det,
            inv_t,
        }
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        0.5 * self.affine(t).det
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        let v = &self.vertices;
        [
            (v[a][0] + v[b][0] + v[c][0]) / 3.0,
            (v[a][1] + v[b][1] + v[c][1]) / 3.0,
        ]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Largest triangle diameter.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let v = |i: usize| self.vertices[tri[i]];
                dist(v(0), v(1)).max(dist(v(1), v(2))).max(dist(v(2), v(0)))
            })
            .fold(0.0, f64::max)
    }
}

fn dist(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}
