//! Reference-triangle tabulation and quadrature.
//!
//! The reference triangle has vertices `(0,0)`, `(1,0)`, `(0,1)` with
//! barycentric coordinates `l0 = 1 - x - y`, `l1 = x`, `l2 = y`. Local edge `k`
//! is opposite vertex `k` and runs from vertex `(k+1)%3` to `(k+2)%3`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{FhdError, Result};

pub const MAX_LOCAL: usize = 6;

const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
const GRAD_BARY: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Symmetric rule on the reference triangle; weights sum to its area 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Orbits of barycentric points: (weight, kind, parameters). Weights are
// normalized to sum 1 and rescaled by the reference area on expansion.
enum Orbit {
    Centroid(f64),
    S21(f64, f64),
    S111(f64, f64, f64),
}

fn expand(degree: usize, orbits: &[Orbit]) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.5 * w);
            }
            Orbit::S21(w, b) => {
                let a = 1.0 - 2.0 * b;
                for p in [[a, b, b], [b, a, b], [b, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
            Orbit::S111(w, a, b) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    QuadratureRule {
        points,
        weights,
        degree,
    }
}

fn stocked_rules() -> &'static [QuadratureRule] {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    RULES.get_or_init(|| {
        use Orbit::*;
        vec![
            expand(1, &[Centroid(1.0)]),
            // edge midpoints
            expand(2, &[S21(1.0 / 3.0, 0.5)]),
            expand(
                4,
                &[
                    S21(0.223_381_589_678_011_47, 0.445_948_490_915_964_9),
                    S21(0.109_951_743_655_321_87, 0.091_576_213_509_770_74),
                ],
            ),
            expand(
                5,
                &[
                    Centroid(0.225),
                    S21(0.132_394_152_788_506_18, 0.470_142_064_105_115_1),
                    S21(0.125_939_180_544_827_15, 0.101_286_507_323_456_34),
                ],
            ),
            expand(
                6,
                &[
                    S21(0.116_786_275_726_379_37, 0.249_286_745_170_910_42),
                    S21(0.050_844_906_370_206_817, 0.063_089_014_491_502_23),
                    S111(
                        0.082_851_075_618_373_575,
                        0.053_145_049_844_816_947,
                        0.310_352_451_033_784_4,
                    ),
                ],
            ),
            expand(
                8,
                &[
                    Centroid(0.144_315_607_677_787_17),
                    S21(0.095_091_634_267_284_625, 0.459_292_588_292_723_16),
                    S21(0.103_217_370_534_718_25, 0.170_569_307_751_760_2),
                    S21(0.032_458_497_623_198_08, 0.050_547_228_317_030_975),
                    S111(
                        0.027_230_314_174_434_994,
                        0.008_394_777_409_957_605,
                        0.263_112_829_634_638_1,
                    ),
                ],
            ),
        ]
    })
}

/// Smallest stocked symmetric rule exact for polynomials of `degree`.
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    let degree = degree.max(1);
    stocked_rules()
        .iter()
        .find(|r| r.degree >= degree)
        .cloned()
        .ok_or(FhdError::Quadrature(degree))
}

/// Gauss–Legendre points and weights on `[0, 1]`.
pub fn gauss_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        _ => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_26,
                0.339_981_043_584_856_26,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_85,
                0.652_145_154_862_546_2,
                0.652_145_154_862_546_2,
                0.347_854_845_137_453_85,
            ],
        ),
    };
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementFamily {
    P0,
    P1,
    P2,
    /// Crouzeix–Raviart, edge-midpoint nodal P1.
    CR,
    /// Lowest-order edge element (Whitney 1-forms).
    NE0,
    /// Edge element with two tangential moments per edge (full P1 vector fields).
    NE1,
}

/// Where a local dof lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofCarrier {
    Vertex(usize),
    Edge(usize),
    Cell,
}

impl ElementFamily {
    pub fn n_local(self) -> usize {
        match self {
            ElementFamily::P0 => 1,
            ElementFamily::P1 | ElementFamily::CR | ElementFamily::NE0 => 3,
            ElementFamily::P2 | ElementFamily::NE1 => 6,
        }
    }

    pub fn is_edge_family(self) -> bool {
        matches!(self, ElementFamily::NE0 | ElementFamily::NE1)
    }

    /// Polynomial degree of the local space.
    pub fn degree(self) -> usize {
        match self {
            ElementFamily::P0 => 0,
            ElementFamily::P2 => 2,
            _ => 1,
        }
    }

    pub fn carrier(self, local: usize) -> DofCarrier {
        match self {
            ElementFamily::P0 => DofCarrier::Cell,
            ElementFamily::P1 => DofCarrier::Vertex(local),
            ElementFamily::P2 if local < 3 => DofCarrier::Vertex(local),
            ElementFamily::P2 => DofCarrier::Edge(local - 3),
            ElementFamily::CR | ElementFamily::NE0 => DofCarrier::Edge(local),
            ElementFamily::NE1 => DofCarrier::Edge(local / 2),
        }
    }
}

/// Basis values at one reference point. Scalar families fill `value` and
/// `grad`; edge families fill `vector` and `curl`. All derivatives are with
/// respect to reference coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tabulation {
    pub n: usize,
    pub value: [f64; MAX_LOCAL],
    pub grad: [[f64; 2]; MAX_LOCAL],
    pub vector: [[f64; 2]; MAX_LOCAL],
    pub curl: [f64; MAX_LOCAL],
}

pub fn eval_basis(family: ElementFamily, bary: [f64; 3]) -> Tabulation {
    let mut tab = Tabulation {
        n: family.n_local(),
        ..Default::default()
    };
    let l = bary;
    let g = GRAD_BARY;
    match family {
        ElementFamily::P0 => {
            tab.value[0] = 1.0;
        }
        ElementFamily::P1 => {
            tab.value[..3].copy_from_slice(&l);
            tab.grad[..3].copy_from_slice(&g);
        }
        ElementFamily::CR => {
            for k in 0..3 {
                tab.value[k] = 1.0 - 2.0 * l[k];
                tab.grad[k] = [-2.0 * g[k][0], -2.0 * g[k][1]];
            }
        }
        ElementFamily::P2 => {
            for k in 0..3 {
                tab.value[k] = l[k] * (2.0 * l[k] - 1.0);
                let s = 4.0 * l[k] - 1.0;
                tab.grad[k] = [s * g[k][0], s * g[k][1]];
                let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                tab.value[3 + k] = 4.0 * l[a] * l[b];
                tab.grad[3 + k] = [
                    4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
                    4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
                ];
            }
        }
        ElementFamily::NE0 => {
            for k in 0..3 {
                let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                tab.vector[k] = [
                    l[a] * g[b][0] - l[b] * g[a][0],
                    l[a] * g[b][1] - l[b] * g[a][1],
                ];
                tab.curl[k] = 2.0 * (g[a][0] * g[b][1] - g[a][1] * g[b][0]);
            }
        }
        ElementFamily::NE1 => {
            let x = l[1];
            let y = l[2];
            let coeffs = ne1_coefficients();
            for (i, c) in coeffs.iter().enumerate() {
                tab.vector[i] = [c[0] + c[1] * x + c[2] * y, c[3] + c[4] * x + c[5] * y];
                tab.curl[i] = c[4] - c[2];
            }
        }
    }
    tab
}

/// Evaluates the NE1 edge functionals of a reference vector field: for local
/// edge `k`, dof `2k` is the tangential moment against 1 and dof `2k+1`
/// against the edge Legendre polynomial `2s - 1`.
pub fn ne1_reference_dofs(v: impl Fn([f64; 2]) -> [f64; 2]) -> [f64; 6] {
    let (s, w) = gauss_1d(2);
    let mut dofs = [0.0; 6];
    for k in 0..3 {
        let a = REF_VERTICES[(k + 1) % 3];
        let b = REF_VERTICES[(k + 2) % 3];
        let t = [b[0] - a[0], b[1] - a[1]];
        for (&s, &w) in s.iter().zip(&w) {
            let p = [a[0] + s * t[0], a[1] + s * t[1]];
            let val = v(p);
            let tang = val[0] * t[0] + val[1] * t[1];
            dofs[2 * k] += w * tang;
            dofs[2 * k + 1] += w * tang * (2.0 * s - 1.0);
        }
    }
    dofs
}

// Monomial coefficients (1, x, y | 1, x, y) of the NE1 reference basis, dual
// to `ne1_reference_dofs`.
fn ne1_coefficients() -> &'static [[f64; 6]; 6] {
    static COEFFS: OnceLock<[[f64; 6]; 6]> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let monomial = |j: usize, p: [f64; 2]| -> [f64; 2] {
            let m = [1.0, p[0], p[1]][j % 3];
            if j < 3 {
                [m, 0.0]
            } else {
                [0.0, m]
            }
        };
        // dual[i][j] = dof_i(monomial_j)
        let mut dual = [[0.0; 6]; 6];
        for j in 0..6 {
            let dofs = ne1_reference_dofs(|p| monomial(j, p));
            for i in 0..6 {
                dual[i][j] = dofs[i];
            }
        }
        let inv = invert6(dual);
        let mut out = [[0.0; 6]; 6];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = inv[j][i];
            }
        }
        out
    })
}

fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..6 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..6 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..6 {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn every_rule_integrates_its_monomials() {
        for degree in 1..=8 {
            let rule = quadrature(degree).unwrap();
            assert!(rule.degree >= degree);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for i in 0..=rule.degree as u32 {
                for j in 0..=(rule.degree as u32 - i) {
                    let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(i as i32) * p[2].powi(j as i32))
                        .sum();
                    assert!((q - exact).abs() < 1e-14, "deg {} x^{i} y^{j}", rule.degree);
                }
            }
        }
    }

    #[test]
    fn low_degree_rules() {
        let r1 = quadrature(1).unwrap();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1.weights[0], 0.5);
        let r2 = quadrature(2).unwrap();
        assert_eq!(r2.len(), 3);
        assert!(r2.weights.iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-16));
        let x2: f64 = r2.points.iter().zip(&r2.weights).map(|(p, w)| w * p[1] * p[1]).sum();
        assert!((x2 - 1.0 / 12.0).abs() < 1e-16);
        assert!(matches!(quadrature(9), Err(FhdError::Quadrature(9))));
    }

    #[test]
    fn nodal_patterns() {
        let verts = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (i, v) in verts.iter().enumerate() {
            let t = eval_basis(ElementFamily::P1, *v);
            for j in 0..3 {
                assert_eq!(t.value[j], if i == j { 1.0 } else { 0.0 });
            }
            let t = eval_basis(ElementFamily::P2, *v);
            for j in 0..6 {
                assert!((t.value[j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        // midpoint of local edge k has l_k = 0
        let mids = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        for (k, m) in mids.iter().enumerate() {
            let t = eval_basis(ElementFamily::CR, *m);
            for j in 0..3 {
                assert!((t.value[j] - if k == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
            let t = eval_basis(ElementFamily::P2, *m);
            for j in 0..6 {
                assert!((t.value[j] - if j == 3 + k { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    fn edge_moments(family: ElementFamily, i: usize) -> [f64; 6] {
        ne1_reference_dofs(|p| eval_basis(family, [1.0 - p[0] - p[1], p[0], p[1]]).vector[i])
    }

    #[test]
    fn ne0_tangential_moments_are_kronecker() {
        for l in 0..3 {
            let m = edge_moments(ElementFamily::NE0, l);
            for k in 0..3 {
                assert!((m[2 * k] - if k == l { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ne1_dofs_are_kronecker() {
        for l in 0..6 {
            let m = edge_moments(ElementFamily::NE1, l);
            for (k, mk) in m.iter().enumerate() {
                assert!((mk - if k == l { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn partition_of_unity_and_constant_curl() {
        let rule = quadrature(8).unwrap();
        for &p in &rule.points {
            for fam in [ElementFamily::P1, ElementFamily::P2, ElementFamily::CR] {
                let t = eval_basis(fam, p);
                let s: f64 = t.value[..t.n].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                let gx: f64 = t.grad[..t.n].iter().map(|g| g[0]).sum();
                let gy: f64 = t.grad[..t.n].iter().map(|g| g[1]).sum();
                assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
            }
            let t = eval_basis(ElementFamily::NE0, p);
            for k in 0..3 {
                // 1/|K| on the reference element
                assert!((t.curl[k] - 2.0).abs() < 1e-14);
            }
        }
        let c0 = eval_basis(ElementFamily::NE1, rule.points[0]).curl;
        for &p in &rule.points {
            let c = eval_basis(ElementFamily::NE1, p).curl;
            for k in 0..6 {
                assert!((c[k] - c0[k]).abs() < 1e-14);
            }
        }
    }

    // Least-squares fit of the gradient of each scalar basis function by the
    // edge basis at random points; the residual must vanish.
    fn gradient_fit_residual(scalar: ElementFamily, edge: ElementFamily, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 3]> = (0..12)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                [1.0 - a - b, a, b]
            })
            .collect();
        let ne = edge.n_local();
        let mut worst: f64 = 0.0;
        for i in 0..scalar.n_local() {
            // normal equations (E^T E) c = E^T g
            let mut ata = vec![vec![0.0; ne]; ne];
            let mut atb = vec![0.0; ne];
            for &p in &pts {
                let s = eval_basis(scalar, p);
                let e = eval_basis(edge, p);
                for d in 0..2 {
                    for r in 0..ne {
                        atb[r] += e.vector[r][d] * s.grad[i][d];
                        for c in 0..ne {
                            ata[r][c] += e.vector[r][d] * e.vector[c][d];
                        }
                    }
                }
            }
            let coef = solve_dense(ata, atb);
            for &p in &pts {
                let s = eval_basis(scalar, p);
                let e = eval_basis(edge, p);
                for d in 0..2 {
                    let fit: f64 = (0..ne).map(|r| coef[r] * e.vector[r][d]).sum();
                    worst = worst.max((fit - s.grad[i][d]).abs());
                }
            }
        }
        worst
    }

    fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn gradients_of_lagrange_lie_in_edge_spaces() {
        assert!(gradient_fit_residual(ElementFamily::P1, ElementFamily::NE0, 1) < 1e-12);
        assert!(gradient_fit_residual(ElementFamily::P2, ElementFamily::NE1, 2) < 1e-12);
    }

    #[test]
    fn edge_gauss_is_exact_to_cubic() {
        let (s, w) = gauss_1d(2);
        let q: f64 = s.iter().zip(&w).map(|(s, w)| w * s.powi(3)).sum();
        assert!((q - 0.25).abs() < 1e-16);
        for n in 1..=4 {
            let (_, w) = gauss_1d(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
