//! Sparse direct solvers (faer) and a conjugate-gradient fallback.
//!
//! Factorizations run single-threaded, so repeated solves are bitwise
//! reproducible.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Par, Side};
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{SaddleSystem, SparseMatrix};

pub const SPD_TOL: f64 = 1e-10;
pub const SADDLE_TOL: f64 = 1e-9;
const MAX_REFINEMENT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Ok,
    Singular,
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    /// `||b - A x||_2` of the returned solution.
    pub residual_norm: f64,
    /// Refinement steps (direct) or iterations (CG).
    pub factor_or_iter_count: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("singular or indefinite system: {0}")]
    Singular(String),
    #[error("no convergence after {iterations} iterations (relative residual {relative_residual:e})")]
    NotConverged {
        iterations: usize,
        relative_residual: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl LinalgError {
    pub fn status(&self) -> SolveStatus {
        match self {
            LinalgError::NotConverged { .. } => SolveStatus::NotConverged,
            _ => SolveStatus::Singular,
        }
    }
}

type LResult<T> = std::result::Result<T, LinalgError>;

fn to_faer(a: &SparseMatrix) -> LResult<SparseColMat<usize, f64>> {
    let mut trip = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows {
        for (j, v) in a.row(i) {
            if !v.is_finite() {
                return Err(LinalgError::Singular(format!("non-finite entry at ({i}, {j})")));
            }
            trip.push(Triplet::new(i, j, v));
        }
    }
    SparseColMat::try_new_from_triplets(a.n_rows, a.n_cols, &trip)
        .map_err(|e| LinalgError::Dimension(format!("{e:?}")))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

fn check_square(a: &SparseMatrix, b: &[f64]) -> LResult<()> {
    if a.n_rows != a.n_cols || a.n_rows != b.len() {
        return Err(LinalgError::Dimension(format!(
            "{}x{} matrix with rhs of length {}",
            a.n_rows,
            a.n_cols,
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular("non-finite right-hand side".into()));
    }
    Ok(())
}

// Solves with a factorization and refines until the relative residual meets
// `tol` or stops improving.
fn refine(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    solve: impl Fn(&[f64]) -> Vec<f64>,
) -> LResult<(Vec<f64>, SolveReport)> {
    let scale = norm(b);
    let mut x = solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular("factorization produced non-finite values".into()));
    }
    let mut r = residual(a, &x, b);
    let mut rn = norm(&r);
    let mut steps = 0;
    while rn > tol * scale && steps < MAX_REFINEMENT {
        let dx = solve(&r);
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
        let cr = residual(a, &cand, b);
        let cn = norm(&cr);
        steps += 1;
        if !(cn < rn) {
            break;
        }
        (x, r, rn) = (cand, cr, cn);
    }
    let _ = r;
    if rn > tol * scale {
        return Err(LinalgError::Singular(format!(
            "relative residual {:e} after factorization",
            rn / scale
        )));
    }
    Ok((
        x,
        SolveReport {
            residual_norm: rn,
            factor_or_iter_count: steps,
            status: SolveStatus::Ok,
        },
    ))
}

/// Sparse Cholesky factor kept for repeated solves.
pub struct SpdFactor {
    a: SparseMatrix,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl SpdFactor {
    pub fn new(a: &SparseMatrix) -> LResult<Self> {
        check_square(a, &vec![0.0; a.n_rows])?;
        faer::set_global_parallelism(Par::Seq);
        let llt = if a.n_rows == 0 {
            None
        } else {
            Some(
                to_faer(a)?
                    .sp_cholesky(Side::Lower)
                    .map_err(|e| LinalgError::Singular(format!("Cholesky failed: {e:?}")))?,
            )
        };
        Ok(Self { a: a.clone(), llt })
    }

    pub fn solve(&self, b: &[f64]) -> LResult<(Vec<f64>, SolveReport)> {
        check_square(&self.a, b)?;
        let Some(llt) = &self.llt else {
            return Ok((vec![], ok_report(0.0, 0)));
        };
        refine(&self.a, b, SPD_TOL, |rhs| {
            let col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
            let x = llt.solve(&col);
            (0..rhs.len()).map(|i| x[i]).collect()
        })
    }
}

/// Sparse Cholesky solve of a symmetric positive definite system.
pub fn solve_spd(a: &SparseMatrix, b: &[f64]) -> LResult<(Vec<f64>, SolveReport)> {
    check_square(a, b)?;
    SpdFactor::new(a)?.solve(b)
}

/// Sparse LU solve of a general square system.
pub fn solve_lu(a: &SparseMatrix, b: &[f64], tol: f64) -> LResult<(Vec<f64>, SolveReport)> {
    check_square(a, b)?;
    if a.n_rows == 0 {
        return Ok((vec![], ok_report(0.0, 0)));
    }
    faer::set_global_parallelism(Par::Seq);
    let lu = to_faer(a)?
        .sp_lu()
        .map_err(|e| LinalgError::Singular(format!("LU failed: {e:?}")))?;
    refine(a, b, tol, |rhs| {
        let mut col = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
        lu.solve_in_place(col.as_mat_mut());
        (0..rhs.len()).map(|i| col[i]).collect()
    })
}

/// Unpreconditioned conjugate gradients for SPD systems.
pub fn solve_cg(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> LResult<(Vec<f64>, SolveReport)> {
    check_square(a, b)?;
    let n = b.len();
    let scale = norm(b);
    let mut x = vec![0.0; n];
    if scale == 0.0 {
        return Ok((x, ok_report(0.0, 0)));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(p, q)| p * q).sum();
        if !(pap > 0.0) {
            return Err(LinalgError::Singular(format!("non-positive curvature {pap:e} in CG")));
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() <= tol * scale {
            // report the true residual, not the recursively updated one
            let rn = norm(&residual(a, &x, b));
            if rn <= tol * scale {
                return Ok((x, ok_report(rn, it)));
            }
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(LinalgError::NotConverged {
        iterations: max_iter,
        relative_residual: norm(&residual(a, &x, b)) / scale,
    })
}

fn ok_report(residual_norm: f64, count: usize) -> SolveReport {
    SolveReport {
        residual_norm,
        factor_or_iter_count: count,
        status: SolveStatus::Ok,
    }
}

/// Solves `A u - B^T p = f`, `-B u + lambda m = -g`, `m^T p = 0` with the
/// essential velocity dofs fixed to `velocity_boundary`. Returns full-length
/// `u` and `p`.
///
/// The bordered system is solved by eliminating the multiplier. Constant
/// pressures span the left null space of the velocity-pressure block, so
/// `lambda = sum(rhs_p) / sum(m)`; after moving `lambda m` to the right-hand
/// side one pressure equation is redundant, that pressure is fixed to zero
/// and the mean is removed afterwards. This gives the same solution as
/// factoring the bordered matrix but keeps the dense row out of the LU, where
/// it would couple every pressure column in the fill-reducing ordering.
pub fn solve_saddle(sys: &SaddleSystem) -> LResult<(Vec<f64>, Vec<f64>, SolveReport)> {
    let (n_u, n_p) = (sys.n_u(), sys.n_p());
    if sys.b.n_cols != n_u || sys.rhs_u.len() != n_u || sys.rhs_p.len() != n_p || sys.velocity_dirichlet.len() != n_u
        || sys.velocity_boundary.len() != n_u
    {
        return Err(LinalgError::Dimension("inconsistent saddle point blocks".into()));
    }
    if sys.mean_constraint.len() != n_p
        || sys.mean_constraint.iter().any(|v| !v.is_finite())
        || sys.mean_constraint.iter().all(|&v| v == 0.0)
    {
        return Err(LinalgError::Singular("mean-value constraint row is missing".into()));
    }
    let area: f64 = sys.mean_constraint.iter().sum();
    if area == 0.0 {
        return Err(LinalgError::Singular("mean-value constraint has zero total weight".into()));
    }
    let free: Vec<usize> = (0..n_u).filter(|&i| !sys.velocity_dirichlet[i]).collect();
    let mut map = vec![usize::MAX; n_u];
    for (k, &i) in free.iter().enumerate() {
        map[i] = k;
    }
    let nf = free.len();
    // the last pressure is the one held at zero
    let np_kept = n_p - 1;
    let n = nf + np_kept;
    let mut t = crate::assembly::TripletBuilder::with_capacity(n, n, sys.a.nnz() + 2 * sys.b.nnz());
    for (k, &i) in free.iter().enumerate() {
        for (j, v) in sys.a.row(i) {
            if map[j] != usize::MAX {
                t.push(k, map[j], v);
            }
        }
    }
    for q in 0..np_kept {
        for (j, v) in sys.b.row(q) {
            if map[j] != usize::MAX {
                t.push(map[j], nf + q, -v);
                t.push(nf + q, map[j], -v);
            }
        }
    }
    let k = t.build();
    // lift the prescribed boundary values to the right-hand side
    let mut lift = vec![0.0; n_u];
    for i in 0..n_u {
        if sys.velocity_dirichlet[i] {
            lift[i] = sys.velocity_boundary[i];
        }
    }
    let a_lift = sys.a.mul_vec(&lift);
    let b_lift = sys.b.mul_vec(&lift);
    let rhs_p: Vec<f64> = (0..n_p).map(|q| b_lift[q] - sys.rhs_p[q]).collect();
    let lambda = rhs_p.iter().sum::<f64>() / area;
    let mut rhs = vec![0.0; n];
    for (kk, &i) in free.iter().enumerate() {
        rhs[kk] = sys.rhs_u[i] - a_lift[i];
    }
    for q in 0..np_kept {
        rhs[nf + q] = rhs_p[q] - lambda * sys.mean_constraint[q];
    }
    let mut u = lift;
    let mut p = vec![0.0; n_p];
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok((u, p, ok_report(0.0, 0)));
    }
    let (x, mut report) = solve_lu(&k, &rhs, SADDLE_TOL)?;
    for (kk, &i) in free.iter().enumerate() {
        u[i] = x[kk];
    }
    p[..np_kept].copy_from_slice(&x[nf..]);
    let mean: f64 = p.iter().zip(&sys.mean_constraint).map(|(p, m)| p * m).sum::<f64>() / area;
    // constants have all-equal coefficients in P0 and P1, so this shift
    // enforces the constraint without touching the velocity
    p.iter_mut().for_each(|v| *v -= mean);

    // residual of the full bordered system, including the dropped equation
    let (au, bu, btp) = (sys.a.mul_vec(&u), sys.b.mul_vec(&u), sys.b.transpose().mul_vec(&p));
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for &i in &free {
        r2 += (sys.rhs_u[i] - au[i] + btp[i]).powi(2);
        b2 += (sys.rhs_u[i] - a_lift[i]).powi(2);
    }
    for q in 0..n_p {
        // -B u_free + lambda m = B u_D - g, with B u = B u_free + B u_D
        r2 += (rhs_p[q] - (-(bu[q] - b_lift[q]) + lambda * sys.mean_constraint[q])).powi(2);
        b2 += rhs_p[q].powi(2);
    }
    r2 += p.iter().zip(&sys.mean_constraint).map(|(p, m)| p * m).sum::<f64>().powi(2);
    report.residual_norm = r2.sqrt();
    if report.residual_norm > SADDLE_TOL * b2.sqrt() {
        return Err(LinalgError::Singular(format!(
            "relative residual {:e} of the bordered system",
            report.residual_norm / b2.sqrt()
        )));
    }
    Ok((u, p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_stokes_blocks, assemble_weighted_stiffness, AssemblyOptions, Coefficient, TripletBuilder};
    use crate::fespace::{interpolate_nodal, FESpace};
    use crate::mesh::Mesh2D;
    use crate::refelem::ElementFamily;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn dense(rows: &[&[f64]]) -> SparseMatrix {
        let mut b = TripletBuilder::new(rows.len(), rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    fn laplace(n: usize) -> SparseMatrix {
        let m = Arc::new(Mesh2D::build_uniform_square(n).unwrap());
        let sp = FESpace::build(m, ElementFamily::P1, 1).unwrap();
        let a = assemble_weighted_stiffness(&sp, Coefficient::Unit, &AssemblyOptions::default()).unwrap();
        let free = sp.free_dofs();
        a.restrict(&free, &free)
    }

    #[test]
    fn identity_and_two_by_two() {
        let b = vec![1.0, -2.0, 3.5];
        let (x, rep) = solve_spd(&SparseMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
        assert_eq!(rep.status, SolveStatus::Ok);
        let a = dense(&[&[4.0, 1.0], &[1.0, 3.0]]);
        for (x, _) in [solve_spd(&a, &[1.0, 2.0]).unwrap(), solve_cg(&a, &[1.0, 2.0], 1e-14, 10).unwrap()] {
            assert!((x[0] - 1.0 / 11.0).abs() < 1e-15 && (x[1] - 7.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn laplace_manufactured_solution() {
        let a = laplace(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..a.n_rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.mul_vec(&x);
        let xn = norm(&x);
        let (y, rep) = solve_spd(&a, &b).unwrap();
        assert!(rep.residual_norm <= SPD_TOL * norm(&b));
        let err: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!(norm(&err) <= 1e-9 * xn);
        let (z, rep) = solve_cg(&a, &b, 1e-12, 1000).unwrap();
        let err: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
        assert!(norm(&err) <= 1e-9 * xn && rep.factor_or_iter_count > 0);
    }

    #[test]
    fn indefinite_matrix_is_singular_for_cholesky() {
        let a = dense(&[&[1.0, 2.0], &[2.0, 1.0]]);
        let e = solve_spd(&a, &[1.0, 1.0]).unwrap_err();
        assert_eq!(e.status(), SolveStatus::Singular);
        assert!(solve_cg(&a, &[1.0, -1.0], 1e-12, 10).is_err());
        assert!(matches!(solve_spd(&a, &[1.0]), Err(LinalgError::Dimension(_))));
    }

    #[test]
    fn deterministic_repeat() {
        let a = laplace(8);
        let b: Vec<f64> = (0..a.n_rows).map(|i| (i as f64).sin()).collect();
        assert_eq!(solve_spd(&a, &b).unwrap().0, solve_spd(&a, &b).unwrap().0);
    }

    fn stokes(n: usize, vf: ElementFamily, pf: ElementFamily) -> (Arc<FESpace>, Arc<FESpace>, SaddleSystem) {
        let m = Arc::new(Mesh2D::build_uniform_square(n).unwrap());
        let v = Arc::new(FESpace::build(m.clone(), vf, 2).unwrap());
        let p = Arc::new(FESpace::build_unconstrained(m, pf, 1).unwrap());
        let sys = assemble_stokes_blocks(&v, &p, 1.0, &AssemblyOptions::default()).unwrap();
        (v, p, sys)
    }

    #[test]
    fn saddle_zero_rhs_and_missing_constraint() {
        let (_, _, mut sys) = stokes(4, ElementFamily::CR, ElementFamily::P0);
        let (u, p, _) = solve_saddle(&sys).unwrap();
        assert!(u.iter().chain(&p).all(|&v| v == 0.0));
        sys.mean_constraint.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(solve_saddle(&sys).unwrap_err().status(), SolveStatus::Singular);
    }

    #[test]
    fn saddle_recovers_discrete_fields() {
        // rhs built from the discrete operators, so (u_ex, p_lin) solves it exactly
        let (v, p, mut sys) = stokes(4, ElementFamily::P2, ElementFamily::P1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u_ex: Vec<f64> = (0..v.n_dofs())
            .map(|i| if v.dirichlet_mask()[i] { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let p_lin = interpolate_nodal(&p, |x| [x[0] - 0.5 + 2.0 * (x[1] - 0.5), 0.0]).unwrap();
        let bt_p = sys.b.transpose().mul_vec(&p_lin.coeffs);
        let au = sys.a.mul_vec(&u_ex);
        sys.rhs_u = au.iter().zip(&bt_p).map(|(a, b)| a - b).collect();
        sys.rhs_p = sys.b.mul_vec(&u_ex);
        let (u, ph, rep) = solve_saddle(&sys).unwrap();
        assert_eq!(rep.status, SolveStatus::Ok);
        for (a, b) in u.iter().zip(&u_ex) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in ph.iter().zip(&p_lin.coeffs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn saddle_pressure_mean_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (vf, pf) in [(ElementFamily::CR, ElementFamily::P0), (ElementFamily::P2, ElementFamily::P1)] {
            let (_, _, mut sys) = stokes(4, vf, pf);
            sys.rhs_u = (0..sys.n_u()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (u, p, _) = solve_saddle(&sys).unwrap();
            let mean: f64 = p.iter().zip(&sys.mean_constraint).map(|(a, b)| a * b).sum();
            assert!(mean.abs() <= 1e-12);
            // discrete divergence of the velocity vanishes
            let div = sys.b.mul_vec(&u);
            assert!(div.iter().all(|d| d.abs() < 1e-10));
            assert!(u.iter().zip(&sys.velocity_dirichlet).all(|(v, &d)| !d || *v == 0.0));
        }
    }

    #[test]
    fn saddle_absorbs_incompatible_divergence_data() {
        // a divergence rhs with nonzero total forces a nonzero multiplier
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (vf, pf) in [(ElementFamily::CR, ElementFamily::P0), (ElementFamily::P2, ElementFamily::P1)] {
            let (_, _, mut sys) = stokes(4, vf, pf);
            sys.rhs_u = (0..sys.n_u()).map(|_| rng.random_range(-1.0..1.0)).collect();
            sys.rhs_p = (0..sys.n_p()).map(|_| rng.random_range(0.0..1.0)).collect();
            let (u, p, rep) = solve_saddle(&sys).unwrap();
            let lambda = -sys.rhs_p.iter().sum::<f64>() / sys.mean_constraint.iter().sum::<f64>();
            let bu = sys.b.mul_vec(&u);
            for q in 0..sys.n_p() {
                assert!((-bu[q] + lambda * sys.mean_constraint[q] + sys.rhs_p[q]).abs() < 1e-10);
            }
            let (au, btp) = (sys.a.mul_vec(&u), sys.b.transpose().mul_vec(&p));
            for i in (0..sys.n_u()).filter(|&i| !sys.velocity_dirichlet[i]) {
                assert!((au[i] - btp[i] - sys.rhs_u[i]).abs() < 1e-10);
            }
            assert!(rep.residual_norm < 1e-10);
        }
    }

    #[test]
    fn saddle_lifts_boundary_values() {
        // (y, x) is linear and divergence free, so it solves Stokes with f = 0, p = 0
        let (v, _, mut sys) = stokes(4, ElementFamily::P2, ElementFamily::P1);
        let u_ex = interpolate_nodal(&v, |x| [x[1], x[0]]).unwrap();
        sys.velocity_boundary = u_ex.coeffs.clone();
        let (u, p, _) = solve_saddle(&sys).unwrap();
        for (a, b) in u.iter().zip(&u_ex.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-10));
    }
}
