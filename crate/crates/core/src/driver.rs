//! The decoupled solve: Picard iteration for the potential, Oseen iteration
//! for the flow, then recovery of `H`, `M`, `psi`, `p` and `B`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_convection, assemble_edge_mass, assemble_edge_rhs, assemble_elliptic_rhs, assemble_load,
    assemble_mass, assemble_ns_rhs, assemble_scalar_rhs, assemble_stokes_blocks, assemble_weighted_stiffness,
    AssemblyOptions, Coefficient, EllipticSource, FlowSolution, ScalarPotentialSolution, SparseMatrix,
};
use crate::error::{FhdError, Result};
use crate::fespace::{interpolate_nodal, FEField, FESpace};
use crate::linalg::{solve_saddle, solve_spd, SolveReport};
use crate::material::{beta_raw, susceptibility_raw, MaterialParams};
use crate::mesh::Mesh2D;
use crate::refelem::ElementFamily;
use crate::Point;

pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Discrete spaces `(S_h, U_h, V_h, W_h)` for the potential, the magnetic
/// fields, the velocity and the pressures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementPair {
    /// P1, NE0, CR^2, P0.
    L0,
    /// P2, NE1, P2^2, P1.
    L1,
}

impl ElementPair {
    pub fn families(self) -> [ElementFamily; 4] {
        match self {
            ElementPair::L0 => [ElementFamily::P1, ElementFamily::NE0, ElementFamily::CR, ElementFamily::P0],
            ElementPair::L1 => [ElementFamily::P2, ElementFamily::NE1, ElementFamily::P2, ElementFamily::P1],
        }
    }
}

impl fmt::Display for ElementPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementPair::L0 => "l0",
            ElementPair::L1 => "l1",
        })
    }
}

impl FromStr for ElementPair {
    type Err = FhdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l0" => Ok(ElementPair::L0),
            "l1" => Ok(ElementPair::L1),
            _ => Err(FhdError::Config(format!("unknown element pair '{s}' (expected l0 or l1)"))),
        }
    }
}

#[derive(Clone, Default)]
pub enum PotentialSource {
    #[default]
    Zero,
    Manufactured(Arc<dyn ScalarPotentialSolution>),
    /// Applied field `H_e`; the potential vanishes on the boundary.
    External(VectorFn),
}

#[derive(Clone, Default)]
pub enum FlowSource {
    #[default]
    Zero,
    /// Force from the strong form; velocity boundary values from the exact `u`.
    Manufactured(Arc<dyn FlowSolution>),
    /// Body force with a no-slip boundary.
    BodyForce(VectorFn),
}

#[derive(Clone)]
pub struct FhdConfig {
    pub n: usize,
    pub pair: ElementPair,
    pub params: MaterialParams,
    pub picard_iters: usize,
    pub oseen_iters: usize,
    pub quad_bump: usize,
    /// If set, both iterations stop once the update drops below this value,
    /// with the iteration counts acting as caps.
    pub stagnation_tol: Option<f64>,
    /// Recover `H_h` through an edge-mass solve instead of `G phi_h`.
    pub h_by_projection: bool,
    pub potential: PotentialSource,
    pub flow: FlowSource,
}

impl FhdConfig {
    pub fn new(n: usize, pair: ElementPair, params: MaterialParams) -> Self {
        Self {
            n,
            pair,
            params,
            picard_iters: 2,
            oseen_iters: 2,
            quad_bump: 2,
            stagnation_tol: None,
            h_by_projection: false,
            potential: PotentialSource::Zero,
            flow: FlowSource::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FhdError::Config("mesh level N must be at least 1".into()));
        }
        if self.picard_iters == 0 || self.oseen_iters == 0 {
            return Err(FhdError::Config("iteration counts must be at least 1".into()));
        }
        self.params.validate()
    }
}

impl fmt::Debug for FhdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FhdConfig")
            .field("n", &self.n)
            .field("pair", &self.pair)
            .field("params", &self.params)
            .field("picard_iters", &self.picard_iters)
            .field("oseen_iters", &self.oseen_iters)
            .field("quad_bump", &self.quad_bump)
            .field("stagnation_tol", &self.stagnation_tol)
            .finish_non_exhaustive()
    }
}

/// One nonlinear sweep: linear solve report plus the size of the update.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepReport {
    pub solve: SolveReport,
    /// `||grad(x^n - x^{n-1})||` (broken for CR).
    pub update: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub poisson: Option<SolveReport>,
    pub picard: Vec<SweepReport>,
    /// Free-dof residual of the last Picard system, re-evaluated after the solve.
    pub picard_residual: f64,
    pub stokes: Option<SolveReport>,
    pub oseen: Vec<SweepReport>,
    pub recovery: Vec<SolveReport>,
    pub grad_phi_norm: f64,
    pub grad_u_norm: f64,
    /// Largest `|(alpha(|H_h|) - 1) H_h|` over the quadrature samples of the
    /// magnetization projection.
    pub max_magnetization_sample: f64,
}

#[derive(Debug, Clone)]
pub struct FhdSolution {
    pub phi: FEField,
    pub h: FEField,
    pub m: FEField,
    pub u: FEField,
    pub ptilde: FEField,
    pub psi: FEField,
    pub p: FEField,
    pub b: FEField,
    pub diagnostics: Diagnostics,
}

/// Spaces and cached operators for one configuration.
pub struct FhdProblem {
    pub config: FhdConfig,
    pub mesh: Arc<Mesh2D>,
    pub s: Arc<FESpace>,
    pub u: Arc<FESpace>,
    pub v: Arc<FESpace>,
    pub w: Arc<FESpace>,
    opts: AssemblyOptions,
    laplace: SparseMatrix,
}

fn seminorm(k: &SparseMatrix, x: &[f64]) -> f64 {
    k.bilinear(x, x).max(0.0).sqrt()
}

fn solve_free(a: &SparseMatrix, rhs: &[f64], space: &FESpace, stage: &'static str) -> Result<(Vec<f64>, SolveReport)> {
    let free = space.free_dofs();
    let ared = a.restrict(&free, &free);
    let bred: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
    let (x, rep) = solve_spd(&ared, &bred).map_err(FhdError::solve(stage))?;
    let mut full = vec![0.0; space.n_dofs()];
    for (k, &i) in free.iter().enumerate() {
        full[i] = x[k];
    }
    Ok((full, rep))
}

impl FhdProblem {
    pub fn new(config: FhdConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Arc::new(Mesh2D::build_uniform_square(config.n)?);
        let [sf, uf, vf, wf] = config.pair.families();
        let s = Arc::new(FESpace::build(mesh.clone(), sf, 1)?);
        let u = Arc::new(FESpace::build_unconstrained(mesh.clone(), uf, 1)?);
        let v = Arc::new(FESpace::build(mesh.clone(), vf, 2)?);
        let w = Arc::new(FESpace::build_unconstrained(mesh.clone(), wf, 1)?);
        let opts = AssemblyOptions {
            quad_bump: config.quad_bump,
            element_order: None,
        };
        let laplace = assemble_weighted_stiffness(&s, Coefficient::Unit, &opts)?;
        Ok(Self {
            config,
            mesh,
            s,
            u,
            v,
            w,
            opts,
            laplace,
        })
    }

    pub fn options(&self) -> &AssemblyOptions {
        &self.opts
    }

    pub fn elliptic_rhs(&self) -> Result<Vec<f64>> {
        let source = match &self.config.potential {
            PotentialSource::Zero => EllipticSource::Zero,
            PotentialSource::Manufactured(phi) => EllipticSource::Manufactured(phi.as_ref(), &self.config.params),
            PotentialSource::External(h) => EllipticSource::External(h.as_ref(), self.config.params.mu0),
        };
        assemble_elliptic_rhs(&self.s, source, &self.opts)
    }

    /// Poisson problem with the same data (`alpha = 1`).
    pub fn initial_guess_phi(&self) -> Result<(FEField, SolveReport)> {
        let rhs = self.elliptic_rhs()?;
        let (x, rep) = solve_free(&self.laplace, &rhs, &self.s, "initial potential")?;
        Ok((FEField::from_coeffs(self.s.clone(), x)?, rep))
    }

    /// Frozen-coefficient sweeps starting from `phi0`. Returns the final
    /// iterate, the per-sweep reports and the free-dof residual of the last
    /// linear system.
    pub fn picard_elliptic(&self, phi0: FEField) -> Result<(FEField, Vec<SweepReport>, f64)> {
        let rhs = self.elliptic_rhs()?;
        let free = self.s.free_dofs();
        let mut phi = phi0;
        let mut sweeps = Vec::new();
        let mut last_residual = 0.0;
        for _ in 0..self.config.picard_iters {
            let a = assemble_weighted_stiffness(
                &self.s,
                Coefficient::AlphaOfField(&phi, &self.config.params),
                &self.opts,
            )?;
            let (x, rep) = solve_free(&a, &rhs, &self.s, "picard")?;
            let ax = a.mul_vec(&x);
            last_residual = free.iter().map(|&i| (ax[i] - rhs[i]).abs()).fold(0.0, f64::max);
            let diff: Vec<f64> = x.iter().zip(&phi.coeffs).map(|(a, b)| a - b).collect();
            let update = seminorm(&self.laplace, &diff);
            phi = FEField::from_coeffs(self.s.clone(), x)?;
            sweeps.push(SweepReport { solve: rep, update });
            if self.config.stagnation_tol.is_some_and(|tol| update < tol) {
                break;
            }
        }
        Ok((phi, sweeps, last_residual))
    }

    fn flow_rhs(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let zero = vec![0.0; self.v.n_dofs()];
        match &self.config.flow {
            FlowSource::Zero => Ok((zero.clone(), zero)),
            FlowSource::BodyForce(f) => Ok((assemble_load(&self.v, f.as_ref(), &self.opts)?, zero)),
            FlowSource::Manufactured(flow) => {
                let rhs = assemble_ns_rhs(&self.v, flow.as_ref(), &self.config.params, &self.opts)?;
                let bc = interpolate_nodal(&self.v, |x| flow.u(x))?;
                Ok((rhs, bc.coeffs))
            }
        }
    }

    fn saddle_solve(&self, convecting: Option<&FEField>, stage: &'static str) -> Result<(FEField, FEField, SolveReport)> {
        let mut sys = assemble_stokes_blocks(&self.v, &self.w, self.config.params.eta, &self.opts)?;
        if let Some(w) = convecting {
            let n = assemble_convection(&self.v, w, self.config.params.rho, &self.opts)?;
            sys.a = sys.a.add_scaled(&n, 1.0);
        }
        (sys.rhs_u, sys.velocity_boundary) = self.flow_rhs()?;
        let (u, p, rep) = solve_saddle(&sys).map_err(FhdError::solve(stage))?;
        Ok((
            FEField::from_coeffs(self.v.clone(), u)?,
            FEField::from_coeffs(self.w.clone(), p)?,
            rep,
        ))
    }

    /// Stokes problem with the same data (convection dropped).
    pub fn initial_guess_velocity(&self) -> Result<(FEField, FEField, SolveReport)> {
        self.saddle_solve(None, "initial velocity")
    }

    /// Oseen sweeps with the convecting velocity frozen at the previous iterate.
    pub fn oseen_ns(&self, u0: FEField) -> Result<(FEField, FEField, Vec<SweepReport>)> {
        let visc = assemble_weighted_stiffness(&self.v, Coefficient::Unit, &self.opts)?;
        let mut u = u0;
        let mut p = FEField::zeros(self.w.clone());
        let mut sweeps = Vec::new();
        for _ in 0..self.config.oseen_iters {
            let (un, pn, rep) = self.saddle_solve(Some(&u), "oseen")?;
            let diff: Vec<f64> = un.coeffs.iter().zip(&u.coeffs).map(|(a, b)| a - b).collect();
            let update = seminorm(&visc, &diff);
            (u, p) = (un, pn);
            sweeps.push(SweepReport { solve: rep, update });
            if self.config.stagnation_tol.is_some_and(|tol| update < tol) {
                break;
            }
        }
        Ok((u, p, sweeps))
    }

    /// `H_h`, `M_h`, `psi_h`, `p_h` and `B_h` from the potential and the flow.
    pub fn recover_fields(&self, phi: FEField, u: FEField, ptilde: FEField) -> Result<FhdSolution> {
        let params = self.config.params;
        let mut diag = Diagnostics::default();
        let edge_mass = assemble_edge_mass(&self.u, &self.opts)?;

        let h = if self.config.h_by_projection {
            let rhs = assemble_edge_rhs(&self.u, &|t, bary, _| phi.eval(t, bary).grad[0], &self.opts)?;
            let (x, rep) = solve_spd(&edge_mass, &rhs).map_err(FhdError::solve("field projection"))?;
            diag.recovery.push(rep);
            FEField::from_coeffs(self.u.clone(), x)?
        } else {
            let g = self.s.gradient_matrix(&self.u)?;
            FEField::from_coeffs(self.u.clone(), g.mul_vec(&phi.coeffs))?
        };

        let sample = std::cell::Cell::new(0.0f64);
        let rhs = assemble_edge_rhs(
            &self.u,
            &|t, bary, _| {
                let hv = h.eval(t, bary).value;
                let s = susceptibility_raw(hv[0].hypot(hv[1]), &params);
                let mv = [s * hv[0], s * hv[1]];
                sample.set(sample.get().max(mv[0].hypot(mv[1])));
                mv
            },
            &self.opts,
        )?;
        let (mc, rep) = solve_spd(&edge_mass, &rhs).map_err(FhdError::solve("magnetization projection"))?;
        diag.recovery.push(rep);
        let m = FEField::from_coeffs(self.u.clone(), mc)?;

        let pmass = assemble_mass(&self.w, &self.opts)?;
        let rhs = assemble_scalar_rhs(
            &self.w,
            &|t, bary, _| {
                let hv = h.eval(t, bary).value;
                beta_raw(hv[0].hypot(hv[1]), &params)
            },
            &self.opts,
        )?;
        let (psic, rep) = solve_spd(&pmass, &rhs).map_err(FhdError::solve("potential projection"))?;
        diag.recovery.push(rep);
        let psi = FEField::from_coeffs(self.w.clone(), psic)?;

        let weights = pmass.mul_vec(&vec![1.0; self.w.n_dofs()]);
        let mut pc: Vec<f64> = ptilde.coeffs.iter().zip(&psi.coeffs).map(|(a, b)| a + params.mu0 * b).collect();
        let mean = pc.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>() / weights.iter().sum::<f64>();
        pc.iter_mut().for_each(|v| *v -= mean);
        let p = FEField::from_coeffs(self.w.clone(), pc)?;

        let bc: Vec<f64> = h.coeffs.iter().zip(&m.coeffs).map(|(h, m)| params.mu0 * (h + m)).collect();
        let b = FEField::from_coeffs(self.u.clone(), bc)?;

        diag.grad_phi_norm = seminorm(&self.laplace, &phi.coeffs);
        let visc = assemble_weighted_stiffness(&self.v, Coefficient::Unit, &self.opts)?;
        diag.grad_u_norm = seminorm(&visc, &u.coeffs);
        diag.max_magnetization_sample = sample.get();
        Ok(FhdSolution {
            phi,
            h,
            m,
            u,
            ptilde,
            psi,
            p,
            b,
            diagnostics: diag,
        })
    }
}

/// Full decoupled solve for one configuration.
pub fn solve_fhd(config: &FhdConfig) -> Result<FhdSolution> {
    let problem = FhdProblem::new(config.clone())?;
    let (phi0, poisson) = problem.initial_guess_phi()?;
    let (phi, picard, picard_residual) = problem.picard_elliptic(phi0)?;
    let (u0, _, stokes) = problem.initial_guess_velocity()?;
    let (u, ptilde, oseen) = problem.oseen_ns(u0)?;
    let mut sol = problem.recover_fields(phi, u, ptilde)?;
    let d = &mut sol.diagnostics;
    d.poisson = Some(poisson);
    d.picard = picard;
    d.picard_residual = picard_residual;
    d.stokes = Some(stokes);
    d.oseen = oseen;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_config(pair: ElementPair) -> FhdConfig {
        FhdConfig::new(4, pair, MaterialParams::default())
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        for pair in [ElementPair::L0, ElementPair::L1] {
            let sol = solve_fhd(&zero_config(pair)).unwrap();
            for f in [&sol.phi, &sol.h, &sol.m, &sol.u, &sol.ptilde, &sol.b] {
                assert!(f.coeffs.iter().all(|&c| c == 0.0));
            }
            // psi = beta(0) is a nonzero constant; the mean shift removes it from p
            assert!(sol.p.coeffs.iter().all(|c| c.abs() < 1e-14));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = zero_config(ElementPair::L0);
        c.picard_iters = 0;
        assert!(matches!(solve_fhd(&c), Err(FhdError::Config(_))));
        c = zero_config(ElementPair::L0);
        c.n = 0;
        assert!(solve_fhd(&c).is_err());
        assert!("l2".parse::<ElementPair>().is_err());
        assert_eq!("l1".parse::<ElementPair>().unwrap(), ElementPair::L1);
    }

    #[test]
    fn external_field_stability_and_projection_path() {
        let h_e: VectorFn = Arc::new(|p: Point| [1.0 + p[1], (3.0 * p[0]).sin()]);
        let mut c = zero_config(ElementPair::L0);
        c.n = 8;
        c.params = MaterialParams::new(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        c.potential = PotentialSource::External(h_e);
        let sol = solve_fhd(&c).unwrap();
        // ||H_e|| by a fine midpoint sum
        let k = 400;
        let mut sq = 0.0;
        for i in 0..k {
            for j in 0..k {
                let p = [(i as f64 + 0.5) / k as f64, (j as f64 + 0.5) / k as f64];
                let h = [1.0 + p[1], (3.0 * p[0]).sin()];
                sq += (h[0] * h[0] + h[1] * h[1]) / (k * k) as f64;
            }
        }
        assert!(sol.diagnostics.grad_phi_norm > 0.0);
        assert!(sol.diagnostics.grad_phi_norm <= sq.sqrt() / c.params.mu0);
        let mut cp = c.clone();
        cp.h_by_projection = true;
        let sp = solve_fhd(&cp).unwrap();
        for (a, b) in sp.h.coeffs.iter().zip(&sol.h.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sol.diagnostics.max_magnetization_sample < c.params.ms);
    }

    #[test]
    fn body_force_energy_identity() {
        let f: VectorFn = Arc::new(|p: Point| [p[1] - 0.5, (2.0 * p[0]).cos()]);
        for pair in [ElementPair::L0, ElementPair::L1] {
            let mut c = zero_config(pair);
            c.flow = FlowSource::BodyForce(f.clone());
            c.params = MaterialParams::new(1.0, 1.0, 1.0, 5.0, 0.3).unwrap();
            let prob = FhdProblem::new(c.clone()).unwrap();
            let (u0, p0, _) = prob.initial_guess_velocity().unwrap();
            let load = assemble_load(&prob.v, f.as_ref(), prob.options()).unwrap();
            let visc = assemble_weighted_stiffness(&prob.v, Coefficient::Unit, prob.options()).unwrap();
            let mean: f64 = assemble_mass(&prob.w, prob.options())
                .unwrap()
                .mul_vec(&p0.coeffs)
                .iter()
                .sum();
            assert!(mean.abs() < 1e-12);
            let sys = assemble_stokes_blocks(&prob.v, &prob.w, 1.0, prob.options()).unwrap();
            let mut u = u0;
            for _ in 0..3 {
                let (un, _, _) = prob.saddle_solve(Some(&u), "oseen").unwrap();
                assert!(sys.b.mul_vec(&un.coeffs).iter().all(|d| d.abs() < 1e-10));
                let lhs = c.params.eta * visc.bilinear(&un.coeffs, &un.coeffs);
                let rhs: f64 = load.iter().zip(&un.coeffs).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
                assert!(lhs <= rhs * (1.0 + 1e-10));
                u = un;
            }
        }
    }
}
