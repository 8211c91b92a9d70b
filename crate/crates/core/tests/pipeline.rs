//! Whole-pipeline checks through the public API.

use fhd_core::assembly::assemble_stokes_blocks;
use fhd_core::driver::FhdProblem;
use fhd_core::verify::{curl_inf, measure};
use fhd_core::{solve_fhd, ElementPair, ManufacturedCase};

// Reference relative errors of the lowest-order pair.
const ROW_N4_PHI: f64 = 0.3943;
const ROW_N16: [f64; 5] = [0.1018, 0.1018, 0.1018, 0.2352, 0.0717];

#[test]
fn lowest_order_levels_match_reference_rows() {
    let case = ManufacturedCase::case_2d_l0();
    let coarse = measure(&case, &solve_fhd(&case.config(4, ElementPair::L0)).unwrap());
    assert!((coarse.err_phi_h1 - ROW_N4_PHI).abs() <= 0.1 * ROW_N4_PHI);
    let row = measure(&case, &solve_fhd(&case.config(16, ElementPair::L0)).unwrap());
    for (got, want) in row.errors().iter().zip(ROW_N16) {
        assert!((got - want).abs() <= 0.1 * want, "{got} vs {want}");
    }
}

#[test]
fn recovered_fields_keep_their_identities() {
    for pair in [ElementPair::L0, ElementPair::L1] {
        let case = ManufacturedCase::for_pair(pair);
        let config = case.config(8, pair);
        let prob = FhdProblem::new(config.clone()).unwrap();
        let sol = solve_fhd(&config).unwrap();

        // H is the discrete gradient of phi, coefficient for coefficient
        let g = prob.s.gradient_matrix(&prob.u).unwrap();
        assert_eq!(g.mul_vec(&sol.phi.coeffs), sol.h.coeffs);
        assert!(curl_inf(&sol.h) <= 1e-12);

        // B = mu0 (H + M) coefficient-wise
        let mu0 = config.params.mu0;
        for ((b, h), m) in sol.b.coeffs.iter().zip(&sol.h.coeffs).zip(&sol.m.coeffs) {
            assert!((b - mu0 * (h + m)).abs() <= 1e-14 * (1.0 + b.abs()));
        }

        // p - (p~ + mu0 psi) is a constant
        let shift: Vec<f64> = sol
            .p
            .coeffs
            .iter()
            .zip(&sol.ptilde.coeffs)
            .zip(&sol.psi.coeffs)
            .map(|((p, pt), s)| p - pt - mu0 * s)
            .collect();
        assert!(shift.iter().all(|s| (s - shift[0]).abs() < 1e-12));

        // velocity is discretely divergence free
        let blocks = assemble_stokes_blocks(&prob.v, &prob.w, config.params.eta, prob.options()).unwrap();
        assert!(blocks.b.mul_vec(&sol.u.coeffs).iter().all(|d| d.abs() < 1e-10));

        let d = &sol.diagnostics;
        assert!(d.picard_residual <= 1e-9, "{}", d.picard_residual);
        assert!(d.max_magnetization_sample < config.params.ms);
        assert_eq!(d.picard.len(), config.picard_iters);
        assert_eq!(d.oseen.len(), config.oseen_iters);
    }
}

#[test]
fn subproblems_do_not_depend_on_solve_order() {
    let case = ManufacturedCase::case_2d_l0();
    let config = case.config(8, ElementPair::L0);
    let reference = solve_fhd(&config).unwrap();

    let prob = FhdProblem::new(config).unwrap();
    let (u0, _, _) = prob.initial_guess_velocity().unwrap();
    let (u, ptilde, _) = prob.oseen_ns(u0).unwrap();
    let (phi0, _) = prob.initial_guess_phi().unwrap();
    let (phi, _, _) = prob.picard_elliptic(phi0).unwrap();
    assert_eq!(phi.coeffs, reference.phi.coeffs);
    assert_eq!(u.coeffs, reference.u.coeffs);
    assert_eq!(ptilde.coeffs, reference.ptilde.coeffs);
}
