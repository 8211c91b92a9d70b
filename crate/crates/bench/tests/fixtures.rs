use fhd_bench::{log_samples, problem};
use fhd_core::ElementPair;

#[test]
fn fixtures_build() {
    let xs = log_samples(1e-3, 1e3, 7);
    assert_eq!(xs.len(), 7);
    assert!((xs[0] - 1e-3).abs() < 1e-15 && (xs[6] - 1e3).abs() < 1e-9);
    assert!((xs[3] - 1.0).abs() < 1e-12);
    for pair in [ElementPair::L0, ElementPair::L1] {
        let p = problem(2, pair);
        assert_eq!(p.mesh.n_triangles(), 8);
        assert!(p.initial_guess_phi().is_ok());
    }
}
