//! Fixtures shared by the criterion benchmarks.

use fhd_core::driver::FhdProblem;
use fhd_core::{ElementPair, ManufacturedCase};

/// The manufactured problem of `pair` on level `n`, ready to solve.
pub fn problem(n: usize, pair: ElementPair) -> FhdProblem {
    let case = ManufacturedCase::for_pair(pair);
    FhdProblem::new(case.config(n, pair)).expect("valid level")
}

/// `count` log-spaced samples of `[lo, hi]`.
pub fn log_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}
