#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use perifront::grid::{make_cell_grid, CellGrid, PeriodicField};
use perifront::models::{benchmark2, chain, ReactionModel};

pub fn cell(n: usize) -> CellGrid {
    make_cell_grid(2.0 * PI, n).unwrap()
}

/// Largest real part among the eigenvalues of a dense row-major matrix.
pub fn dense_principal(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |r, c| a[r][c]);
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Ten cooperative media drawn from a fixed seed: six periodic benchmarks, four 3-chains.
pub fn random_media(g: CellGrid) -> Vec<ReactionModel> {
    let mut runner = TestRunner::deterministic();
    let mut draw = |lo: f64, hi: f64| (lo..hi).new_tree(&mut runner).unwrap().current();
    let l = g.l;
    let mut out = Vec::new();
    for _ in 0..6 {
        let (da, dp, dk) = (draw(0.0, 0.6), draw(0.0, 6.0), draw(1.0, 2.999).floor());
        let (qa, qp) = (draw(0.0, 0.5), draw(0.0, 6.0));
        let d = PeriodicField::from_fn(g, |x| 1.0 + da * (2.0 * PI * dk * x / l + dp).cos());
        let q = PeriodicField::from_fn(g, |x| qa * (2.0 * PI * x / l + qp).cos());
        out.push(benchmark2("random-benchmark", d, q));
    }
    for _ in 0..4 {
        let (rm, ra, rp) = (draw(0.8, 1.5), draw(0.0, 0.5), draw(0.0, 6.0));
        let r = PeriodicField::from_fn(g, |x| rm + ra * (2.0 * PI * x / l + rp).cos());
        out.push(chain(g, 3, r, draw(0.2, 0.8), draw(1.5, 3.0), draw(0.0, 0.3)));
    }
    out
}
