mod common;

use perifront::eigen::{principal_eig_block, principal_eig_scalar, COUPLED_TOL, SCALAR_TOL};
use perifront::grid::{assemble_tilted_operator, Direction, OperatorSpec, PeriodicField};
use perifront::models::{competition_to_cooperative, competition_steady_states, periodic2, CompetitionSpec, State};

use common::{cell, dense_principal};

fn medium(n: usize, lambda: f64) -> OperatorSpec {
    let g = cell(n);
    OperatorSpec::new(
        PeriodicField::from_fn(g, |x| 1.0 + 0.4 * x.cos()),
        PeriodicField::from_fn(g, |x| 0.3 * (2.0 * x).sin()),
        PeriodicField::from_fn(g, |x| 1.0 + 0.5 * (x + 0.7).cos()),
        lambda,
        Direction::Plus,
    )
    .unwrap()
}

#[test]
fn scalar_matches_dense_spectrum() {
    for n in [32, 64, 128] {
        for lambda in [0.0, 0.6, -0.4] {
            let spec = medium(n, lambda);
            let dense = dense_principal(&assemble_tilted_operator(&spec).unwrap().to_dense());
            let p = principal_eig_scalar(&spec, SCALAR_TOL).unwrap();
            assert!((p.value - dense).abs() < 1e-8, "n = {n}, lambda = {lambda}: {} vs {dense}", p.value);
        }
    }
}

#[test]
fn coupled_matches_dense_spectrum() {
    let model = periodic2(cell(64), 0.5);
    let op = model.coupled_operator(State::One).unwrap();
    let p = principal_eig_block(&op, COUPLED_TOL).unwrap();
    let dense = dense_principal(&op.to_dense());
    assert!((p.value - dense).abs() < 1e-6, "{} vs {dense}", p.value);
    assert!(p.value < 0.0);
}

#[test]
fn transformed_periodic_competition_matches_dense() {
    let g = cell(64);
    let mut spec = CompetitionSpec::constant(g, 1.0, 1.0, 0.3, 1.5, 1.0);
    spec.b[0] = PeriodicField::from_fn(g, |x| 1.0 + 0.3 * x.cos());
    let ss = competition_steady_states(&spec, 1e-11).unwrap();
    let model = competition_to_cooperative(&spec, &ss).unwrap();
    let op = model.coupled_operator(State::One).unwrap();
    let p = principal_eig_block(&op, COUPLED_TOL).unwrap();
    let dense = dense_principal(&op.to_dense());
    assert!(p.value < 0.0);
    assert!((p.value - dense).abs() < 1e-6, "{} vs {dense}", p.value);
}
