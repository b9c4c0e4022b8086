use std::f64::consts::PI;

use proptest::prelude::*;

use perifront::certify::{residual_sign_check, sub_supercritical_at, Cutoff, Sampling};
use perifront::dispersion::Dispersion;
use perifront::eigen::{principal_eig_scalar, SCALAR_TOL};
use perifront::grid::{assemble_tilted_operator, make_cell_grid, CellGrid, Direction, OperatorSpec, PeriodicField};
use perifront::models::{benchmark2, constant2, ReactionModel};

fn cell(n: usize) -> CellGrid {
    make_cell_grid(2.0 * PI, n).unwrap()
}

fn cosine(g: CellGrid, mean: f64, amp: f64, k: f64, phase: f64) -> PeriodicField {
    PeriodicField::from_fn(g, |x| mean + amp * (k * x + phase).cos())
}

fn spec(g: CellGrid, d: (f64, f64), q: (f64, f64), eta: (f64, f64), lambda: f64) -> OperatorSpec {
    OperatorSpec::new(
        cosine(g, 1.0, d.0, 1.0, d.1),
        cosine(g, 0.0, q.0, 2.0, q.1),
        cosine(g, 0.0, eta.0, 1.0, eta.1),
        lambda,
        Direction::Plus,
    )
    .unwrap()
}

fn medium(d_amp: f64, q_amp: f64) -> ReactionModel {
    let g = cell(32);
    benchmark2("random", cosine(g, 1.0, d_amp, 1.0, 0.3), cosine(g, 0.0, q_amp, 1.0, 1.1))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn constants_are_annihilated(d_amp in 0.0..0.8f64, ph in 0.0..6.0f64, q0 in -1.0..1.0f64) {
        let g = cell(64);
        let s = OperatorSpec::new(
            cosine(g, 1.0, d_amp, 1.0, ph),
            PeriodicField::constant(g, q0),
            PeriodicField::constant(g, 0.0),
            0.0,
            Direction::Plus,
        ).unwrap();
        let a = assemble_tilted_operator(&s).unwrap();
        let out = a.apply(&vec![1.0; 64]);
        prop_assert!(out.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn assembled_operator_is_metzler(da in 0.0..0.8f64, qa in 0.0..1.0f64, ea in 0.0..2.0f64, lam in -1.0..1.0f64) {
        let a = assemble_tilted_operator(&spec(cell(64), (da, 0.2), (qa, 0.5), (ea, 0.9), lam)).unwrap();
        prop_assert!(a.min_off_diagonal() >= 0.0);
    }

    #[test]
    fn eigenvector_positive_and_residual_bounded(da in 0.0..0.8f64, qa in 0.0..1.0f64, ea in 0.0..2.0f64, lam in -1.0..1.0f64) {
        let p = principal_eig_scalar(&spec(cell(64), (da, 0.2), (qa, 0.5), (ea, 0.9), lam), SCALAR_TOL).unwrap();
        prop_assert!(p.vector.min() > 0.0);
        prop_assert!(p.residual <= SCALAR_TOL * p.value.abs().max(1.0) * 10.0);
    }

    #[test]
    fn kappa_monotone_in_eta(da in 0.0..0.8f64, ea in 0.0..2.0f64, bump in 0.0..1.0f64, lam in 0.0..1.0f64) {
        let g = cell(64);
        let lo = spec(g, (da, 0.2), (0.3, 0.5), (ea, 0.9), lam);
        let mut hi = lo.clone();
        hi.eta = lo.eta.zip_with(&cosine(g, bump, bump, 3.0, 0.0), |a, b| a + b.max(0.0));
        let k1 = principal_eig_scalar(&lo, SCALAR_TOL).unwrap().value;
        let k2 = principal_eig_scalar(&hi, SCALAR_TOL).unwrap().value;
        prop_assert!(k1 <= k2 + 1e-9);
    }

    #[test]
    fn kappa_shift_covariance(da in 0.0..0.8f64, ea in 0.0..2.0f64, c in -3.0..3.0f64, lam in 0.0..1.0f64) {
        let s = spec(cell(64), (da, 0.2), (0.3, 0.5), (ea, 0.9), lam);
        let mut t = s.clone();
        t.eta = s.eta.map(|v| v + c);
        let k1 = principal_eig_scalar(&s, SCALAR_TOL).unwrap().value;
        let k2 = principal_eig_scalar(&t, SCALAR_TOL).unwrap().value;
        prop_assert!((k2 - k1 - c).abs() < 1e-8);
    }

    #[test]
    fn structural_identity(j in 0usize..32, u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
        let m = medium(0.4, 0.3);
        let u = [u1, u2];
        let f = m.evaluate_f(j, &u);
        prop_assert!((f[0] - u1 * m.h[0].eval(j, &u)).abs() < 1e-14);
        let a = m.a[1][0].as_ref().unwrap().values[j];
        prop_assert!((f[1] - a * u1 - u2 * m.h[1].eval(j, &u)).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_differences(j in 0usize..32, u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
        let m = medium(0.4, 0.3);
        let u = [u1, u2];
        let jac = m.evaluate_jacobian(j, &u);
        let e = 1e-6;
        for k in 0..2 {
            let mut p = u;
            let mut q = u;
            p[k] += e;
            q[k] -= e;
            let (fp, fq) = (m.evaluate_f(j, &p), m.evaluate_f(j, &q));
            for i in 0..2 {
                prop_assert!((jac[i][k] - (fp[i] - fq[i]) / (2.0 * e)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cutoff_bound_holds_for_any_anchor(s_hi in -10.0..10.0f64) {
        let chi = Cutoff::new(s_hi);
        prop_assert!(chi.derivative_bound() <= 1.0);
        prop_assert_eq!(chi.value(s_hi - 4.0), 1.0);
        prop_assert_eq!(chi.value(s_hi), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn kappa_ordering_and_root_ordering(da in 0.0..0.5f64, qa in 0.0..0.4f64) {
        let m = medium(da, qa);
        let disp = Dispersion::new(&m);
        let (c0, l0) = disp.critical_speed().unwrap();
        for k in 0..=8 {
            let lam = l0 * k as f64 / 8.0;
            prop_assert!(disp.kappa(0, lam).unwrap() > disp.kappa(1, lam).unwrap());
        }
        let mut prev = f64::INFINITY;
        for fac in [1.0, 1.1, 1.3, 1.6, 2.0] {
            let lc = disp.lambda_c(fac * c0).unwrap();
            prop_assert!(lc > 0.0 && lc <= l0 * (1.0 + 1e-6));
            prop_assert!(lc <= prev + 1e-9);
            prev = lc;
        }
    }

    #[test]
    fn cascade_is_linear_in_coupling(alpha in 0.2..3.0f64, lam in 0.2..1.0f64) {
        let base = medium(0.3, 0.2);
        let mut scaled = base.clone();
        scaled.a[1][0] = base.a[1][0].as_ref().map(|f| f.map(|v| alpha * v));
        let p = Dispersion::new(&base).eigenfunction_cascade(lam).unwrap();
        let q = Dispersion::new(&scaled).eigenfunction_cascade(lam).unwrap();
        for j in 0..32 {
            prop_assert!((q.components[0].values[j] - p.components[0].values[j]).abs() < 1e-8);
            prop_assert!((q.components[1].values[j] - alpha * p.components[1].values[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn sub_verdict_survives_more_negative_s0(extra in 0.0..20.0f64) {
        let m = constant2(cell(32));
        let disp = Dispersion::new(&m);
        let base = sub_supercritical_at(&disp, 2.5, 0.1, 0.1, None).unwrap();
        let s0 = base.params["s0"] - extra;
        let cand = sub_supercritical_at(&disp, 2.5, 0.1, 0.1, Some(s0)).unwrap();
        let rep = residual_sign_check(&m, &cand, Sampling { nt: 3, ..Sampling::default() }).unwrap();
        prop_assert!(rep.passed());
    }
}
