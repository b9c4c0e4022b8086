mod common;

use std::f64::consts::PI;

use perifront::models::{
    competition_steady_states, competition_to_cooperative, forward_transform, CompetitionSpec,
};
use perifront::grid::PeriodicField;
use perifront::sim::{CompetitionSim, SimState, Simulator, StepperConfig, WindowGrid, TOL_BOX};

use common::{cell, random_media};

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    (-(x - centre).powi(2) / (width * width)).exp()
}

#[test]
fn order_and_box_on_random_media() {
    let g = cell(32);
    let media = random_media(g);
    assert_eq!(media.len(), 10);
    for model in &media {
        let w = WindowGrid::periodic(g, 20).unwrap();
        let l = g.l;
        let m = model.m();
        let lo = SimState::from_fn(&w, m, |x, _| vec![0.6 * bump(x, 5.0 * l, 2.0 * l); m]);
        let hi = SimState::from_fn(&w, m, |x, _| {
            vec![(0.6 * bump(x, 5.0 * l, 2.0 * l) + 0.3 * bump(x, 12.0 * l, 3.0 * l)).min(1.0); m]
        });
        let cfg = StepperConfig { check_box: false, guard: false, ..StepperConfig::new(0.02) };
        let sim = Simulator::new(model, w, cfg).unwrap();
        let a = sim.run(lo, 20.0, &mut []).unwrap();
        let b = sim.run(hi, 20.0, &mut []).unwrap();
        let mut order = 0.0f64;
        let mut excess = 0.0f64;
        for k in 0..a.len() {
            let (sa, sb) = (a.state(k), b.state(k));
            for i in 0..m {
                for (p, q) in sa.u[i].iter().zip(&sb.u[i]) {
                    order = order.max(p - q);
                }
            }
            for s in [sa, sb] {
                let (e0, e1) = s.box_excess();
                excess = excess.max(e0).max(e1);
            }
        }
        assert!(order <= 1e-8, "{}: order violation {order:e}", model.name);
        assert!(excess <= TOL_BOX, "{}: box excess {excess:e}", model.name);
    }
}

#[test]
fn one_cell_shift_commutes_with_evolution() {
    let g = cell(32);
    let model = &random_media(g)[0];
    let w = WindowGrid::periodic(g, 20).unwrap();
    let l = g.l;
    let p = 20.0 * l;
    let f = |x: f64| 0.4 + 0.3 * (2.0 * PI * x / p).cos() + 0.1 * (4.0 * PI * x / p + 1.0).sin();
    let a0 = SimState::from_fn(&w, 2, |x, _| vec![f(x); 2]);
    let b0 = SimState::from_fn(&w, 2, |x, _| vec![f(x - l); 2]);
    let sim = Simulator::new(model, w.clone(), StepperConfig::new(0.02)).unwrap();
    let a = sim.run(a0, 10.0, &mut []).unwrap().last();
    let b = sim.run(b0, 10.0, &mut []).unwrap().last();
    let n = g.n;
    let len = w.len();
    let mut d = 0.0f64;
    for i in 0..2 {
        for k in 0..len {
            d = d.max((b.u[i][(k + n) % len] - a.u[i][k]).abs());
        }
    }
    assert!(d < 1e-10, "shift defect {d:e}");
}

#[test]
fn competition_maps_onto_cooperative_trajectory() {
    let g = cell(32);
    let mut spec = CompetitionSpec::constant(g, 1.0, 1.0, 0.3, 1.5, 1.0);
    spec.b[0] = PeriodicField::from_fn(g, |x| 1.0 + 0.3 * x.cos());
    let ss = competition_steady_states(&spec, 1e-11).unwrap();
    let model = competition_to_cooperative(&spec, &ss).unwrap();
    let w = WindowGrid::periodic(g, 8).unwrap();
    let l = g.l;
    let dt = 0.01;
    let comp0 = SimState::from_fn(&w, 2, |x, j| {
        let s = bump(x, 3.0 * l, 1.5 * l);
        vec![s * ss.u1.values[j], (1.0 - 0.8 * s) * ss.u2.values[j]]
    });
    let coop0 = SimState::from_fn(&w, 2, |x, j| {
        let k = ((x - w.x_lo()) / w.h()).round() as usize;
        forward_transform(&ss, j, [comp0.u[0][k], comp0.u[1][k]]).to_vec()
    });
    let cs = CompetitionSim::new(&spec, w.clone(), dt).unwrap();
    let sim = Simulator::new(&model, w.clone(), StepperConfig::new(dt)).unwrap();
    let t_end = 10.0;
    let comp = cs.run(comp0, t_end).unwrap();
    let coop = sim.run(coop0, t_end, &mut []).unwrap().last();
    let mut d = 0.0f64;
    for k in 0..w.len() {
        let v = forward_transform(&ss, w.cell_index(k), [comp.u[0][k], comp.u[1][k]]);
        for i in 0..2 {
            d = d.max((v[i] - coop.u[i][k]).abs());
        }
    }
    let tol = 10.0 * (g.h() * g.h() + dt);
    assert!(d <= tol, "fidelity {d:e} > {tol:e}");
}
