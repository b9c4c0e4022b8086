//! IMEX integration of the cooperative system on a finite window of cells.
//!
//! Diffusion and advection are implicit (one banded solve per component and step),
//! the reaction is explicit. Windows are laid out for a rightward front (`e = +1`);
//! models with `e = -1` are mirrored by [`oriented`] first.

use crate::dispersion::Dispersion;
use crate::error::{Error, Result};
use crate::grid::{solve_cyclic_banded, solve_tridiagonal, BandedMatrix, CellGrid, Direction, PeriodicField};
use crate::models::{CompetitionSpec, QuadPoly, ReactionModel, SteadyStates};
use rayon::prelude::*;
use std::io::{Read, Write};

pub const TOL_BOX: f64 = 1e-8;
pub const MIN_WINDOW_CELLS: i64 = 20;
pub const GUARD_CELLS: f64 = 10.0;
pub const MAGIC: &[u8; 5] = b"PFRT1";

#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Values held at the first and last node, one per component.
    Dirichlet { left: Vec<f64>, right: Vec<f64> },
    Periodic,
}

/// Nodes `x_lo + k h`; Dirichlet windows include both end nodes, periodic windows omit `x_hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    pub cell: CellGrid,
    pub cells_lo: i64,
    pub cells_hi: i64,
    pub boundary: Boundary,
}

impl WindowGrid {
    /// Dirichlet window `[cells_lo L, cells_hi L]` with clamps `1` (left) and `0` (right).
    pub fn new(cell: CellGrid, cells_lo: i64, cells_hi: i64, m: usize) -> Result<Self> {
        if cells_hi - cells_lo < MIN_WINDOW_CELLS {
            return Err(Error::InvalidParameter(format!(
                "window of {} cells is shorter than {MIN_WINDOW_CELLS}",
                cells_hi - cells_lo
            )));
        }
        Ok(WindowGrid {
            cell,
            cells_lo,
            cells_hi,
            boundary: Boundary::Dirichlet { left: vec![1.0; m], right: vec![0.0; m] },
        })
    }

    pub fn periodic(cell: CellGrid, cells: i64) -> Result<Self> {
        if cells < 1 {
            return Err(Error::InvalidParameter("periodic window needs at least one cell".into()));
        }
        Ok(WindowGrid { cell, cells_lo: 0, cells_hi: cells, boundary: Boundary::Periodic })
    }

    pub fn with_clamps(mut self, left: Vec<f64>, right: Vec<f64>) -> Self {
        self.boundary = Boundary::Dirichlet { left, right };
        self
    }

    pub fn h(&self) -> f64 {
        self.cell.h()
    }

    pub fn x_lo(&self) -> f64 {
        self.cells_lo as f64 * self.cell.l
    }

    pub fn x_hi(&self) -> f64 {
        self.cells_hi as f64 * self.cell.l
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn len(&self) -> usize {
        let k = (self.cells_hi - self.cells_lo) as usize * self.cell.n;
        if self.is_periodic() {
            k
        } else {
            k + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_lo() + k as f64 * self.h()
    }

    /// Index of node `k` inside the periodicity cell.
    pub fn cell_index(&self, k: usize) -> usize {
        let n = self.cell.n as i64;
        ((self.cells_lo * n + k as i64).rem_euclid(n)) as usize
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.x(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// `u[i][k]`: component `i` at window node `k`.
    pub u: Vec<Vec<f64>>,
}

impl SimState {
    pub fn from_fn(window: &WindowGrid, m: usize, f: impl Fn(f64, usize) -> Vec<f64>) -> Self {
        let mut u = vec![vec![0.0; window.len()]; m];
        for k in 0..window.len() {
            let v = f(window.x(k), window.cell_index(k));
            for i in 0..m {
                u[i][k] = v[i];
            }
        }
        SimState { t: 0.0, u }
    }

    pub fn m(&self) -> usize {
        self.u.len()
    }

    pub fn sup_distance(&self, other: &SimState) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Most negative excursion below 0 and above 1 (both reported as nonnegative amounts).
    pub fn box_excess(&self) -> (f64, f64) {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for v in self.u.iter().flatten() {
            lo = lo.max(-v);
            hi = hi.max(v - 1.0);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    /// Time between stored snapshots; zero stores every step.
    pub snapshot_every: f64,
    pub check_box: bool,
    pub guard: bool,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        StepperConfig { dt, snapshot_every: 1.0, check_box: true, guard: true }
    }

    pub fn snapshots(mut self, every: f64) -> Self {
        self.snapshot_every = every;
        self
    }
}

/// `0.5 / max |∂hᵢ/∂uᵢ|` over `[0,1]^m`.
pub fn dt_max(model: &ReactionModel) -> f64 {
    let p = model.max_own_partial();
    if p > 0.0 {
        0.5 / p
    } else {
        f64::INFINITY
    }
}

/// Model mirrored `x ↦ -x` so that a front in direction `e = -1` travels rightward.
pub fn oriented(model: &ReactionModel) -> ReactionModel {
    if model.e == Direction::Plus {
        return model.clone();
    }
    let n = model.n();
    let refl = |f: &PeriodicField| PeriodicField {
        grid: f.grid,
        values: (0..n).map(|j| f.values[(n - j) % n]).collect(),
    };
    let poly = |p: &QuadPoly| {
        let mut out = p.clone();
        out.c0 = refl(&p.c0);
        out.lin = p.lin.iter().map(refl).collect();
        for t in &mut out.quad {
            t.coef = refl(&t.coef);
        }
        out
    };
    ReactionModel {
        name: model.name.clone(),
        grid: model.grid,
        e: Direction::Plus,
        d: model.d.iter().map(refl).collect(),
        q: model.q.iter().map(|f| refl(f).map(|v| -v)).collect(),
        a: model.a.iter().map(|row| row.iter().map(|a| a.as_ref().map(refl)).collect()).collect(),
        h: model.h.iter().map(poly).collect(),
    }
}

enum System {
    Thomas { sub: Vec<f64>, main: Vec<f64>, sup: Vec<f64> },
    Cyclic(BandedMatrix),
}

/// Implicit `I - dt(dΔ_h + q∇_h)` per component with an explicit reaction.
pub struct Imex {
    pub window: WindowGrid,
    pub dt: f64,
    systems: Vec<System>,
}

impl Imex {
    pub fn new(window: WindowGrid, dt: f64, d: &[PeriodicField], q: &[PeriodicField]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let n = window.len();
        let h = window.h();
        let mut systems = Vec::with_capacity(d.len());
        for (di, qi) in d.iter().zip(q) {
            let mut sub = vec![0.0; n];
            let mut main = vec![0.0; n];
            let mut sup = vec![0.0; n];
            for k in 0..n {
                let j = window.cell_index(k);
                let dd = di.values[j] / (h * h);
                let b = qi.values[j] / (2.0 * h);
                if 2.0 * di.values[j] < qi.values[j].abs() * h {
                    let bound = 2.0 * di.values[j] / qi.values[j].abs();
                    return Err(Error::Metzler {
                        h,
                        bound,
                        required_n: (window.cell.l / bound).ceil() as usize,
                    });
                }
                sub[k] = -dt * (dd - b);
                main[k] = 1.0 + 2.0 * dt * dd;
                sup[k] = -dt * (dd + b);
            }
            let sys = if window.is_periodic() {
                System::Cyclic(BandedMatrix { sub, main, sup, periodic: true })
            } else {
                sub[0] = 0.0;
                sup[0] = 0.0;
                main[0] = 1.0;
                sub[n - 1] = 0.0;
                sup[n - 1] = 0.0;
                main[n - 1] = 1.0;
                System::Thomas { sub, main, sup }
            };
            systems.push(sys);
        }
        Ok(Imex { window, dt, systems })
    }

    /// One step; `react(j, u, out)` writes `f(x_j, u)` for cell index `j`.
    pub fn step_with(&self, state: &mut SimState, react: impl Fn(usize, &[f64], &mut [f64]) + Sync) -> Result<()> {
        let m = state.m();
        let n = self.window.len();
        let dt = self.dt;
        let mut rhs = state.u.clone();
        let mut uk = vec![0.0; m];
        let mut fk = vec![0.0; m];
        for k in 0..n {
            for i in 0..m {
                uk[i] = state.u[i][k];
            }
            react(self.window.cell_index(k), &uk, &mut fk);
            for i in 0..m {
                rhs[i][k] += dt * fk[i];
            }
        }
        if let Boundary::Dirichlet { left, right } = &self.window.boundary {
            for i in 0..m {
                rhs[i][0] = left[i];
                rhs[i][n - 1] = right[i];
            }
        }
        let solved: Vec<Result<Vec<f64>>> = self
            .systems
            .par_iter()
            .zip(rhs.par_iter())
            .map(|(sys, r)| match sys {
                System::Thomas { sub, main, sup } => solve_tridiagonal(sub, main, sup, r),
                System::Cyclic(a) => solve_cyclic_banded(a, r),
            })
            .collect();
        for (i, s) in solved.into_iter().enumerate() {
            state.u[i] = s?;
        }
        state.t += dt;
        Ok(())
    }
}

/// Stored snapshots of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub window: WindowGrid,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn m(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.len())
    }

    pub fn state(&self, k: usize) -> SimState {
        SimState { t: self.times[k], u: self.snapshots[k].clone() }
    }

    pub fn last(&self) -> SimState {
        self.state(self.len() - 1)
    }

    /// Compact binary dump: `PFRT1`, then `m`, `n_window`, snapshot count as
    /// little-endian `u64`, then per snapshot `t` followed by `u[i][k]`
    /// (component-major), all little-endian `f64`.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.m() as u64, self.window.len() as u64, self.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for (t, s) in self.times.iter().zip(&self.snapshots) {
            w.write_all(&t.to_le_bytes())?;
            for v in s.iter().flatten() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`Trajectory::write_binary`]; returns `(times, snapshots)`.
    pub fn read_binary(r: &mut impl Read) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Schema("bad snapshot magic".into()));
        }
        let mut b = [0u8; 8];
        let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let m = next_u64(r)? as usize;
        let n = next_u64(r)? as usize;
        let count = next_u64(r)? as usize;
        let mut f = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<f64> {
            r.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let mut times = Vec::with_capacity(count);
        let mut snaps = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(next(r)?);
            let mut s = vec![vec![0.0; n]; m];
            for row in s.iter_mut() {
                for v in row.iter_mut() {
                    *v = next(r)?;
                }
            }
            snaps.push(s);
        }
        Ok((times, snaps))
    }

    /// Rows `t, x, u_1..u_m`.
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::new();
        for (t, s) in self.times.iter().zip(&self.snapshots) {
            for k in 0..self.window.len() {
                let mut r = vec![*t, self.window.x(k)];
                r.extend(s.iter().map(|c| c[k]));
                rows.push(r);
            }
        }
        rows
    }
}

/// Integrator for a cooperative [`ReactionModel`] (already oriented).
pub struct Simulator<'a> {
    pub model: &'a ReactionModel,
    pub cfg: StepperConfig,
    imex: Imex,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a ReactionModel, window: WindowGrid, cfg: StepperConfig) -> Result<Self> {
        model.validate()?;
        if model.e != Direction::Plus {
            return Err(Error::InvalidParameter("simulate the oriented model (e = +1)".into()));
        }
        if window.cell != model.grid {
            return Err(Error::InvalidParameter("window cell grid differs from the model grid".into()));
        }
        let bound = dt_max(model);
        if cfg.dt > bound {
            return Err(Error::InvalidParameter(format!("dt = {} above the reaction bound {bound:.6e}", cfg.dt)));
        }
        let imex = Imex::new(window, cfg.dt, &model.d, &model.q)?;
        Ok(Simulator { model, cfg, imex })
    }

    pub fn window(&self) -> &WindowGrid {
        &self.imex.window
    }

    pub fn step(&self, state: &mut SimState) -> Result<()> {
        let model = self.model;
        let m = model.m();
        self.imex.step_with(state, |j, u, out| {
            for i in 0..m {
                let lower: f64 = (0..i).map(|k| model.coupling(i, k, j) * u[k]).sum();
                out[i] = lower + u[i] * model.h[i].eval(j, u);
            }
        })?;
        if self.cfg.check_box {
            let (lo, hi) = state.box_excess();
            if lo > TOL_BOX || hi > TOL_BOX {
                return Err(Error::BoxViolation(format!(
                    "at t = {:.4}: undershoot {lo:.3e}, overshoot {hi:.3e}; reduce dt",
                    state.t
                )));
            }
        }
        Ok(())
    }

    fn guard(&self, state: &SimState) -> Result<()> {
        if !self.cfg.guard || self.window().is_periodic() {
            return Ok(());
        }
        let w = self.window();
        let limit = w.x_hi() - GUARD_CELLS * w.cell.l;
        if let Some(k) = state.u[0].iter().rposition(|v| *v >= 0.5) {
            if w.x(k) > limit {
                return Err(Error::FrontGuard(format!(
                    "front at x = {:.3} passed x_hi - {GUARD_CELLS}L = {limit:.3} at t = {:.3}",
                    w.x(k),
                    state.t
                )));
            }
        }
        Ok(())
    }

    /// Advance to `t + t_end`, storing snapshots and feeding every accepted step to `observers`.
    pub fn run(
        &self,
        mut state: SimState,
        t_end: f64,
        observers: &mut [&mut dyn FnMut(&SimState)],
    ) -> Result<Trajectory> {
        if t_end < 0.0 {
            return Err(Error::InvalidParameter(format!("T = {t_end} must be nonnegative")));
        }
        let steps = (t_end / self.cfg.dt).round() as usize;
        let every = ((self.cfg.snapshot_every / self.cfg.dt).round() as usize).max(1);
        let mut traj = Trajectory { window: self.window().clone(), times: vec![state.t], snapshots: vec![state.u.clone()] };
        for s in 1..=steps {
            self.step(&mut state)?;
            for o in observers.iter_mut() {
                o(&state);
            }
            if s % every == 0 || s == steps {
                self.guard(&state)?;
                if s % every == 0 {
                    traj.times.push(state.t);
                    traj.snapshots.push(state.u.clone());
                }
            }
        }
        if steps % every != 0 {
            traj.times.push(state.t);
            traj.snapshots.push(state.u.clone());
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: SimState,
    pub lambda_c: f64,
    pub tau: u32,
    pub warning: Option<String>,
}

/// `u₀ = min{(1-ε₀)𝟏, k max(1,|x|)^τ e^{-λ_c x} Φ_{λ_c}(x)}` on an oriented window.
pub fn build_initial_front_like(
    disp: &Dispersion,
    window: &WindowGrid,
    c: f64,
    k: f64,
    eps0: f64,
) -> Result<InitialData> {
    if !(k > 0.0) || !(eps0 > 0.0 && eps0 < 0.5) {
        return Err(Error::InvalidParameter(format!("need k > 0 and eps0 in (0, 1/2), got k = {k}, eps0 = {eps0}")));
    }
    let lc = disp.lambda_c(c)?;
    let tau = if disp.is_critical(c)? { 1 } else { 0 };
    let phi = disp.eigenfunction_cascade(lc)?;
    let m = phi.m();
    let cap = 1.0 - eps0;
    let state = SimState::from_fn(window, m, |x, j| {
        let amp = k * x.abs().max(1.0).powi(tau as i32) * (-lc * x).exp();
        (0..m).map(|i| (amp * phi.components[i].values[j]).min(cap)).collect()
    });
    let edge = state.u.iter().map(|c| *c.last().unwrap()).fold(0.0, f64::max);
    let warning = (edge > 1e-12).then(|| format!("initial decay reaches only {edge:.3e} at the right edge"));
    Ok(InitialData { state, lambda_c: lc, tau, warning })
}

/// `value·𝟏` for `x < x_front`, `0` beyond.
pub fn build_step(window: &WindowGrid, m: usize, x_front: f64, value: f64) -> SimState {
    SimState::from_fn(window, m, |x, _| vec![if x < x_front { value } else { 0.0 }; m])
}

/// Single periodic cell started from `u0·𝟏`; returns `sup |u(T) - 𝟏|`.
pub fn homogeneous_long_run(model: &ReactionModel, u0: f64, t_end: f64) -> Result<f64> {
    let model = oriented(model);
    let window = WindowGrid::periodic(model.grid, 1)?;
    let dt = dt_max(&model).min(0.05);
    let cfg = StepperConfig { dt, snapshot_every: t_end.max(dt), check_box: false, guard: false };
    let sim = Simulator::new(&model, window, cfg)?;
    let state = SimState::from_fn(sim.window(), model.m(), |_, _| vec![u0; model.m()]);
    let last = sim.run(state, t_end, &mut [])?.last();
    Ok(last.u.iter().flatten().fold(0.0, |a, v| a.max((v - 1.0).abs())))
}

/// IMEX integrator for the two-species competition system on a window.
pub struct CompetitionSim<'a> {
    pub spec: &'a CompetitionSpec,
    imex: Imex,
}

impl<'a> CompetitionSim<'a> {
    pub fn new(spec: &'a CompetitionSpec, window: WindowGrid, dt: f64) -> Result<Self> {
        Ok(CompetitionSim { spec, imex: Imex::new(window, dt, &spec.d, &spec.drift)? })
    }

    pub fn step(&self, state: &mut SimState) -> Result<()> {
        let spec = self.spec;
        self.imex.step_with(state, |j, u, out| {
            let r = spec.reaction(j, [u[0], u[1]]);
            out[0] = r[0];
            out[1] = r[1];
        })
    }

    pub fn run(&self, mut state: SimState, t_end: f64) -> Result<SimState> {
        let steps = (t_end / self.imex.dt).round() as usize;
        for _ in 0..steps {
            self.step(&mut state)?;
        }
        Ok(state)
    }
}

/// Heuristic for the absence of interior periodic states: start one cell from
/// `(θ₁u₁*, θ₂u₂*)` on a 4×4 amplitude lattice and record the limits at `t = 200`.
pub fn competition_cell_sweep(spec: &CompetitionSpec, ss: &SteadyStates) -> Result<String> {
    let window = WindowGrid::periodic(spec.grid, 1)?;
    let peak = spec.b[0].max().max(spec.b[1].max()) + spec.a11.max().max(spec.a22.max());
    let dt = (0.05f64).min(0.2 / peak.max(1e-3));
    let sim = CompetitionSim::new(spec, window, dt)?;
    let amps = [0.2, 0.4, 0.6, 0.8];
    let (mut to_u1, mut to_u2, mut other) = (0, 0, 0);
    let mut worst = 0.0f64;
    for &t1 in &amps {
        for &t2 in &amps {
            let st = SimState::from_fn(&sim.imex.window, 2, |_, j| {
                vec![t1 * ss.u1.values[j], t2 * ss.u2.values[j]]
            });
            let end = sim.run(st, 200.0)?;
            let d1 = (0..spec.grid.n)
                .map(|j| (end.u[0][j] - ss.u1.values[j]).abs().max(end.u[1][j].abs()))
                .fold(0.0, f64::max);
            let d2 = (0..spec.grid.n)
                .map(|j| end.u[0][j].abs().max((end.u[1][j] - ss.u2.values[j]).abs()))
                .fold(0.0, f64::max);
            if d1 < 1e-3 {
                to_u1 += 1;
                worst = worst.max(d1);
            } else if d2 < 1e-3 {
                to_u2 += 1;
            } else {
                other += 1;
            }
        }
    }
    Ok(format!(
        "cell sweep of 16 interior data to t = 200: {to_u1} -> (u1*, 0) (worst distance {worst:.2e}), {to_u2} -> (0, u2*), {other} elsewhere"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_cell_grid;
    use crate::models::constant2;

    fn heat_model(grid: CellGrid) -> ReactionModel {
        let mut m = constant2(grid);
        for hi in &mut m.h {
            hi.c0 = PeriodicField::constant(grid, 0.0);
            hi.lin = vec![PeriodicField::constant(grid, 0.0); 2];
            hi.quad.clear();
        }
        m.a[1][0] = None;
        m
    }

    #[test]
    fn window_layout() {
        let g = make_cell_grid(1.0, 16).unwrap();
        let w = WindowGrid::new(g, -3, 20, 2).unwrap();
        assert_eq!(w.len(), 23 * 16 + 1);
        assert_eq!(w.cell_index(0), 0);
        assert_eq!(w.cell_index(5), 5);
        assert!((w.x(16) - (-2.0)).abs() < 1e-12);
        assert!(WindowGrid::new(g, 0, 10, 2).is_err());
    }

    #[test]
    fn one_is_an_equilibrium() {
        let g = make_cell_grid(1.0, 32).unwrap();
        let m = constant2(g);
        let w = WindowGrid::new(g, 0, 20, 2).unwrap().with_clamps(vec![1.0; 2], vec![1.0; 2]);
        let sim = Simulator::new(&m, w, StepperConfig::new(0.01)).unwrap();
        let mut s = SimState::from_fn(sim.window(), 2, |_, _| vec![1.0, 1.0]);
        for _ in 0..100 {
            sim.step(&mut s).unwrap();
        }
        assert!(s.u.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn heat_kernel() {
        let g = make_cell_grid(1.0, 64).unwrap();
        let m = heat_model(g);
        let w = WindowGrid::new(g, -15, 15, 2).unwrap().with_clamps(vec![0.0; 2], vec![0.0; 2]);
        let cfg = StepperConfig { dt: 1e-3, snapshot_every: 1.0, check_box: false, guard: false };
        let sim = Simulator::new(&m, w, cfg).unwrap();
        let s0 = 0.5f64;
        let gauss = |x: f64, var: f64| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let st = SimState::from_fn(sim.window(), 2, |x, _| vec![gauss(x, s0 * s0); 2]);
        let end = sim.run(st, 1.0, &mut []).unwrap().last();
        let w = sim.window();
        let err = (0..w.len())
            .filter(|&k| w.x(k).abs() < 10.0)
            .map(|k| (end.u[0][k] - gauss(w.x(k), s0 * s0 + 2.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_run_keeps_initial_snapshot() {
        let g = make_cell_grid(1.0, 32).unwrap();
        let m = constant2(g);
        let sim = Simulator::new(&m, WindowGrid::new(g, 0, 20, 2).unwrap(), StepperConfig::new(0.01)).unwrap();
        let st = build_step(sim.window(), 2, 5.0, 0.9);
        let tr = sim.run(st.clone(), 0.0, &mut []).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.state(0), st);
    }

    #[test]
    fn front_like_data() {
        let g = make_cell_grid(1.0, 32).unwrap();
        let m = constant2(g);
        let d = Dispersion::new(&m);
        let w = WindowGrid::new(g, -10, 30, 2).unwrap();
        let init = build_initial_front_like(&d, &w, 2.5, 1.0, 0.1).unwrap();
        let k20 = (0..w.len()).find(|&k| (w.x(k) - 20.0).abs() < 1e-9).unwrap();
        let phi = d.eigenfunction_cascade(0.5).unwrap();
        assert!((init.state.u[0][k20] - (-10.0f64).exp() * phi.components[0].values[0]).abs() < 1e-15);
        assert_eq!(init.state.u[1][0], 0.9);
        let crit = build_initial_front_like(&d, &w, 2.0, 1.0, 0.1).unwrap();
        assert_eq!(crit.tau, 1);
        let k10 = (0..w.len()).find(|&k| (w.x(k) - 10.0).abs() < 1e-9).unwrap();
        let ratio = crit.state.u[0][k10] / crit.state.u[0][k20];
        let l = crit.lambda_c;
        assert!((l - 1.0).abs() < 1e-6);
        assert!((ratio - 10.0 * (-10.0 * l).exp() / (20.0 * (-20.0 * l).exp())).abs() < 1e-12 * ratio);
    }

    #[test]
    fn binary_round_trip() {
        let g = make_cell_grid(1.0, 16).unwrap();
        let m = constant2(g);
        let cfg = StepperConfig::new(0.05).snapshots(0.1);
        let sim = Simulator::new(&m, WindowGrid::new(g, 0, 20, 2).unwrap(), cfg).unwrap();
        let tr = sim.run(build_step(sim.window(), 2, 4.0, 0.9), 0.3, &mut []).unwrap();
        let mut buf = Vec::new();
        tr.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"PFRT1");
        let (t, s) = Trajectory::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(t, tr.times);
        assert_eq!(s, tr.snapshots);
        assert_eq!(tr.len(), 4);
    }

    #[test]
    fn homogeneous_run_approaches_one() {
        let g = make_cell_grid(1.0, 32).unwrap();
        assert!(homogeneous_long_run(&constant2(g), 0.05, 60.0).unwrap() < 1e-6);
    }

    #[test]
    fn mirrored_model_reverses_drift() {
        let g = make_cell_grid(1.0, 16).unwrap();
        let mut m = constant2(g);
        m.q[0] = PeriodicField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x).sin());
        m.e = Direction::Minus;
        let r = oriented(&m);
        assert_eq!(r.e, Direction::Plus);
        assert!((r.q[0].values[3] + m.q[0].values[13]).abs() < 1e-15);
        let a = Dispersion::new(&m).critical_speed().unwrap();
        let b = Dispersion::new(&r).critical_speed().unwrap();
        assert!((a.0 - b.0).abs() < 1e-8);
    }
}
