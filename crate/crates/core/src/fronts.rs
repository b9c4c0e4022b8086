//! Front diagnostics on simulated trajectories: level-set position and speed,
//! moving-frame profiles, tail fits, shifts and convergence to a profile.

use crate::dispersion::{Dispersion, VectorEigenfunction};
use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::sim::{SimState, Simulator, Trajectory, WindowGrid};
use rayon::prelude::*;
use serde::Serialize;

pub const MIN_SNAPSHOTS: usize = 20;
pub const MIN_OCCUPANCY: usize = 5;
pub const EDGE_CELLS: f64 = 5.0;

/// Rightmost crossing of `level` by component `i`, linearly interpolated.
pub fn front_position(state: &SimState, window: &WindowGrid, i: usize, level: f64) -> Result<f64> {
    let u = &state.u[i];
    for k in (0..u.len().saturating_sub(1)).rev() {
        if u[k] >= level && u[k + 1] < level {
            let w = (u[k] - level) / (u[k] - u[k + 1]);
            return Ok(window.x(k) + w * window.h());
        }
    }
    Err(Error::NoCrossing(format!("component {} never drops below {level} at t = {:.4}", i + 1, state.t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedFit {
    pub c: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub samples: usize,
}

/// Least-squares line through `(t, x)`.
pub fn speed_from_positions(ts: &[f64], xs: &[f64]) -> Result<SpeedFit> {
    let n = ts.len();
    if n < 3 || xs.len() != n {
        return Err(Error::Insufficient(format!("{n} positions; need at least 3")));
    }
    let nf = n as f64;
    let tm = ts.iter().sum::<f64>() / nf;
    let xm = xs.iter().sum::<f64>() / nf;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(xs).map(|(t, x)| (t - tm) * (x - xm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Insufficient("all positions at one time".into()));
    }
    let c = sxy / sxx;
    let b = xm - c * tm;
    let ssr: f64 = ts.iter().zip(xs).map(|(t, x)| (x - b - c * t).powi(2)).sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(SpeedFit { c, stderr, intercept: b, samples: n })
}

/// Level-set positions of component `i` at every snapshot with `t ∈ [t0, t1]`.
pub fn positions(traj: &Trajectory, i: usize, level: f64, t0: f64, t1: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for k in 0..traj.len() {
        let t = traj.times[k];
        if t >= t0 - 1e-12 && t <= t1 + 1e-12 {
            ts.push(t);
            xs.push(front_position(&traj.state(k), &traj.window, i, level)?);
        }
    }
    Ok((ts, xs))
}

pub fn measure_speed(traj: &Trajectory, i: usize, level: f64, t0: f64, t1: f64) -> Result<SpeedFit> {
    let (ts, xs) = positions(traj, i, level, t0, t1)?;
    if ts.len() < MIN_SNAPSHOTS {
        return Err(Error::Insufficient(format!("{} snapshots in [{t0}, {t1}]; need {MIN_SNAPSHOTS}", ts.len())));
    }
    speed_from_positions(&ts, &xs)
}

/// Profile `U(x_j, s)` on cell nodes `j` and the s-grid `s_lo + b·ds`.
#[derive(Debug, Clone, Serialize)]
pub struct FrontProfile {
    pub c: f64,
    #[serde(skip)]
    pub cell: CellGrid,
    pub s_lo: f64,
    pub ds: f64,
    pub ns: usize,
    /// `u[i][j][b]`.
    #[serde(skip)]
    pub u: Vec<Vec<Vec<f64>>>,
    pub min_occupancy: usize,
    pub monotonicity_defect: f64,
    /// Amount subtracted from raw `s = ct - x` by the phase anchoring.
    pub anchor_shift: f64,
}

impl FrontProfile {
    pub fn from_fn(c: f64, cell: CellGrid, m: usize, s_lo: f64, ns: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let ds = cell.h();
        let u = (0..m)
            .map(|i| (0..cell.n).map(|j| (0..ns).map(|b| f(i, cell.x(j), s_lo + b as f64 * ds)).collect()).collect())
            .collect();
        let mut p =
            FrontProfile { c, cell, s_lo, ds, ns, u, min_occupancy: usize::MAX, monotonicity_defect: 0.0, anchor_shift: 0.0 };
        p.monotonicity_defect = p.compute_monotonicity_defect();
        p
    }

    pub fn m(&self) -> usize {
        self.u.len()
    }

    pub fn s(&self, b: usize) -> f64 {
        self.s_lo + b as f64 * self.ds
    }

    pub fn s_hi(&self) -> f64 {
        self.s(self.ns - 1)
    }

    /// Linear interpolation in `s` at cell node `j`; clamped to the edge bins outside the range.
    pub fn value(&self, i: usize, j: usize, s: f64) -> f64 {
        let row = &self.u[i][j];
        let r = (s - self.s_lo) / self.ds;
        if r <= 0.0 {
            return row[0];
        }
        let b = r.floor() as usize;
        if b + 1 >= self.ns {
            return row[self.ns - 1];
        }
        let w = r - b as f64;
        row[b] * (1.0 - w) + row[b + 1] * w
    }

    /// Bilinear interpolation, periodic in `x`.
    pub fn eval(&self, i: usize, x: f64, s: f64) -> f64 {
        let n = self.cell.n;
        let r = (x / self.cell.h()).rem_euclid(n as f64);
        let j = (r.floor() as usize) % n;
        let w = r - r.floor();
        self.value(i, j, s) * (1.0 - w) + self.value(i, (j + 1) % n, s) * w
    }

    /// Central difference `∂U/∂s` at a bin (one-sided at the ends).
    pub fn ds_at(&self, i: usize, j: usize, b: usize) -> f64 {
        let row = &self.u[i][j];
        if b == 0 {
            (row[1] - row[0]) / self.ds
        } else if b + 1 == self.ns {
            (row[b] - row[b - 1]) / self.ds
        } else {
            (row[b + 1] - row[b - 1]) / (2.0 * self.ds)
        }
    }

    fn compute_monotonicity_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for comp in &self.u {
            for row in comp {
                for w in row.windows(2) {
                    d = d.max(w[0] - w[1]);
                }
            }
        }
        d
    }

    /// `(max U at the lowest s, min U at the highest s)`.
    pub fn edge_values(&self) -> (f64, f64) {
        let lo = self.u.iter().flatten().map(|r| r[0]).fold(0.0, f64::max);
        let hi = self.u.iter().flatten().map(|r| r[self.ns - 1]).fold(f64::INFINITY, f64::min);
        (lo, hi)
    }

    /// Shift the s-axis so that `U₁(x_j, 0) = ½`.
    pub fn anchor(&mut self, j: usize) -> Result<()> {
        let row = &self.u[0][j];
        let b = row
            .windows(2)
            .position(|w| w[0] < 0.5 && w[1] >= 0.5)
            .ok_or_else(|| Error::NoCrossing("profile never reaches 1/2 at the anchor node".into()))?;
        let w = (0.5 - row[b]) / (row[b + 1] - row[b]);
        let s_half = self.s(b) + w * self.ds;
        self.s_lo -= s_half;
        self.anchor_shift += s_half;
        Ok(())
    }

    /// Rows `x, s, U_1..U_m`.
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.cell.n * self.ns);
        for j in 0..self.cell.n {
            for b in 0..self.ns {
                let mut r = vec![self.cell.x(j), self.s(b)];
                r.extend(self.u.iter().map(|c| c[j][b]));
                rows.push(r);
            }
        }
        rows
    }
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub t_from: f64,
    pub edge_cells: f64,
    pub min_count: usize,
    /// Cell node for `U₁(x_j, 0) = ½`; `None` keeps raw phases.
    pub anchor: Option<usize>,
}

impl ExtractOptions {
    pub fn new(t_from: f64) -> Self {
        ExtractOptions { t_from, edge_cells: EDGE_CELLS, min_count: MIN_OCCUPANCY, anchor: Some(0) }
    }

    pub fn raw(mut self) -> Self {
        self.anchor = None;
        self
    }
}

/// Streaming accumulator for [`FrontProfile`]s; usable as a run observer.
///
/// Each bin keeps the moments needed for a local linear fit in `s`, so the value
/// at the bin centre carries no first-order binning bias.
pub struct ProfileBinner {
    pub c: f64,
    window: WindowGrid,
    opts: ExtractOptions,
    m: usize,
    s_lo: f64,
    nb: usize,
    /// Per `(j, b)`: count, Σδ, Σδ².
    geo: Vec<[f64; 3]>,
    /// Per `(i, j, b)`: Σu, Σuδ.
    val: Vec<[f64; 2]>,
}

impl ProfileBinner {
    pub fn new(c: f64, window: &WindowGrid, m: usize, t_to: f64, opts: ExtractOptions) -> Self {
        let h = window.h();
        let pad = opts.edge_cells * window.cell.l;
        let s_lo = c * opts.t_from - (window.x_hi() - pad) - h;
        let s_hi = c * t_to - (window.x_lo() + pad) + h;
        let nb = ((s_hi - s_lo) / h).ceil().max(1.0) as usize + 1;
        let n = window.cell.n;
        ProfileBinner {
            c,
            window: window.clone(),
            opts,
            m,
            s_lo,
            nb,
            geo: vec![[0.0; 3]; n * nb],
            val: vec![[0.0; 2]; m * n * nb],
        }
    }

    pub fn observe(&mut self, state: &SimState) {
        if state.t < self.opts.t_from - 1e-12 {
            return;
        }
        let w = &self.window;
        let h = w.h();
        let n = w.cell.n;
        let pad = self.opts.edge_cells * w.cell.l;
        for k in 0..w.len() {
            let x = w.x(k);
            if x < w.x_lo() + pad - 1e-9 || x > w.x_hi() - pad + 1e-9 {
                continue;
            }
            let s = self.c * state.t - x;
            let r = (s - self.s_lo) / h;
            let b = r.round();
            if b < 0.0 || b >= self.nb as f64 {
                continue;
            }
            let b = b as usize;
            let d = s - (self.s_lo + b as f64 * h);
            let j = w.cell_index(k);
            let g = &mut self.geo[j * self.nb + b];
            g[0] += 1.0;
            g[1] += d;
            g[2] += d * d;
            for i in 0..self.m {
                let v = &mut self.val[(i * n + j) * self.nb + b];
                let u = state.u[i][k];
                v[0] += u;
                v[1] += u * d;
            }
        }
    }

    pub fn finish(&self) -> Result<FrontProfile> {
        let n = self.window.cell.n;
        let h = self.window.h();
        let ok: Vec<bool> =
            (0..self.nb).map(|b| (0..n).all(|j| self.geo[j * self.nb + b][0] >= self.opts.min_count as f64)).collect();
        let (mut best, mut start) = ((0usize, 0usize), None);
        for (b, &o) in ok.iter().chain(std::iter::once(&false)).enumerate() {
            match (o, start) {
                (true, None) => start = Some(b),
                (false, Some(a)) => {
                    if b - a > best.1 - best.0 {
                        best = (a, b);
                    }
                    start = None;
                }
                _ => {}
            }
        }
        let (b0, b1) = best;
        if b1 - b0 < 10 {
            return Err(Error::Insufficient(format!(
                "no run of 10 consecutive s-bins with {} samples per cell node",
                self.opts.min_count
            )));
        }
        let mut min_occ = usize::MAX;
        let mut u = vec![vec![vec![0.0; b1 - b0]; n]; self.m];
        for j in 0..n {
            for b in b0..b1 {
                let g = self.geo[j * self.nb + b];
                min_occ = min_occ.min(g[0] as usize);
                let cnt = g[0];
                let dm = g[1] / cnt;
                let var = g[2] / cnt - dm * dm;
                for i in 0..self.m {
                    let v = self.val[(i * n + j) * self.nb + b];
                    let um = v[0] / cnt;
                    u[i][j][b - b0] = if var > 1e-6 * h * h {
                        um - (v[1] / cnt - um * dm) / var * dm
                    } else {
                        um
                    };
                }
            }
        }
        let mut p = FrontProfile {
            c: self.c,
            cell: self.window.cell,
            s_lo: self.s_lo + b0 as f64 * h,
            ds: h,
            ns: b1 - b0,
            u,
            min_occupancy: min_occ,
            monotonicity_defect: 0.0,
            anchor_shift: 0.0,
        };
        p.monotonicity_defect = p.compute_monotonicity_defect();
        if let Some(j) = self.opts.anchor {
            p.anchor(j)?;
        }
        Ok(p)
    }
}

/// Bin the stored snapshots of `traj` into a moving-frame profile at speed `c`.
pub fn extract_profile(traj: &Trajectory, c: f64, opts: ExtractOptions) -> Result<FrontProfile> {
    let t_to = *traj.times.last().ok_or_else(|| Error::Insufficient("empty trajectory".into()))?;
    let mut binner = ProfileBinner::new(c, &traj.window, traj.m(), t_to, opts);
    for k in 0..traj.len() {
        binner.observe(&traj.state(k));
    }
    binner.finish()
}

/// Output of [`run_and_extract`].
pub struct FrontRun {
    pub transient: Trajectory,
    pub tail: Trajectory,
    pub speed: SpeedFit,
    pub profile: FrontProfile,
}

/// Run to `t_transient`, estimate the speed on its second half, then continue to
/// `t_end` while binning every accepted step at that speed.
pub fn run_and_extract(
    sim: &Simulator,
    state: SimState,
    t_transient: f64,
    t_end: f64,
    opts: ExtractOptions,
) -> Result<FrontRun> {
    let transient = sim.run(state, t_transient, &mut [])?;
    let t0 = transient.times[0];
    let speed = measure_speed(&transient, 0, 0.5, t0 + 0.5 * t_transient, t0 + t_transient)?;
    let start = transient.last();
    let opts = ExtractOptions { t_from: start.t, ..opts };
    let mut binner = ProfileBinner::new(speed.c, sim.window(), start.m(), t0 + t_end, opts);
    binner.observe(&start);
    let tail = sim.run(start, t_end - t_transient, &mut [&mut |s: &SimState| binner.observe(s)])?;
    let profile = binner.finish()?;
    Ok(FrontRun { transient, tail, speed, profile })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    /// Bins where `U₁` at cell node 0 lies in `[lo, hi]`.
    Levels { lo: f64, hi: f64 },
    Range { s_a: f64, s_b: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub component: usize,
    pub lambda_est: f64,
    pub rho_est: f64,
    pub tau_mode: u32,
    pub s_range: (f64, f64),
    pub decades: f64,
    pub goodness: f64,
}

fn window_bins(p: &FrontProfile, w: FitWindow) -> Vec<usize> {
    (0..p.ns)
        .filter(|&b| match w {
            FitWindow::Levels { lo, hi } => {
                let v = p.u[0][0][b];
                v >= lo && v <= hi
            }
            FitWindow::Range { s_a, s_b } => p.s(b) >= s_a && p.s(b) <= s_b,
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `Uᵢ ≈ ρ|s|^τ e^{λs} φᵢ(x)` with given `λ`, `Φ`.
pub fn fit_decay_with(
    p: &FrontProfile,
    lambda: f64,
    phi: &VectorEigenfunction,
    tau: u32,
    w: FitWindow,
) -> Result<Vec<FitResult>> {
    let bins = window_bins(p, w);
    if bins.len() < 4 {
        return Err(Error::Insufficient("fit window holds fewer than 4 bins".into()));
    }
    let (ba, bb) = (bins[0], *bins.last().unwrap());
    let mut out = Vec::with_capacity(p.m());
    for i in 0..p.m() {
        let mut ratios = Vec::new();
        let mut slopes = Vec::new();
        let mut decades = f64::INFINITY;
        for j in 0..p.cell.n {
            let (mut st, mut sy, mut stt, mut sty, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &b in &bins {
                let s = p.s(b);
                let u = p.u[i][j][b];
                if !(u > 0.0) {
                    return Err(Error::NonPositive(format!("U_{} vanishes in the fit window", i + 1)));
                }
                let pre = s.abs().powi(tau as i32);
                ratios.push(u / (pre * (lambda * s).exp() * phi.components[i].values[j]));
                let y = (u / pre).ln();
                st += s;
                sy += y;
                stt += s * s;
                sty += s * y;
                k += 1.0;
            }
            slopes.push((k * sty - st * sy) / (k * stt - st * st));
            decades = decades.min((p.u[i][j][bb] / p.u[i][j][ba]).log10().abs());
        }
        if decades < 3.0 {
            return Err(Error::Insufficient(format!("fit window spans {decades:.2} decades; need 3")));
        }
        let rho = median(ratios.clone());
        let goodness = ratios.iter().fold(0.0f64, |g, r| g.max((r / rho - 1.0).abs()));
        out.push(FitResult {
            component: i + 1,
            lambda_est: slopes.iter().sum::<f64>() / slopes.len() as f64,
            rho_est: rho,
            tau_mode: tau,
            s_range: (p.s(ba), p.s(bb)),
            decades,
            goodness,
        });
    }
    Ok(out)
}

/// `τ = 0` fits against `λ_c(c)`, `τ = 1` against `λ₊⁰`.
pub fn fit_decay(p: &FrontProfile, disp: &Dispersion, tau: u32, w: FitWindow) -> Result<Vec<FitResult>> {
    let lambda = if tau == 0 { disp.lambda_c(p.c)? } else { disp.critical_speed()?.1 };
    let phi = disp.eigenfunction_cascade(lambda)?;
    fit_decay_with(p, lambda, &phi, tau, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftFit {
    pub z0: f64,
    pub sup_dist: f64,
    pub z_pred: Option<f64>,
}

fn shift_cost(u: &FrontProfile, v: &FrontProfile, z: f64) -> f64 {
    let lo = u.s_lo - z;
    let hi = u.s_hi() - z;
    let mut d = 0.0f64;
    for b in 0..v.ns {
        let s = v.s(b);
        if s < lo || s > hi {
            continue;
        }
        for i in 0..v.m() {
            for j in 0..v.cell.n {
                d = d.max((u.value(i, j, s + z) - v.u[i][j][b]).abs());
            }
        }
    }
    d
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - R * (b - a);
    let mut x2 = a + R * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - R * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + R * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Coarse scan on `[z_lo, z_hi]` with step `step`, then golden refinement.
fn best_shift(f: impl Fn(f64) -> f64 + Sync, z_lo: f64, z_hi: f64, step: f64) -> (f64, f64) {
    let k = ((z_hi - z_lo) / step).ceil() as usize;
    let (zb, _) = (0..=k)
        .into_par_iter()
        .map(|q| {
            let z = z_lo + q as f64 * step;
            (z, f(z))
        })
        .reduce(|| (f64::NAN, f64::INFINITY), |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let coarse = (zb, f(zb));
    let fine = golden(&f, zb - step, zb + step, 1e-6 * step.max(1e-3));
    if fine.1 < coarse.1 {
        fine
    } else {
        coarse
    }
}

/// `z` minimizing `sup |U(·, · + z) - V|`; both profiles must share `c` and raw phases.
pub fn shift_distance(u: &FrontProfile, v: &FrontProfile, disp: Option<&Dispersion>, z_max: f64) -> Result<ShiftFit> {
    if (u.c - v.c).abs() > 1e-12 * u.c.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!("profiles at different speeds {} and {}", u.c, v.c)));
    }
    let (z0, sup_dist) = best_shift(|z| shift_cost(u, v, z), -z_max, z_max, u.ds);
    let z_pred = match disp {
        Some(d) => {
            let w = FitWindow::Levels { lo: 1e-9, hi: 1e-4 };
            let (a, b) = (fit_decay(u, d, 0, w)?, fit_decay(v, d, 0, w)?);
            Some((b[0].rho_est / a[0].rho_est).ln() / d.lambda_c(u.c)?)
        }
        None => None,
    };
    Ok(ShiftFit { z0, sup_dist, z_pred })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub t: f64,
    pub shift: f64,
    pub sup_dist: f64,
}

/// Sup distance of each snapshot to the best-shifted `U(x, ct - x + z)` on the window interior.
pub fn convergence_metric(traj: &Trajectory, p: &FrontProfile) -> Result<Vec<ConvergencePoint>> {
    let w = &traj.window;
    let pad = EDGE_CELLS * w.cell.l;
    let nodes: Vec<usize> = (0..w.len()).filter(|&k| w.x(k) >= w.x_lo() + pad && w.x(k) <= w.x_hi() - pad).collect();
    let c = p.c;
    (0..traj.len())
        .into_par_iter()
        .map(|q| {
            let t = traj.times[q];
            let snap = &traj.snapshots[q];
            let cost = |z: f64| {
                let mut d = 0.0f64;
                for &k in &nodes {
                    let j = w.cell_index(k);
                    let s = c * t - w.x(k) + z;
                    for (i, comp) in snap.iter().enumerate() {
                        d = d.max((comp[k] - p.value(i, j, s)).abs());
                    }
                }
                d
            };
            let x_front = front_position(&traj.state(q), w, 0, 0.5)?;
            let guess = x_front - c * t;
            let (shift, sup_dist) = best_shift_serial(cost, guess - 2.0, guess + 2.0, 0.5 * p.ds);
            Ok(ConvergencePoint { t, shift, sup_dist })
        })
        .collect()
}

fn best_shift_serial(f: impl Fn(f64) -> f64, z_lo: f64, z_hi: f64, step: f64) -> (f64, f64) {
    let k = ((z_hi - z_lo) / step).ceil() as usize;
    let mut best = (z_lo, f64::INFINITY);
    for q in 0..=k {
        let z = z_lo + q as f64 * step;
        let v = f(z);
        if v < best.1 {
            best = (z, v);
        }
    }
    let fine = golden(&f, best.0 - step, best.0 + step, 1e-6 * step.max(1e-3));
    if fine.1 < best.1 {
        fine
    } else {
        best
    }
}

/// Per component `(min, max)` of `(∂U/∂s)/U` over bins with `lo ≤ Uᵢ ≤ hi`.
pub fn log_derivative_diagnostics(p: &FrontProfile, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(p.m());
    for i in 0..p.m() {
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..p.cell.n {
            for k in 1..p.ns.saturating_sub(1) {
                let u = p.u[i][j][k];
                if u >= lo && u <= hi {
                    let g = p.ds_at(i, j, k) / u;
                    a = a.min(g);
                    b = b.max(g);
                }
            }
        }
        if !a.is_finite() {
            return Err(Error::Insufficient(format!("left tail of U_{} not resolved in [{lo:e}, {hi:e}]", i + 1)));
        }
        out.push((a, b));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioBound {
    /// `sup U₁ / min_{i≥2} Uᵢ` over the profile.
    pub k_c: f64,
    /// Mean of the same ratio over the leftmost tenth of the s-range.
    pub tail_ratio: f64,
}

pub fn component_ratio_bound(p: &FrontProfile) -> Result<RatioBound> {
    if p.m() < 2 {
        return Err(Error::InvalidParameter("ratio bound needs m >= 2".into()));
    }
    let tail_end = (p.ns / 10).max(1);
    let (mut k_c, mut tail, mut cnt) = (0.0f64, 0.0, 0.0);
    for j in 0..p.cell.n {
        for b in 0..p.ns {
            let den = (1..p.m()).map(|i| p.u[i][j][b]).fold(f64::INFINITY, f64::min);
            if !(den > 0.0) {
                return Err(Error::NonPositive(format!("component vanishes at node {j}, s = {:.4}", p.s(b))));
            }
            let r = p.u[0][j][b] / den;
            k_c = k_c.max(r);
            if b < tail_end {
                tail += r;
                cnt += 1.0;
            }
        }
    }
    Ok(RatioBound { k_c, tail_ratio: tail / cnt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_cell_grid, PeriodicField};

    fn window() -> WindowGrid {
        WindowGrid::new(make_cell_grid(1.0, 16).unwrap(), 0, 20, 1).unwrap()
    }

    fn step_state(w: &WindowGrid, x0: f64) -> SimState {
        SimState::from_fn(w, 1, |x, _| vec![if x < x0 { 1.0 } else { 0.0 }])
    }

    #[test]
    fn position_of_step() {
        let w = window();
        let x = front_position(&step_state(&w, 10.0), &w, 0, 0.5).unwrap();
        assert!((x - 10.0).abs() <= w.h());
        assert!(front_position(&SimState::from_fn(&w, 1, |_, _| vec![0.2]), &w, 0, 0.5).is_err());
    }

    #[test]
    fn position_translates() {
        let w = window();
        let f = |x: f64| 1.0 / (1.0 + (x - 8.0).exp());
        let a = SimState::from_fn(&w, 1, |x, _| vec![f(x)]);
        let b = SimState::from_fn(&w, 1, |x, _| vec![f(x - 3.0 * w.h())]);
        let d = front_position(&b, &w, 0, 0.5).unwrap() - front_position(&a, &w, 0, 0.5).unwrap();
        assert!((d - 3.0 * w.h()).abs() < 1e-9);
    }

    #[test]
    fn speed_of_exact_line() {
        let ts: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let xs: Vec<f64> = ts.iter().map(|t| 2.0 * t + 5.0).collect();
        let f = speed_from_positions(&ts, &xs).unwrap();
        assert!((f.c - 2.0).abs() < 1e-12 && f.stderr <= 1e-12);
    }

    #[test]
    fn speed_ignores_wobble() {
        let l = 1.0;
        let ts: Vec<f64> = (0..2000).map(|k| k as f64 * 0.005).collect();
        let xs: Vec<f64> =
            ts.iter().map(|t| 2.0 * t + 0.1 * (2.0 * std::f64::consts::PI * t / (l / 2.0)).sin()).collect();
        assert!((speed_from_positions(&ts, &xs).unwrap().c - 2.0).abs() < 0.01);
    }

    fn synthetic(l: f64, c: f64) -> (Trajectory, impl Fn(f64, f64) -> f64) {
        let cell = make_cell_grid(l, 16).unwrap();
        let w = WindowGrid::new(cell, 0, 20, 2).unwrap();
        let v = move |x: f64, s: f64| {
            let a = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x / l).cos();
            1.0 / (1.0 + (-a * s).exp())
        };
        let h = cell.h();
        let dt = h / c;
        let mut tr = Trajectory { window: w.clone(), times: vec![], snapshots: vec![] };
        for q in 0..400 {
            let t = q as f64 * dt;
            let s = SimState::from_fn(&w, 2, |x, _| vec![v(x, c * t - x + 10.0), 0.5 * v(x, c * t - x + 10.0)]);
            tr.times.push(t);
            tr.snapshots.push(s.u);
        }
        (tr, v)
    }

    #[test]
    fn round_trip_profile() {
        let c = 2.0;
        let (tr, v) = synthetic(1.0, c);
        let opts = ExtractOptions { t_from: 0.0, edge_cells: 2.0, min_count: 5, anchor: None };
        let p = extract_profile(&tr, c, opts).unwrap();
        let mut err = 0.0f64;
        for j in 0..p.cell.n {
            for b in 0..p.ns {
                err = err.max((p.u[0][j][b] - v(p.cell.x(j), p.s(b) + 10.0)).abs());
            }
        }
        assert!(err < 1e-6, "{err}");
        assert!(p.monotonicity_defect <= 1e-12);
        let k = component_ratio_bound(&p).unwrap();
        assert!((k.k_c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn anchoring_puts_half_at_zero() {
        let c = 2.0;
        let (tr, _) = synthetic(1.0, c);
        let opts = ExtractOptions { t_from: 0.0, edge_cells: 2.0, min_count: 5, anchor: Some(0) };
        let p = extract_profile(&tr, c, opts).unwrap();
        assert!((p.value(0, 0, 0.0) - 0.5).abs() < 1e-12);
        assert!((p.anchor_shift + 10.0).abs() < 1e-2);
    }

    fn exp_profile(lam: f64, rho: f64, tau: u32) -> (FrontProfile, VectorEigenfunction) {
        let cell = make_cell_grid(1.0, 16).unwrap();
        let phi0 = PeriodicField::from_fn(cell, |x| 1.0 + 0.2 * (2.0 * std::f64::consts::PI * x).sin());
        let phi1 = phi0.map(|v| 0.3 * v);
        let pf = phi0.clone();
        let p1 = phi1.clone();
        let p = FrontProfile::from_fn(2.5, cell, 2, -60.0, 600, move |i, x, s| {
            let ph = if i == 0 { pf.interp(x) } else { p1.interp(x) };
            rho * s.abs().powi(tau as i32) * (lam * s).exp() * ph
        });
        let v = VectorEigenfunction { lambda: lam, kappa: 0.0, components: vec![phi0, phi1], residuals: vec![], gaps: vec![] };
        (p, v)
    }

    #[test]
    fn exact_supercritical_fit() {
        let (p, phi) = exp_profile(0.5, 3.0, 0);
        let f = fit_decay_with(&p, 0.5, &phi, 0, FitWindow::Range { s_a: -50.0, s_b: -30.0 }).unwrap();
        for r in &f {
            assert!((r.rho_est - 3.0).abs() < 1e-9 && (r.lambda_est - 0.5).abs() < 1e-9 && r.goodness < 1e-9);
        }
    }

    #[test]
    fn exact_critical_fit() {
        let (p, phi) = exp_profile(1.0, 2.0, 1);
        let f = fit_decay_with(&p, 1.0, &phi, 1, FitWindow::Range { s_a: -50.0, s_b: -30.0 }).unwrap();
        assert!((f[0].rho_est - 2.0).abs() < 1e-9 && (f[0].lambda_est - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_window_rejected() {
        let (p, phi) = exp_profile(0.5, 3.0, 0);
        assert!(fit_decay_with(&p, 0.5, &phi, 0, FitWindow::Range { s_a: -40.0, s_b: -36.0 }).is_err());
    }

    #[test]
    fn log_derivatives() {
        let (p, _) = exp_profile(0.5, 1.0, 0);
        let d = log_derivative_diagnostics(&p, 1e-12, 1e-2).unwrap();
        for (a, b) in d {
            assert!((a - 0.5).abs() < 1e-3 && (b - 0.5).abs() < 1e-3);
        }
        let (q, _) = exp_profile(1.0, 1.0, 1);
        let near = log_derivative_diagnostics(&q, 1e-12, 1e-9).unwrap()[0];
        let far = log_derivative_diagnostics(&q, 1e-22, 1e-18).unwrap()[0];
        assert!(near.1 < 1.0 && far.1 < 1.0 && far.0 > near.0);
    }

    #[test]
    fn shifts() {
        let cell = make_cell_grid(1.0, 32).unwrap();
        let f = |s: f64| 1.0 / (1.0 + (-s).exp());
        let u = FrontProfile::from_fn(2.0, cell, 1, -30.0, 1920, move |_, _, s| f(s));
        let v = FrontProfile::from_fn(2.0, cell, 1, -20.0, 1000, move |_, _, s| f(s + 1.75));
        let r = shift_distance(&u, &v, None, 10.0).unwrap();
        assert!((r.z0 - 1.75).abs() <= cell.h() && r.sup_dist < 1e-3, "{r:?}");
        let r = shift_distance(&u, &u, None, 10.0).unwrap();
        assert!(r.z0.abs() < 1e-6 && r.sup_dist < 1e-9);
    }

    #[test]
    fn vanishing_component_is_rejected() {
        let cell = make_cell_grid(1.0, 16).unwrap();
        let p = FrontProfile::from_fn(2.0, cell, 2, -5.0, 100, |i, _, s| if i == 0 { (0.5 * s).exp() } else { 0.0 });
        assert!(component_ratio_bound(&p).is_err());
    }

    #[test]
    fn self_convergence_is_interpolation_error() {
        let c = 2.0;
        let (tr, _) = synthetic(1.0, c);
        let opts = ExtractOptions { t_from: 0.0, edge_cells: 2.0, min_count: 5, anchor: Some(0) };
        let p = extract_profile(&tr, c, opts).unwrap();
        let short = Trajectory {
            window: tr.window.clone(),
            times: tr.times[50..60].to_vec(),
            snapshots: tr.snapshots[50..60].to_vec(),
        };
        for pt in convergence_metric(&short, &p).unwrap() {
            assert!(pt.sup_dist < 1e-3, "{pt:?}");
        }
    }
}
