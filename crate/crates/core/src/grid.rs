//! Periodic cell grids, sampled fields, the tilted operator and banded solves.
//!
//! Nodes sit at `x_j = j h`, `h = L / n`, with periodic wrap. The tilted
//! operator `d Δ + (q - 2λ d e) ∇ + (d λ² - λ q e + η)` is discretized with
//! second-order central differences, which keeps the off-diagonals
//! nonnegative only while `h ≤ 2 d / |q - 2λ d e|` at every node.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub l: f64,
    pub n: usize,
}

impl CellGrid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(format!("cell length must be positive, got {l}")));
        }
        if n < MIN_POINTS {
            return Err(Error::GridTooCoarse { n });
        }
        Ok(CellGrid { l, n })
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }
}

pub fn make_cell_grid(l: f64, n: usize) -> Result<CellGrid> {
    CellGrid::new(l, n)
}

/// Direction of propagation in one space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Direction {
    #[default]
    Plus,
    Minus,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Plus => Direction::Minus,
            Direction::Minus => Direction::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    pub grid: CellGrid,
    pub values: Vec<f64>,
}

impl PeriodicField {
    pub fn new(grid: CellGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidParameter(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.n
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite field value at node {j}")));
        }
        Ok(PeriodicField { grid, values })
    }

    pub fn constant(grid: CellGrid, v: f64) -> Self {
        PeriodicField { grid, values: vec![v; grid.n] }
    }

    pub fn from_fn(grid: CellGrid, f: impl Fn(f64) -> f64) -> Self {
        PeriodicField { grid, values: (0..grid.n).map(|j| f(grid.x(j))).collect() }
    }

    /// Resample scattered `(x, value)` data onto the grid by periodic linear interpolation.
    pub fn from_samples(grid: CellGrid, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidParameter("sample arrays empty or of unequal length".into()));
        }
        let l = grid.l;
        let mut pts: Vec<(f64, f64)> =
            xs.iter().zip(ys).map(|(&x, &y)| (x.rem_euclid(l), y)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-14 * l);
        let k = pts.len();
        let values = (0..grid.n)
            .map(|j| {
                if k == 1 {
                    return pts[0].1;
                }
                let x = grid.x(j);
                let i = pts.partition_point(|p| p.0 <= x);
                // Neighbours with periodic wrap.
                let (x0, y0) = if i == 0 { (pts[k - 1].0 - l, pts[k - 1].1) } else { pts[i - 1] };
                let (x1, y1) = if i == k { (pts[0].0 + l, pts[0].1) } else { pts[i] };
                if (x1 - x0).abs() < 1e-300 {
                    y0
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            })
            .collect();
        PeriodicField::new(grid, values)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PeriodicField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> Self {
        PeriodicField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Value at node `j`, with periodic wrap for any integer index.
    pub fn at(&self, j: isize) -> f64 {
        self.values[j.rem_euclid(self.n() as isize) as usize]
    }

    /// Periodic linear interpolation at arbitrary `x`.
    pub fn interp(&self, x: f64) -> f64 {
        let h = self.grid.h();
        let y = x.rem_euclid(self.grid.l) / h;
        let j = y.floor();
        let w = y - j;
        let j = j as isize;
        (1.0 - w) * self.at(j) + w * self.at(j + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub d: PeriodicField,
    pub q: PeriodicField,
    pub eta: PeriodicField,
    pub lambda: f64,
    pub e: Direction,
}

impl OperatorSpec {
    pub fn new(d: PeriodicField, q: PeriodicField, eta: PeriodicField, lambda: f64, e: Direction) -> Result<Self> {
        if d.grid != q.grid || d.grid != eta.grid {
            return Err(Error::InvalidParameter("operator coefficients on different grids".into()));
        }
        if !(d.min() > 0.0) {
            return Err(Error::InvalidParameter(format!("diffusion must be positive, min d = {}", d.min())));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter("non-finite tilt".into()));
        }
        Ok(OperatorSpec { d, q, eta, lambda, e })
    }

    pub fn grid(&self) -> CellGrid {
        self.d.grid
    }

    /// First-order coefficient `q - 2λ d e` at node `j`.
    pub fn drift(&self, j: usize) -> f64 {
        self.q.values[j] - 2.0 * self.lambda * self.d.values[j] * self.e.sign()
    }

    /// Zeroth-order coefficient `d λ² - λ q e + η` at node `j`.
    pub fn potential(&self, j: usize) -> f64 {
        let (d, q, l) = (self.d.values[j], self.q.values[j], self.lambda);
        d * l * l - l * q * self.e.sign() + self.eta.values[j]
    }
}

/// Tridiagonal matrix, optionally with periodic corner entries.
///
/// Row `j` reads `sub[j] v[j-1] + main[j] v[j] + sup[j] v[j+1]`. With `periodic`
/// set, `sub[0]` couples to `v[n-1]` and `sup[n-1]` couples to `v[0]`; otherwise
/// those two entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub periodic: bool,
}

impl BandedMatrix {
    pub fn identity(n: usize, periodic: bool) -> Self {
        BandedMatrix { sub: vec![0.0; n], main: vec![1.0; n], sup: vec![0.0; n], periodic }
    }

    pub fn n(&self) -> usize {
        self.main.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|j| {
                let mut s = self.main[j] * v[j];
                if j > 0 {
                    s += self.sub[j] * v[j - 1];
                } else if self.periodic {
                    s += self.sub[0] * v[n - 1];
                }
                if j + 1 < n {
                    s += self.sup[j] * v[j + 1];
                } else if self.periodic {
                    s += self.sup[n - 1] * v[0];
                }
                s
            })
            .collect()
    }

    /// `alpha I + beta A`.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        BandedMatrix {
            sub: self.sub.iter().map(|v| beta * v).collect(),
            main: self.main.iter().map(|v| alpha + beta * v).collect(),
            sup: self.sup.iter().map(|v| beta * v).collect(),
            periodic: self.periodic,
        }
    }

    /// Largest Gershgorin row bound `a_jj + Σ_k |a_jk|` (an upper bound on real parts).
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.n())
            .map(|j| self.main[j] + self.sub[j].abs() + self.sup[j].abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut m = f64::INFINITY;
        for j in 0..n {
            if j > 0 || self.periodic {
                m = m.min(self.sub[j]);
            }
            if j + 1 < n || self.periodic {
                m = m.min(self.sup[j]);
            }
        }
        m
    }

    /// Row-major dense copy, for oracles and small coupled solves.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut a = vec![vec![0.0; n]; n];
        for j in 0..n {
            a[j][j] += self.main[j];
            if j > 0 {
                a[j][j - 1] += self.sub[j];
            } else if self.periodic {
                a[0][n - 1] += self.sub[0];
            }
            if j + 1 < n {
                a[j][j + 1] += self.sup[j];
            } else if self.periodic {
                a[n - 1][0] += self.sup[n - 1];
            }
        }
        a
    }
}

/// Largest admissible spacing `min_j 2 d_j / |q_j - 2λ d_j e|` (infinite when drift vanishes).
pub fn metzler_bound(spec: &OperatorSpec) -> f64 {
    (0..spec.grid().n)
        .map(|j| {
            let b = spec.drift(j).abs();
            if b == 0.0 {
                f64::INFINITY
            } else {
                2.0 * spec.d.values[j] / b
            }
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn assemble_tilted_operator(spec: &OperatorSpec) -> Result<BandedMatrix> {
    let g = spec.grid();
    let h = g.h();
    let bound = metzler_bound(spec);
    if h > bound {
        let required_n = (g.l / bound).ceil() as usize;
        return Err(Error::Metzler { h, bound, required_n: required_n.max(MIN_POINTS) });
    }
    let n = g.n;
    let mut a = BandedMatrix { sub: vec![0.0; n], main: vec![0.0; n], sup: vec![0.0; n], periodic: true };
    for j in 0..n {
        let d = spec.d.values[j] / (h * h);
        let b = spec.drift(j) / (2.0 * h);
        a.sub[j] = d - b;
        a.sup[j] = d + b;
        a.main[j] = -2.0 * d + spec.potential(j);
    }
    Ok(a)
}

/// Thomas algorithm for a non-periodic tridiagonal system.
pub fn solve_tridiagonal(sub: &[f64], main: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = main.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = main.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut bet = main[0];
    if bet.abs() <= 1e-13 * scale {
        return Err(Error::Singular(format!("pivot {bet:.3e} at row 0")));
    }
    x[0] = rhs[0] / bet;
    for j in 1..n {
        c[j] = sup[j - 1] / bet;
        bet = main[j] - sub[j] * c[j];
        if bet.abs() <= 1e-13 * scale {
            return Err(Error::Singular(format!("pivot {bet:.3e} at row {j}")));
        }
        x[j] = (rhs[j] - sub[j] * x[j - 1]) / bet;
    }
    for j in (0..n - 1).rev() {
        x[j] -= c[j + 1] * x[j + 1];
    }
    Ok(x)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Single Sherman–Morrison pass without the residual contract; used where the
/// system is deliberately near-singular (inverse iteration).
pub fn solve_cyclic_raw(a: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    cyclic_once(a, rhs)
}

fn cyclic_once(a: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    let alpha = a.sup[n - 1]; // A[n-1][0]
    let beta = a.sub[0]; // A[0][n-1]
    if alpha == 0.0 && beta == 0.0 {
        return solve_tridiagonal(&a.sub, &a.main, &a.sup, rhs);
    }
    // Rank-one split A = T + u vᵀ with u = (γ, 0.., α), v = (1, 0.., β/γ).
    let gamma = if a.main[0] != 0.0 { -a.main[0] } else { 1.0 };
    let mut main = a.main.clone();
    main[0] -= gamma;
    main[n - 1] -= alpha * beta / gamma;
    let y = solve_tridiagonal(&a.sub, &main, &a.sup, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(&a.sub, &main, &a.sup, &u)?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom.abs() < 1e-13 {
        return Err(Error::Singular(format!("Sherman-Morrison denominator {denom:.3e}")));
    }
    let fact = (y[0] + beta * y[n - 1] / gamma) / denom;
    Ok(y.iter().zip(&z).map(|(yi, zi)| yi - fact * zi).collect())
}

/// Solve `A x = rhs` for a (possibly periodic) tridiagonal `A`.
///
/// One step of iterative refinement is applied when the first residual exceeds
/// `1e-10 ‖rhs‖∞`; failure to reach that bound is reported as ill-conditioning.
pub fn solve_cyclic_banded(a: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    if rhs.len() != n {
        return Err(Error::InvalidParameter(format!("rhs length {} vs matrix size {n}", rhs.len())));
    }
    if n < 3 {
        return Err(Error::InvalidParameter("banded solve needs n >= 3".into()));
    }
    let target = 1e-10 * sup_norm(rhs);
    let mut x = if a.periodic { cyclic_once(a, rhs)? } else { solve_tridiagonal(&a.sub, &a.main, &a.sup, rhs)? };
    for _ in 0..2 {
        let r: Vec<f64> = a.apply(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        if sup_norm(&r) <= target {
            return Ok(x);
        }
        let dx = if a.periodic { cyclic_once(a, &r)? } else { solve_tridiagonal(&a.sub, &a.main, &a.sup, &r)? };
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    let r: Vec<f64> = a.apply(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    let res = sup_norm(&r);
    if res <= target.max(1e-300) {
        Ok(x)
    } else {
        Err(Error::Singular(format!("residual {res:.3e} above {target:.3e} after refinement")))
    }
}

/// Central second difference on periodic samples.
pub fn laplacian_periodic(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| (v[(j + 1) % n] - 2.0 * v[j] + v[(j + n - 1) % n]) / (h * h)).collect()
}

/// Central first difference on periodic samples.
pub fn gradient_periodic(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| (v[(j + 1) % n] - v[(j + n - 1) % n]) / (2.0 * h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_spec(grid: CellGrid, lambda: f64) -> OperatorSpec {
        OperatorSpec::new(
            PeriodicField::constant(grid, 1.0),
            PeriodicField::constant(grid, 0.0),
            PeriodicField::constant(grid, 0.0),
            lambda,
            Direction::Plus,
        )
        .unwrap()
    }

    #[test]
    fn spacing_examples() {
        assert_eq!(make_cell_grid(1.0, 64).unwrap().h(), 1.0 / 64.0);
        assert_eq!(make_cell_grid(2.0 * PI, 128).unwrap().h(), 2.0 * PI / 128.0);
        let e = make_cell_grid(1.0, 4).unwrap_err();
        assert!(e.to_string().contains("grid too coarse"));
        assert!(make_cell_grid(0.0, 64).is_err());
    }

    #[test]
    fn constants_under_untilted_and_tilted_operator() {
        let g = make_cell_grid(1.0, 64).unwrap();
        let ones = vec![1.0; 64];
        let a0 = assemble_tilted_operator(&unit_spec(g, 0.0)).unwrap();
        assert!(a0.apply(&ones).iter().all(|v| v.abs() < 1e-9));
        let a1 = assemble_tilted_operator(&unit_spec(g, 1.0)).unwrap();
        assert!(a1.apply(&ones).iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn sine_second_derivative_is_second_order() {
        let err = |n: usize| {
            let g = make_cell_grid(1.0, n).unwrap();
            let a = assemble_tilted_operator(&unit_spec(g, 0.0)).unwrap();
            let v: Vec<f64> = g.points().iter().map(|x| (2.0 * PI * x).sin()).collect();
            a.apply(&v)
                .iter()
                .zip(&v)
                .map(|(av, vi)| (av + 4.0 * PI * PI * vi).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        let h = 1.0 / 64.0;
        assert!(e1 <= 4.0 * PI.powi(4) * h * h);
    }

    #[test]
    fn metzler_violation_names_required_n() {
        let g = make_cell_grid(1.0, 16).unwrap();
        let spec = OperatorSpec::new(
            PeriodicField::constant(g, 0.01),
            PeriodicField::constant(g, 5.0),
            PeriodicField::constant(g, 0.0),
            0.0,
            Direction::Plus,
        )
        .unwrap();
        match assemble_tilted_operator(&spec) {
            Err(Error::Metzler { required_n, .. }) => assert_eq!(required_n, 250),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn assembled_off_diagonals_nonnegative() {
        let g = make_cell_grid(2.0 * PI, 64).unwrap();
        let spec = OperatorSpec::new(
            PeriodicField::from_fn(g, |x| 1.0 + 0.3 * x.sin()),
            PeriodicField::from_fn(g, |x| 0.5 * x.cos()),
            PeriodicField::from_fn(g, |x| 1.0 + 0.5 * x.cos()),
            0.8,
            Direction::Plus,
        )
        .unwrap();
        assert!(assemble_tilted_operator(&spec).unwrap().min_off_diagonal() >= 0.0);
    }

    #[test]
    fn identity_solve() {
        let a = BandedMatrix::identity(20, true);
        let rhs: Vec<f64> = (0..20).map(|j| (j as f64).sin()).collect();
        assert_eq!(solve_cyclic_banded(&a, &rhs).unwrap(), rhs);
    }

    #[test]
    fn minus_laplacian_plus_identity_on_constant() {
        let g = make_cell_grid(1.0, 64).unwrap();
        let a = assemble_tilted_operator(&unit_spec(g, 0.0)).unwrap().affine(1.0, -1.0);
        let x = solve_cyclic_banded(&a, &vec![1.0; 64]).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn diagonally_dominant_known_solution() {
        let n = 50;
        let mut a = BandedMatrix::identity(n, true);
        for j in 0..n {
            let t = j as f64;
            a.sub[j] = 0.3 * (t * 0.7).cos();
            a.sup[j] = -0.4 * (t * 1.3).sin();
            a.main[j] = 2.0 + 0.5 * (t * 0.2).sin();
        }
        let v: Vec<f64> = (0..n).map(|j| 1.0 + (j as f64 * 0.37).sin()).collect();
        let rhs = a.apply(&v);
        let x = solve_cyclic_banded(&a, &rhs).unwrap();
        assert!(x.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn singular_system_is_rejected() {
        // Periodic Laplacian annihilates constants.
        let g = make_cell_grid(1.0, 32).unwrap();
        let a = assemble_tilted_operator(&unit_spec(g, 0.0)).unwrap();
        assert!(solve_cyclic_banded(&a, &vec![1.0; 32]).is_err());
    }

    #[test]
    fn sample_resampling_interpolates_periodically() {
        let g = make_cell_grid(1.0, 16).unwrap();
        let xs = [0.0, 0.5];
        let ys = [0.0, 1.0];
        let f = PeriodicField::from_samples(g, &xs, &ys).unwrap();
        assert!((f.values[4] - 0.5).abs() < 1e-14); // x = 0.25
        assert!((f.values[12] - 0.5).abs() < 1e-14); // x = 0.75, wraps to x = 1
        assert!((f.interp(1.25) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn difference_stencils() {
        let g = make_cell_grid(1.0, 128).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| (2.0 * PI * x).sin()).collect();
        let gr = gradient_periodic(&v, g.h());
        let lap = laplacian_periodic(&v, g.h());
        for (j, x) in g.points().iter().enumerate() {
            assert!((gr[j] - 2.0 * PI * (2.0 * PI * x).cos()).abs() < 2e-2);
            assert!((lap[j] + 4.0 * PI * PI * v[j]).abs() < 1e-1);
        }
    }
}
