//! Dispersion curves, critical speed, decay exponents and vector eigenfunctions.

use crate::eigen::{principal_eig_scalar, EigenPair, SCALAR_TOL};
use crate::error::{Error, Result};
use crate::grid::{assemble_tilted_operator, solve_cyclic_banded, PeriodicField};
use crate::models::ReactionModel;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub const LAMBDA_MAX: f64 = 64.0;
pub const GAP_MIN: f64 = 1e-8;
pub const CASCADE_RESIDUAL: f64 = 1e-8;
pub const TANGENCY_TOL: f64 = 1e-10;
pub const CONVEXITY_TOL: f64 = 1e-6;
/// Speeds within `CRITICAL_TOL·max(1, c⁰₊)` of `c⁰₊` are treated as critical.
pub const CRITICAL_TOL: f64 = 1e-9;

type Key = (usize, i64, usize);

fn key(i: usize, lambda: f64, n: usize) -> Key {
    (i, (lambda * 1e12).round() as i64, n)
}

const INVPHI: f64 = 0.618_033_988_749_894_9;

/// Minimize `κ(λ)/λ` over `(0, LAMBDA_MAX]`; returns `(speed, argmin)`.
///
/// Golden-section search inside a geometrically grown bracket, then bisection on
/// the tangency condition `λκ′(λ) = κ(λ)` to resolve the argmin below √(rounding).
pub fn min_speed(kappa: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let g = |l: f64| -> Result<f64> { Ok(kappa(l)? / l) };
    let mut lam = 0.05;
    let mut prev = (f64::NAN, f64::NAN);
    let mut cur = (lam, g(lam)?);
    let (mut a, mut b);
    loop {
        let next_l = 2.0 * cur.0;
        if next_l > LAMBDA_MAX * 2.0 {
            return Err(Error::NoBracket(LAMBDA_MAX));
        }
        let next = (next_l, g(next_l.min(LAMBDA_MAX))?);
        if next.1 >= cur.1 {
            a = if prev.0.is_nan() { 1e-6 } else { prev.0 };
            b = next.0.min(LAMBDA_MAX);
            break;
        }
        if next_l >= LAMBDA_MAX {
            return Err(Error::NoBracket(LAMBDA_MAX));
        }
        prev = cur;
        cur = next;
        lam = next_l;
    }
    let _ = lam;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = g(x1)?;
    let mut f2 = g(x2)?;
    while b - a > 1e-6 * (1.0 + a.abs()) {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = g(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = g(x2)?;
        }
    }
    let golden = 0.5 * (a + b);
    let tangency = |l: f64| -> Result<f64> {
        let dl = 1e-4 * l.max(1.0).min(l * 1e3).max(1e-8);
        let kp = (kappa(l + dl)? - kappa(l - dl)?) / (2.0 * dl);
        Ok(l * kp - kappa(l)?)
    };
    // Widen slightly: the golden bracket is only as accurate as √(rounding).
    let w = (b - a).max(1e-6 * golden);
    let (mut lo, mut hi) = ((golden - 4.0 * w).max(1e-9), golden + 4.0 * w);
    let (tlo, thi) = (tangency(lo)?, tangency(hi)?);
    let lstar = if tlo < 0.0 && thi > 0.0 {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if tangency(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + mid) {
                break;
            }
        }
        0.5 * (lo + hi)
    } else {
        golden
    };
    Ok((kappa(lstar)? / lstar, lstar))
}

#[derive(Debug, Clone, Serialize)]
pub struct VectorEigenfunction {
    pub lambda: f64,
    pub kappa: f64,
    #[serde(skip)]
    pub components: Vec<PeriodicField>,
    pub residuals: Vec<f64>,
    pub gaps: Vec<f64>,
}

impl VectorEigenfunction {
    pub fn m(&self) -> usize {
        self.components.len()
    }

    /// `max_{i,x} φᵢ`.
    pub fn max(&self) -> f64 {
        self.components.iter().map(|c| c.max()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_{i,x} φᵢ`.
    pub fn min(&self) -> f64 {
        self.components.iter().map(|c| c.min()).fold(f64::INFINITY, f64::min)
    }

    /// `|Φ| = max_x Σᵢ φᵢ(x)`.
    pub fn sum_norm(&self) -> f64 {
        let n = self.components[0].n();
        (0..n).map(|j| self.components.iter().map(|c| c.values[j]).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn at_node(&self, j: usize) -> Vec<f64> {
        self.components.iter().map(|c| c.values[j]).collect()
    }

    pub fn interp(&self, x: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.interp(x)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionDerivative {
    pub lambda: f64,
    #[serde(skip)]
    pub components: Vec<PeriodicField>,
    pub kappa_prime: f64,
    pub dlam: f64,
    pub richardson_diff: f64,
}

impl EigenfunctionDerivative {
    /// `max_{i,x} |φ⁽¹⁾ᵢ|`.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionTable {
    pub lambdas: Vec<f64>,
    /// `kappas[i][k] = κᵢ(lambdas[k])`.
    pub kappas: Vec<Vec<f64>>,
    pub c_plus0: f64,
    pub lambda_plus0: f64,
    pub min_second_difference: f64,
    pub convexity_flag: bool,
}

/// Closed-form linearized front `k e^{λ_c(ct - x e)} Φ_{λ_c}(x)`.
#[derive(Debug, Clone)]
pub struct LinearFront {
    pub c: f64,
    pub k: f64,
    pub lambda_c: f64,
    pub e: f64,
    pub phi: VectorEigenfunction,
}

impl LinearFront {
    pub fn eval(&self, t: f64, x: f64) -> Vec<f64> {
        let amp = self.k * (self.lambda_c * (self.c * t - x * self.e)).exp();
        self.phi.interp(x).into_iter().map(|p| amp * p).collect()
    }
}

/// Dispersion data for one model with a concurrency-safe κ memo.
pub struct Dispersion<'a> {
    pub model: &'a ReactionModel,
    pub tol: f64,
    memo: Mutex<HashMap<Key, Arc<EigenPair>>>,
    speed: Mutex<Option<(f64, f64)>>,
}

impl<'a> Dispersion<'a> {
    pub fn new(model: &'a ReactionModel) -> Self {
        Dispersion { model, tol: SCALAR_TOL, memo: Mutex::new(HashMap::new()), speed: Mutex::new(None) }
    }

    /// Scalar principal pair of `L_e(dᵢ, qᵢ, ζⁱ, λ)` (memoized).
    pub fn eig(&self, i: usize, lambda: f64) -> Result<Arc<EigenPair>> {
        if i >= self.model.m() {
            return Err(Error::InvalidParameter(format!("component {} > m = {}", i + 1, self.model.m())));
        }
        let k = key(i, lambda, self.model.n());
        if let Some(p) = self.memo.lock().unwrap().get(&k) {
            return Ok(p.clone());
        }
        let spec = self.model.operator(i, self.model.zeta(i).clone(), lambda)?;
        let p = Arc::new(principal_eig_scalar(&spec, self.tol)?);
        self.memo.lock().unwrap().insert(k, p.clone());
        Ok(p)
    }

    pub fn kappa(&self, i: usize, lambda: f64) -> Result<f64> {
        Ok(self.eig(i, lambda)?.value)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    /// `(c⁰₊, λ₊⁰)`.
    pub fn critical_speed(&self) -> Result<(f64, f64)> {
        if let Some(s) = *self.speed.lock().unwrap() {
            return Ok(s);
        }
        let k0 = self.kappa(0, 0.0)?;
        if !(k0 > 0.0) {
            return Err(Error::H4Fails(k0));
        }
        let s = min_speed(|l| self.kappa(0, l))?;
        *self.speed.lock().unwrap() = Some(s);
        Ok(s)
    }

    pub fn is_critical(&self, c: f64) -> Result<bool> {
        let (c0, _) = self.critical_speed()?;
        Ok((c - c0).abs() <= CRITICAL_TOL * c0.abs().max(1.0))
    }

    /// Smallest positive root of `κ₁(λ) = cλ`.
    pub fn lambda_c(&self, c: f64) -> Result<f64> {
        let (c0, l0) = self.critical_speed()?;
        if self.is_critical(c)? {
            return Ok(l0);
        }
        if c < c0 {
            return Err(Error::SpeedBelowMinimal { c, c_plus0: c0 });
        }
        let f = |l: f64| -> Result<f64> { Ok(self.kappa(0, l)? - c * l) };
        let (mut lo, mut hi) = (0.0, l0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + hi) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `ε = ½ min{(λ₊⁰ - λ_c)/2, λ_c/2}`.
    pub fn epsilon(&self, c: f64) -> Result<f64> {
        let (_, l0) = self.critical_speed()?;
        let lc = self.lambda_c(c)?;
        Ok(0.5 * ((l0 - lc) / 2.0).min(lc / 2.0))
    }

    /// Positive `Φ_λ` from the triangular cascade.
    pub fn eigenfunction_cascade(&self, lambda: f64) -> Result<VectorEigenfunction> {
        let model = self.model;
        let m = model.m();
        let n = model.n();
        let p1 = self.eig(0, lambda)?;
        let kappa = p1.value;
        let mut comps = vec![p1.vector.clone()];
        let mut residuals = vec![p1.residual];
        let mut gaps = Vec::new();
        for j in 1..m {
            let kj = self.kappa(j, lambda)?;
            let gap = kappa - kj;
            gaps.push(gap);
            if gap < GAP_MIN {
                return Err(Error::H6Fails { lambda, gap });
            }
            let a = assemble_tilted_operator(&model.operator(j, model.zeta(j).clone(), lambda)?)?;
            let rhs: Vec<f64> =
                (0..n).map(|x| (0..j).map(|k| model.coupling(j, k, x) * comps[k].values[x]).sum()).collect();
            let sys = a.affine(kappa, -1.0);
            let phi = solve_cyclic_banded(&sys, &rhs)?;
            let res = sys.apply(&phi).iter().zip(&rhs).fold(0.0f64, |r, (p, q)| r.max((p - q).abs()));
            if let Some(x) = phi.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::NonPositive(format!(
                    "cascade component {} nonpositive at node {x} (lambda = {lambda:.6}); refine the grid",
                    j + 1
                )));
            }
            if res > CASCADE_RESIDUAL {
                return Err(Error::NoConvergence(format!("cascade residual {res:.3e} for component {}", j + 1)));
            }
            residuals.push(res);
            comps.push(PeriodicField { grid: model.grid, values: phi });
        }
        Ok(VectorEigenfunction { lambda, kappa, components: comps, residuals, gaps })
    }

    /// Central difference of `Φ_λ` and `κ₁` in `λ` with a Richardson check.
    pub fn eigenfunction_derivative(&self, lambda: f64, dlam: Option<f64>) -> Result<EigenfunctionDerivative> {
        let dl = dlam.unwrap_or(1e-4 * lambda.abs().max(1.0));
        let stencil = |h: f64| -> Result<(Vec<Vec<f64>>, f64)> {
            let p = self.eigenfunction_cascade(lambda + h)?;
            let q = self.eigenfunction_cascade(lambda - h)?;
            let d = p
                .components
                .iter()
                .zip(&q.components)
                .map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y) / (2.0 * h)).collect())
                .collect();
            Ok((d, (p.kappa - q.kappa) / (2.0 * h)))
        };
        let (d1, kp1) = stencil(dl)?;
        let (d2, _) = stencil(0.5 * dl)?;
        let scale = d1.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        let diff = d1.iter().flatten().zip(d2.iter().flatten()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if diff > 1e-4 * scale {
            return Err(Error::Richardson(format!("dlam vs dlam/2 differ by {diff:.3e} (scale {scale:.3e})")));
        }
        let grid = self.model.grid;
        Ok(EigenfunctionDerivative {
            lambda,
            components: d1.into_iter().map(|values| PeriodicField { grid, values }).collect(),
            kappa_prime: kp1,
            dlam: dl,
            richardson_diff: diff,
        })
    }

    pub fn linearized_front(&self, c: f64, k: f64) -> Result<LinearFront> {
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("front amplitude k = {k} must be positive")));
        }
        let lc = self.lambda_c(c)?;
        Ok(LinearFront { c, k, lambda_c: lc, e: self.model.e.sign(), phi: self.eigenfunction_cascade(lc)? })
    }

    /// Sample all `κᵢ` on `lambdas` (in parallel) and flag sampled convexity defects.
    pub fn table(&self, lambdas: &[f64]) -> Result<DispersionTable> {
        let (c0, l0) = self.critical_speed()?;
        let m = self.model.m();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| lambdas.par_iter().map(|&l| self.kappa(i, l)).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let scale = rows[0].iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut min_d2 = f64::INFINITY;
        for w in 1..lambdas.len().saturating_sub(1) {
            let (a, b, c) = (lambdas[w - 1], lambdas[w], lambdas[w + 1]);
            let (fa, fb, fc) = (rows[0][w - 1], rows[0][w], rows[0][w + 1]);
            // Divided second difference scaled to the local spacing squared.
            let d2 = 2.0 * ((fc - fb) / (c - b) - (fb - fa) / (b - a)) / (c - a) * ((c - a) / 2.0).powi(2);
            min_d2 = min_d2.min(d2);
        }
        Ok(DispersionTable {
            lambdas: lambdas.to_vec(),
            kappas: rows,
            c_plus0: c0,
            lambda_plus0: l0,
            min_second_difference: min_d2,
            convexity_flag: min_d2 < -CONVEXITY_TOL * scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_cell_grid, CellGrid, PeriodicField};
    use crate::models::{benchmark2, constant2};
    use std::f64::consts::PI;

    fn g() -> CellGrid {
        make_cell_grid(1.0, 64).unwrap()
    }

    #[test]
    fn constant_kappas() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        assert!((d.kappa(0, 0.5).unwrap() - 1.25).abs() < 1e-10);
        assert!(d.kappa(1, 1.0).unwrap().abs() < 1e-10);
        let before = d.memo_len();
        d.kappa(0, 0.5).unwrap();
        assert_eq!(d.memo_len(), before);
    }

    #[test]
    fn constant_speed_and_roots() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        let (c0, l0) = d.critical_speed().unwrap();
        assert!((c0 - 2.0).abs() < 1e-9 && (l0 - 1.0).abs() < 1e-7, "{c0} {l0}");
        assert!((d.lambda_c(2.5).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(d.lambda_c(2.0).unwrap(), l0);
        assert!(matches!(d.lambda_c(1.9), Err(Error::SpeedBelowMinimal { .. })));
        assert!((d.epsilon(2.5).unwrap() - 0.125).abs() < 1e-9);
    }

    #[test]
    fn drift_shifts_speed() {
        let gr = g();
        let m = benchmark2("drift", PeriodicField::constant(gr, 1.0), PeriodicField::constant(gr, 0.5));
        let (c0, l0) = Dispersion::new(&m).critical_speed().unwrap();
        assert!((c0 - 1.5).abs() < 1e-9 && (l0 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cascade_constant_ratio() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        let phi = d.eigenfunction_cascade(1.0).unwrap();
        for j in 0..64 {
            assert!((phi.components[1].values[j] / phi.components[0].values[j] - 0.15).abs() < 1e-10);
        }
        let mut m1 = m.clone();
        m1.a[1][0] = Some(PeriodicField::constant(g(), 1.0));
        let phi = Dispersion::new(&m1).eigenfunction_cascade(1.0).unwrap();
        assert!((phi.components[1].values[5] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn derivative_constant_medium() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        let der = d.eigenfunction_derivative(1.0, None).unwrap();
        assert!((der.kappa_prime - 2.0).abs() < 1e-7);
        assert!(der.max_abs() < 1e-5);
    }

    #[test]
    fn tangency_in_periodic_medium() {
        let gr = make_cell_grid(2.0 * PI, 64).unwrap();
        let m = crate::models::periodic2(gr, 0.4);
        let d = Dispersion::new(&m);
        let (c0, l0) = d.critical_speed().unwrap();
        assert!((d.kappa(0, l0).unwrap() - c0 * l0).abs() < 1e-8);
        let der = d.eigenfunction_derivative(l0, None).unwrap();
        assert!((der.kappa_prime - c0).abs() < 1e-6, "{} vs {c0}", der.kappa_prime);
    }

    #[test]
    fn linearized_front_at_origin() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        let w = d.linearized_front(2.5, 1.0).unwrap();
        let v = w.eval(0.0, 0.0);
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 0.15).abs() < 1e-9);
    }

    #[test]
    fn table_is_convex_for_constant_model() {
        let m = constant2(g());
        let d = Dispersion::new(&m);
        let lams: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let t = d.table(&lams).unwrap();
        assert!(!t.convexity_flag);
        assert!((t.kappas[0][10] - 2.0).abs() < 1e-9);
    }
}
