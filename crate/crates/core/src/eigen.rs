//! Principal eigenpairs of Metzler operators by shifted inverse iteration.
//!
//! The shift starts at `1 + Gershgorin bound` and is then lowered to the
//! Collatz–Wielandt upper bound `max_j (Aφ)_j / φ_j` plus a small gap. Every
//! shift stays above the Perron root, so `σI - A` remains a nonsingular
//! M-matrix with a nonnegative inverse and the iterate stays positive.

use crate::error::{Error, Result};
use crate::grid::{assemble_tilted_operator, solve_cyclic_raw, BandedMatrix, CellGrid, OperatorSpec, PeriodicField};
use serde::Serialize;

pub const SCALAR_TOL: f64 = 1e-10;
pub const COUPLED_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: PeriodicField,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenRecord {
    pub value: f64,
    pub residual: f64,
    pub n: usize,
    pub normalization: &'static str,
}

impl EigenPair {
    pub fn record(&self) -> EigenRecord {
        EigenRecord { value: self.value, residual: self.residual, n: self.vector.n(), normalization: "mean" }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEigenPair {
    pub value: f64,
    pub vectors: Vec<PeriodicField>,
    pub residual: f64,
    pub irreducible: bool,
    pub iterations: usize,
}

impl CoupledEigenPair {
    pub fn record(&self) -> EigenRecord {
        EigenRecord {
            value: self.value,
            residual: self.residual,
            n: self.vectors.first().map_or(0, |v| v.n()),
            normalization: "max",
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Collatz–Wielandt bounds over entries where `φ` is not negligible.
fn cw_bounds(av: &[f64], v: &[f64]) -> (f64, f64) {
    let vmax = sup_norm(v);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, x) in av.iter().zip(v) {
        if *x > 1e-13 * vmax {
            let r = a / x;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generic driver: `apply` is `v ↦ A v`, `solve(σ, rhs)` returns `(σI - A)⁻¹ rhs`,
/// `normalize` rescales the iterate in place.
fn inverse_iteration(
    n: usize,
    sigma0: f64,
    tol: f64,
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    solve: &mut dyn FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    normalize: &dyn Fn(&mut [f64]),
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let mut v = vec![1.0; n];
    normalize(&mut v);
    let mut sigma = sigma0;
    let mut kappa_old = f64::NAN;
    let mut best_res = f64::INFINITY;
    let mut stall = 0usize;
    for it in 1..=MAX_ITER {
        let mut y = solve(sigma, &v)?;
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NoConvergence(format!("non-finite iterate at iteration {it}")));
        }
        normalize(&mut y);
        v = y;
        let av = apply(&v);
        let kappa = dot(&v, &av) / dot(&v, &v);
        let res = av.iter().zip(&v).fold(0.0f64, |a, (x, y)| a.max((x - kappa * y).abs()));
        let rel = ((kappa - kappa_old) / kappa.abs().max(1.0)).abs();
        if rel <= tol && res <= tol {
            return Ok((kappa, v, res, it));
        }
        let (lo, hi) = cw_bounds(&av, &v);
        if hi.is_finite() && lo.is_finite() {
            // Keep the shift strictly above the Perron root; shrink it only when it moves noticeably.
            let gap = (hi - lo).max(1e-7 * (1.0 + hi.abs()));
            let candidate = hi + gap;
            if candidate < sigma - 1e-3 * (sigma - hi).abs() {
                sigma = candidate;
            }
        }
        if res < 0.5 * best_res {
            best_res = res;
            stall = 0;
        } else {
            stall += 1;
            if stall > 2000 {
                return Err(Error::NoConvergence(format!(
                    "residual stalled at {res:.3e} (tol {tol:.1e}) after {it} iterations"
                )));
            }
        }
        kappa_old = kappa;
    }
    Err(Error::NoConvergence(format!("iteration cap {MAX_ITER} reached")))
}

/// Principal eigenpair of an assembled periodic Metzler tridiagonal matrix.
pub fn principal_eig_matrix(a: &BandedMatrix, grid: CellGrid, tol: f64) -> Result<EigenPair> {
    if a.min_off_diagonal() < 0.0 {
        return Err(Error::InvalidParameter("matrix is not Metzler".into()));
    }
    let n = a.n();
    let sigma0 = 1.0 + a.gershgorin_upper();
    let apply = |v: &[f64]| a.apply(v);
    let mut solve = |s: f64, rhs: &[f64]| solve_cyclic_raw(&a.affine(s, -1.0), rhs);
    let normalize = |v: &mut [f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x /= m);
    };
    let (value, vec, residual, iterations) = inverse_iteration(n, sigma0, tol, &apply, &mut solve, &normalize)?;
    if vec.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NonPositive("principal eigenvector has a nonpositive entry".into()));
    }
    Ok(EigenPair { value, vector: PeriodicField { grid, values: vec }, residual, iterations })
}

pub fn principal_eig_scalar(spec: &OperatorSpec, tol: f64) -> Result<EigenPair> {
    let a = assemble_tilted_operator(spec)?;
    principal_eig_matrix(&a, spec.grid(), tol)
}

/// Block operator on `m` periodic components: banded diagonal blocks plus
/// node-local couplings `coupling[i][k][j]` (row `i`, column `k`, node `j`).
#[derive(Debug, Clone)]
pub struct CoupledOperator {
    pub grid: CellGrid,
    pub blocks: Vec<BandedMatrix>,
    pub coupling: Vec<Vec<Vec<f64>>>,
}

impl CoupledOperator {
    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let m = self.m();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let bi = self.blocks[i].apply(&v[i * n..(i + 1) * n]);
            for j in 0..n {
                let mut s = bi[j];
                for k in 0..m {
                    if k != i {
                        s += self.coupling[i][k][j] * v[k * n + j];
                    }
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    /// Dense row-major matrix, component-major ordering `i n + j`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.grid.n;
        let m = self.m();
        let mut a = vec![vec![0.0; m * n]; m * n];
        for i in 0..m {
            let bd = self.blocks[i].to_dense();
            for r in 0..n {
                for c in 0..n {
                    a[i * n + r][i * n + c] = bd[r][c];
                }
                for k in 0..m {
                    if k != i {
                        a[i * n + r][k * n + r] = self.coupling[i][k][r];
                    }
                }
            }
        }
        a
    }

    /// Strong connectivity of the off-diagonal sparsity graph.
    pub fn is_irreducible(&self) -> bool {
        let a = self.to_dense();
        let n = a.len();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(r) = stack.pop() {
                for c in 0..n {
                    let w = if forward { a[r][c] } else { a[c][r] };
                    if c != r && w > 0.0 && !seen[c] {
                        seen[c] = true;
                        stack.push(c);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        reach(true) && reach(false)
    }

    fn gershgorin_upper(&self) -> f64 {
        let a = self.to_dense();
        a.iter()
            .enumerate()
            .map(|(r, row)| row[r] + row.iter().enumerate().filter(|(c, _)| *c != r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// LU factorization with partial pivoting for the small dense coupled systems.
struct DenseLu {
    lu: Vec<Vec<f64>>,
    piv: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            if a[p][k].abs() <= 1e-15 * scale {
                return Err(Error::Singular(format!("dense pivot {:.3e} at column {k}", a[p][k])));
            }
            a.swap(k, p);
            piv.swap(k, p);
            let (top, bottom) = a.split_at_mut(k + 1);
            let rk = &top[k];
            for row in bottom.iter_mut() {
                let f = row[k] / rk[k];
                if f != 0.0 {
                    row[k] = f;
                    for c in k + 1..n {
                        row[c] -= f * rk[c];
                    }
                }
            }
        }
        Ok(DenseLu { lu: a, piv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r][c] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r][c] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[r][r];
        }
        x
    }
}

/// Perron pair of a block operator, normalized to max component 1.
pub fn principal_eig_block(op: &CoupledOperator, tol: f64) -> Result<CoupledEigenPair> {
    let n = op.grid.n;
    let m = op.m();
    let dense = op.to_dense();
    for (r, row) in dense.iter().enumerate() {
        if row.iter().enumerate().any(|(c, v)| c != r && *v < 0.0) {
            return Err(Error::InvalidParameter(format!("coupled operator not Metzler in row {r}")));
        }
    }
    let sigma0 = 1.0 + op.gershgorin_upper();
    let apply = |v: &[f64]| op.apply(v);
    let mut cache: Option<(f64, DenseLu)> = None;
    let mut solve = |s: f64, rhs: &[f64]| -> Result<Vec<f64>> {
        if cache.as_ref().map_or(true, |(cs, _)| *cs != s) {
            let mut b = dense.clone();
            for (r, row) in b.iter_mut().enumerate() {
                for v in row.iter_mut() {
                    *v = -*v;
                }
                row[r] += s;
            }
            cache = Some((s, DenseLu::factor(b)?));
        }
        Ok(cache.as_ref().unwrap().1.solve(rhs))
    };
    let normalize = |v: &mut [f64]| {
        let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter_mut().for_each(|x| *x /= mx);
    };
    let (value, v, residual, iterations) = inverse_iteration(m * n, sigma0, tol, &apply, &mut solve, &normalize)?;
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    // Entries at residual level cannot be told apart from zero.
    if !(vmin > 1e3 * tol.max(1e-13)) {
        let (i, j) = {
            let idx = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            (idx / n, idx % n)
        };
        return Err(Error::ReducibleCoupling(format!(
            "Perron vector vanishes (value {vmin:.3e}) in component {} at node {j}; eigenvalue {value:.6e}",
            i + 1
        )));
    }
    let vectors = (0..m).map(|i| PeriodicField { grid: op.grid, values: v[i * n..(i + 1) * n].to_vec() }).collect();
    Ok(CoupledEigenPair { value, vectors, residual, irreducible: op.is_irreducible(), iterations })
}
