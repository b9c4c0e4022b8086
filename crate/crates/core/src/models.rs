//! Cooperative reaction models in triangular form, the competition transform,
//! and the hypothesis / assumption reports.
//!
//! Models are `f₁ = u₁h₁(x,u)` and `fᵢ = Σ_{j<i} a_ij(x)u_j + uᵢhᵢ(x,u)`, with each
//! `hᵢ` a quadratic polynomial in `u` whose coefficients are periodic fields.

use crate::dispersion::Dispersion;
use crate::eigen::{principal_eig_block, principal_eig_scalar, CoupledOperator, COUPLED_TOL, SCALAR_TOL};
use crate::error::{Error, Result};
use crate::grid::{assemble_tilted_operator, gradient_periodic, solve_cyclic_banded, CellGrid, Direction, OperatorSpec, PeriodicField};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `coef(x) · u_k · u_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTerm {
    pub k: usize,
    pub l: usize,
    pub coef: PeriodicField,
}

/// `c0(x) + Σ_k lin_k(x) u_k + Σ coef(x) u_k u_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPoly {
    pub c0: PeriodicField,
    pub lin: Vec<PeriodicField>,
    pub quad: Vec<QuadTerm>,
}

impl QuadPoly {
    pub fn eval(&self, j: usize, u: &[f64]) -> f64 {
        let mut s = self.c0.values[j];
        for (k, c) in self.lin.iter().enumerate() {
            s += c.values[j] * u[k];
        }
        for t in &self.quad {
            s += t.coef.values[j] * u[t.k] * u[t.l];
        }
        s
    }

    pub fn grad(&self, j: usize, u: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.lin.iter().map(|c| c.values[j]).collect();
        for t in &self.quad {
            let c = t.coef.values[j];
            g[t.k] += c * u[t.l];
            g[t.l] += c * u[t.k];
        }
        g
    }

    /// Largest |∂h/∂u_p| over the cube `[lo, hi]^m` at node `j` (attained at a vertex).
    pub fn max_abs_partial_on_cube(&self, j: usize, p: usize, lo: f64, hi: f64) -> f64 {
        let m = self.lin.len();
        let mut best = 0.0f64;
        let mut u = vec![0.0; m];
        for mask in 0..(1usize << m) {
            for (k, uk) in u.iter_mut().enumerate() {
                *uk = if mask >> k & 1 == 1 { hi } else { lo };
            }
            best = best.max(self.grad(j, &u)[p].abs());
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionModel {
    pub name: String,
    pub grid: CellGrid,
    pub e: Direction,
    pub d: Vec<PeriodicField>,
    pub q: Vec<PeriodicField>,
    /// `a[i][j]` for `j < i`; entries with `j ≥ i` are ignored.
    pub a: Vec<Vec<Option<PeriodicField>>>,
    pub h: Vec<QuadPoly>,
}

/// Where to linearize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Zero,
    One,
}

impl ReactionModel {
    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if !(2..=6).contains(&m) {
            return Err(Error::InvalidParameter(format!("component count {m} outside 2..=6")));
        }
        if self.d.len() != m || self.q.len() != m || self.a.len() != m {
            return Err(Error::InvalidParameter("coefficient arrays do not match component count".into()));
        }
        for (i, hi) in self.h.iter().enumerate() {
            if hi.lin.len() != m || hi.quad.iter().any(|t| t.k >= m || t.l >= m) {
                return Err(Error::InvalidParameter(format!("h_{} has wrong arity", i + 1)));
            }
        }
        for (i, d) in self.d.iter().enumerate() {
            if !(d.min() > 0.0) {
                return Err(Error::InvalidParameter(format!("d_{} not positive", i + 1)));
            }
        }
        for i in 0..m {
            for j in 0..i {
                if let Some(a) = &self.a[i][j] {
                    if a.min() < 0.0 {
                        return Err(Error::InvalidParameter(format!("a_{}{} negative", i + 1, j + 1)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn coupling(&self, i: usize, k: usize, j: usize) -> f64 {
        if k < i {
            self.a[i][k].as_ref().map_or(0.0, |f| f.values[j])
        } else {
            0.0
        }
    }

    /// `ζⁱ(x) = hᵢ(x, 0)`.
    pub fn zeta(&self, i: usize) -> &PeriodicField {
        &self.h[i].c0
    }

    pub fn evaluate_f(&self, j: usize, u: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|i| {
                let lower: f64 = (0..i).map(|k| self.coupling(i, k, j) * u[k]).sum();
                lower + u[i] * self.h[i].eval(j, u)
            })
            .collect()
    }

    /// Row `i`, column `k`: `∂fᵢ/∂u_k`.
    pub fn evaluate_jacobian(&self, j: usize, u: &[f64]) -> Vec<Vec<f64>> {
        let m = self.m();
        (0..m)
            .map(|i| {
                let g = self.h[i].grad(j, u);
                let hv = self.h[i].eval(j, u);
                (0..m)
                    .map(|k| {
                        let mut v = self.coupling(i, k, j) + u[i] * g[k];
                        if k == i {
                            v += hv;
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// `(dᵢ, qᵢ, η, λ)` with the model's direction.
    pub fn operator(&self, i: usize, eta: PeriodicField, lambda: f64) -> Result<OperatorSpec> {
        OperatorSpec::new(self.d[i].clone(), self.q[i].clone(), eta, lambda, self.e)
    }

    /// Linearization `DΔ + q∇ + D_uF(x, state)` as a block operator.
    pub fn coupled_operator(&self, at: State) -> Result<CoupledOperator> {
        let m = self.m();
        let n = self.n();
        let u = vec![if at == State::One { 1.0 } else { 0.0 }; m];
        let jac: Vec<Vec<Vec<f64>>> = (0..n).map(|j| self.evaluate_jacobian(j, &u)).collect();
        let mut blocks = Vec::with_capacity(m);
        for i in 0..m {
            let eta = PeriodicField { grid: self.grid, values: (0..n).map(|j| jac[j][i][i]).collect() };
            blocks.push(assemble_tilted_operator(&self.operator(i, eta, 0.0)?)?);
        }
        let coupling = (0..m)
            .map(|i| (0..m).map(|k| if i == k { vec![0.0; n] } else { (0..n).map(|j| jac[j][i][k]).collect() }).collect())
            .collect();
        Ok(CoupledOperator { grid: self.grid, blocks, coupling })
    }

    /// `max |∂hᵢ/∂uᵢ|` over `[0,1]^m` and all nodes; sets the explicit reaction step bound.
    pub fn max_own_partial(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.m() {
            for j in 0..self.n() {
                best = best.max(self.h[i].max_abs_partial_on_cube(j, i, 0.0, 1.0));
            }
        }
        best
    }

    /// `γ₀ = max_{i,j,x} |∂hᵢ/∂u_j|` over the cube `[-θ, θ]^m`.
    pub fn gamma0(&self, theta: f64) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.m() {
            for p in 0..self.m() {
                for j in 0..self.n() {
                    best = best.max(self.h[i].max_abs_partial_on_cube(j, p, -theta, theta));
                }
            }
        }
        best
    }

    /// Model with every `hᵢ` scaled by `s` and couplings scaled by `s`.
    pub fn scaled_reaction(&self, s: f64) -> Self {
        let sc = |f: &PeriodicField| f.map(|v| s * v);
        let mut out = self.clone();
        for hi in &mut out.h {
            hi.c0 = sc(&hi.c0);
            hi.lin = hi.lin.iter().map(sc).collect();
            for t in &mut hi.quad {
                t.coef = sc(&t.coef);
            }
        }
        for row in &mut out.a {
            for a in row.iter_mut().flatten() {
                *a = sc(a);
            }
        }
        out
    }
}

fn cst(grid: CellGrid, v: f64) -> PeriodicField {
    PeriodicField::constant(grid, v)
}

fn quad(k: usize, l: usize, coef: PeriodicField) -> QuadTerm {
    QuadTerm { k, l, coef }
}

/// Two-component benchmark with `ζ¹ = 1`, `ζ² = -1`, `a₂₁ = 0.3` and the given
/// (common) diffusion and drift.
///
/// `h₁ = 1.2(1-u₁) - 0.2(1-u₂)`,
/// `h₂ = -1 + (u₂ - 0.15u₁)(48/17 + 3u₁ - 5u₂) - 0.05u₁(1-u₂)`.
/// The quadratic part of `h₂` vanishes to first order along `u₂ = 0.15u₁`, the
/// direction of the linearized front, and `D_uF(𝟏)` is stable.
pub fn benchmark2(name: &str, d: PeriodicField, q: PeriodicField) -> ReactionModel {
    let g = d.grid;
    let a0 = 48.0 / 17.0;
    let h1 = QuadPoly { c0: cst(g, 1.0), lin: vec![cst(g, -1.2), cst(g, 0.2)], quad: vec![] };
    let h2 = QuadPoly {
        c0: cst(g, -1.0),
        lin: vec![cst(g, -0.15 * a0 - 0.05), cst(g, a0)],
        quad: vec![quad(0, 0, cst(g, -0.45)), quad(0, 1, cst(g, 3.8)), quad(1, 1, cst(g, -5.0))],
    };
    ReactionModel {
        name: name.into(),
        grid: g,
        e: Direction::Plus,
        d: vec![d.clone(), d],
        q: vec![q.clone(), q],
        a: vec![vec![None, None], vec![Some(cst(g, 0.3)), None]],
        h: vec![h1, h2],
    }
}

pub fn constant2(grid: CellGrid) -> ReactionModel {
    benchmark2("constant2", cst(grid, 1.0), cst(grid, 0.0))
}

/// The benchmark reaction in a periodic medium `d(x) = 1 + amp cos(2πx/L)`.
pub fn periodic2(grid: CellGrid, amp: f64) -> ReactionModel {
    let l = grid.l;
    let d = PeriodicField::from_fn(grid, |x| 1.0 + amp * (2.0 * PI * x / l).cos());
    benchmark2("periodic2", d, cst(grid, 0.0))
}

/// `m`-component chain: `h₁ = r(x)(1-u₁) + b(u₂-1)`, `hᵢ = ζ - γuᵢ + b u_{i+1}` with
/// `ζ = γ - b - a` (so `F(𝟏) = 0`), couplings `a_{i,i-1} = a`.
pub fn chain(grid: CellGrid, m: usize, r: PeriodicField, a: f64, gamma: f64, b: f64) -> ReactionModel {
    let g = grid;
    let mut h = Vec::with_capacity(m);
    for i in 0..m {
        let bi = if i + 1 < m { b } else { 0.0 };
        let mut lin = vec![cst(g, 0.0); m];
        let c0 = if i == 0 {
            lin[0] = r.map(|v| -v);
            r.map(|v| v - bi)
        } else {
            lin[i] = cst(g, -gamma);
            cst(g, gamma - bi - a)
        };
        if i + 1 < m {
            lin[i + 1] = cst(g, bi);
        }
        h.push(QuadPoly { c0, lin, quad: vec![] });
    }
    let mut coup = vec![vec![None; m]; m];
    for (i, row) in coup.iter_mut().enumerate().skip(1) {
        row[i - 1] = Some(cst(g, a));
    }
    ReactionModel {
        name: format!("chain-{m}"),
        grid: g,
        e: Direction::Plus,
        d: vec![cst(g, 1.0); m],
        q: vec![cst(g, 0.0); m],
        a: coup,
        h,
    }
}

// ---------------------------------------------------------------------------
// Competition systems
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CompetitionSpec {
    pub grid: CellGrid,
    pub e: Direction,
    pub d: [PeriodicField; 2],
    pub drift: [PeriodicField; 2],
    pub b: [PeriodicField; 2],
    pub a11: PeriodicField,
    pub a12: PeriodicField,
    pub a21: PeriodicField,
    pub a22: PeriodicField,
    pub d0: f64,
    pub a0: f64,
}

impl CompetitionSpec {
    pub fn constant(grid: CellGrid, b: f64, a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        CompetitionSpec {
            grid,
            e: Direction::Plus,
            d: [cst(grid, 1.0), cst(grid, 1.0)],
            drift: [cst(grid, 0.0), cst(grid, 0.0)],
            b: [cst(grid, b), cst(grid, b)],
            a11: cst(grid, a11),
            a12: cst(grid, a12),
            a21: cst(grid, a21),
            a22: cst(grid, a22),
            d0: 1e-3,
            a0: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in &self.d {
            if d.min() < self.d0 || !(self.d0 > 0.0) {
                return Err(Error::InvalidParameter(format!("diffusion below floor d0 = {}", self.d0)));
            }
        }
        for a in [&self.a11, &self.a12, &self.a21, &self.a22] {
            if a.min() < self.a0 || !(self.a0 > 0.0) {
                return Err(Error::InvalidParameter(format!("competition coefficient below floor a0 = {}", self.a0)));
            }
        }
        Ok(())
    }

    fn self_limitation(&self, i: usize) -> &PeriodicField {
        if i == 0 {
            &self.a11
        } else {
            &self.a22
        }
    }

    /// `λ₀(dᵢ, aᵢ, η)`.
    pub fn lambda0(&self, i: usize, eta: PeriodicField) -> Result<f64> {
        let spec = OperatorSpec::new(self.d[i].clone(), self.drift[i].clone(), eta, 0.0, self.e)?;
        Ok(principal_eig_scalar(&spec, SCALAR_TOL)?.value)
    }

    /// Right-hand side of the competition system at node `j`.
    pub fn reaction(&self, j: usize, u: [f64; 2]) -> [f64; 2] {
        let v = |f: &PeriodicField| f.values[j];
        [
            u[0] * (v(&self.b[0]) - v(&self.a11) * u[0] - v(&self.a12) * u[1]),
            u[1] * (v(&self.b[1]) - v(&self.a21) * u[0] - v(&self.a22) * u[1]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStates {
    pub u1: PeriodicField,
    pub u2: PeriodicField,
}

/// Solve `0 = dΔu + a∇u + u(b - a_ii u)` by IMEX time stepping from `max b / min a_ii`.
pub fn scalar_logistic_steady_state(
    grid: CellGrid,
    d: &PeriodicField,
    drift: &PeriodicField,
    b: &PeriodicField,
    aii: &PeriodicField,
    e: Direction,
    tol: f64,
) -> Result<PeriodicField> {
    let spec = OperatorSpec::new(d.clone(), drift.clone(), cst(grid, 0.0), 0.0, e)?;
    let a = assemble_tilted_operator(&spec)?;
    let dt = 0.2 / (b.max_abs() + aii.max() * (b.max() / aii.min()).abs()).max(1e-3);
    let sys = a.affine(1.0, -dt);
    let mut u = vec![b.max() / aii.min(); grid.n];
    let max_steps = (2.0e5 / dt.min(1.0)) as usize;
    for step in 0..max_steps {
        let rhs: Vec<f64> = (0..grid.n).map(|j| u[j] + dt * u[j] * (b.values[j] - aii.values[j] * u[j])).collect();
        let next = solve_cyclic_banded(&sys, &rhs)?;
        let rate = next.iter().zip(&u).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / dt;
        u = next;
        if rate <= tol {
            if u.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::NonPositive("steady state vanished".into()));
            }
            return PeriodicField::new(grid, u);
        }
        if step > 0 && u.iter().all(|v| *v < 1e-200) {
            return Err(Error::NonPositive("steady state decays to zero".into()));
        }
    }
    Err(Error::NoConvergence("steady state time stepping budget exhausted".into()))
}

pub fn competition_steady_states(spec: &CompetitionSpec, tol: f64) -> Result<SteadyStates> {
    for i in 0..2 {
        let l0 = spec.lambda0(i, spec.b[i].clone())?;
        if !(l0 > 0.0) {
            return Err(Error::InvalidParameter(format!("(A1) fails: lambda_0(d_{0}, a_{0}, b_{0}) = {l0:.6e}", i + 1)));
        }
    }
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        out.push(scalar_logistic_steady_state(
            spec.grid,
            &spec.d[i],
            &spec.drift[i],
            &spec.b[i],
            spec.self_limitation(i),
            spec.e,
            tol,
        )?);
    }
    let u2 = out.pop().unwrap();
    let u1 = out.pop().unwrap();
    Ok(SteadyStates { u1, u2 })
}

/// Starred coefficients `a₁₁*, a₁₂*, a₂₁*, a₂₂*`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarCoefficients {
    pub a11: PeriodicField,
    pub a12: PeriodicField,
    pub a21: PeriodicField,
    pub a22: PeriodicField,
}

pub fn star_coefficients(spec: &CompetitionSpec, ss: &SteadyStates) -> StarCoefficients {
    let mul = |a: &PeriodicField, u: &PeriodicField| a.zip_with(u, |x, y| x * y);
    StarCoefficients {
        a11: mul(&spec.a11, &ss.u1),
        a12: mul(&spec.a12, &ss.u2),
        a21: mul(&spec.a21, &ss.u1),
        a22: mul(&spec.a22, &ss.u2),
    }
}

/// Drift `qᵢ = aᵢ + 2dᵢ ∇uᵢ*/uᵢ*` with the central first difference.
pub fn transformed_drift(spec: &CompetitionSpec, i: usize, ustar: &PeriodicField) -> PeriodicField {
    let g = gradient_periodic(&ustar.values, spec.grid.h());
    let vals = (0..spec.grid.n)
        .map(|j| spec.drift[i].values[j] + 2.0 * spec.d[i].values[j] * g[j] / ustar.values[j])
        .collect();
    PeriodicField { grid: spec.grid, values: vals }
}

pub fn competition_to_cooperative(spec: &CompetitionSpec, ss: &SteadyStates) -> Result<ReactionModel> {
    if ss.u1.min() <= 0.0 || ss.u2.min() <= 0.0 {
        return Err(Error::NonPositive("steady state not strictly positive".into()));
    }
    let g = spec.grid;
    let s = star_coefficients(spec, ss);
    let neg = |f: &PeriodicField| f.map(|v| -v);
    let h1 = QuadPoly { c0: s.a11.zip_with(&s.a12, |a, b| a - b), lin: vec![neg(&s.a11), s.a12.clone()], quad: vec![] };
    let h2 = QuadPoly { c0: neg(&s.a22), lin: vec![neg(&s.a21), s.a22.clone()], quad: vec![] };
    let model = ReactionModel {
        name: "competition".into(),
        grid: g,
        e: spec.e,
        d: spec.d.to_vec(),
        q: vec![transformed_drift(spec, 0, &ss.u1), transformed_drift(spec, 1, &ss.u2)],
        a: vec![vec![None, None], vec![Some(s.a21.clone()), None]],
        h: vec![h1, h2],
    };
    model.validate()?;
    Ok(model)
}

/// Cooperative `(ũ₁, ũ₂)` → competition `(u₁, u₂) = (ũ₁u₁*, (1-ũ₂)u₂*)` at node `j`.
pub fn inverse_transform(ss: &SteadyStates, j: usize, u: [f64; 2]) -> [f64; 2] {
    [u[0] * ss.u1.values[j], (1.0 - u[1]) * ss.u2.values[j]]
}

pub fn forward_transform(ss: &SteadyStates, j: usize, u: [f64; 2]) -> [f64; 2] {
    [u[0] / ss.u1.values[j], (ss.u2.values[j] - u[1]) / ss.u2.values[j]]
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotCheckable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub name: String,
    pub verdict: Verdict,
    pub margin: Option<f64>,
    pub witness: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct HypothesisReport {
    pub entries: Vec<Entry>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.get(name).map(|e| e.verdict)
    }

    pub fn all_checkable_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }

    fn push_margin(&mut self, name: &str, margin: f64, witness: impl FnOnce() -> String) {
        let verdict = if margin > 0.0 { Verdict::Pass } else { Verdict::Fail };
        let w = if verdict == Verdict::Fail { Some(witness()) } else { None };
        self.entries.push(Entry { name: name.into(), verdict, margin: Some(margin), witness: w, note: None });
    }

    fn push_error(&mut self, name: &str, err: &Error) {
        self.entries.push(Entry {
            name: name.into(),
            verdict: Verdict::Fail,
            margin: None,
            witness: Some(err.to_string()),
            note: None,
        });
    }

    fn push_not_checkable(&mut self, name: &str, note: String) {
        self.entries.push(Entry { name: name.into(), verdict: Verdict::NotCheckable, margin: None, witness: None, note: Some(note) })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HypothesisOptions {
    /// Lattice points per component for the cooperativity sampling.
    pub lattice: usize,
    /// Run the long homogeneous simulation used as evidence for (H5).
    pub h5_evidence: bool,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        HypothesisOptions { lattice: 5, h5_evidence: true }
    }
}

fn lattice_points(m: usize, per_dim: usize) -> Vec<Vec<f64>> {
    // At most 5⁴ samples in total.
    let mut k = per_dim.max(2);
    while k.pow(m as u32) > 625 && k > 2 {
        k -= 1;
    }
    let total = k.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let c = idx % k;
                    idx /= k;
                    c as f64 / (k - 1) as f64
                })
                .collect()
        })
        .collect()
}

pub fn check_hypotheses(model: &ReactionModel, opts: HypothesisOptions) -> HypothesisReport {
    let mut rep = HypothesisReport::default();
    let m = model.m();
    let n = model.n();

    // (H1): lower couplings nonnegative with a positive entry in every row i ≥ 2.
    let mut h1 = f64::INFINITY;
    let mut h1w = String::new();
    for i in 1..m {
        for j in 0..n {
            let best = (0..i).map(|k| model.coupling(i, k, j)).fold(f64::NEG_INFINITY, f64::max);
            if best < h1 {
                h1 = best;
                h1w = format!("row {} node {j}", i + 1);
            }
        }
    }
    let mut h1z = f64::INFINITY;
    for i in 1..m {
        for j in 0..n {
            h1z = h1z.min(-model.zeta(i).values[j]);
        }
    }
    rep.push_margin("H1", h1.min(h1z), || format!("{h1w}; min -zeta_i = {h1z:.3e}"));

    // (H2): F(x, 𝟏) = 0.
    let ones = vec![1.0; m];
    let (mut f1, mut f1w) = (0.0f64, String::new());
    for j in 0..n {
        for (i, v) in model.evaluate_f(j, &ones).iter().enumerate() {
            if v.abs() > f1 {
                f1 = v.abs();
                f1w = format!("f_{} = {v:.3e} at node {j}", i + 1);
            }
        }
    }
    rep.push_margin("H2", 1e-10 - f1, || f1w.clone());

    // (H3): cooperativity on a lattice of [0,1]^m.
    let (mut h3, mut h3w) = (f64::INFINITY, String::new());
    for u in lattice_points(m, opts.lattice) {
        for j in 0..n {
            let jac = model.evaluate_jacobian(j, &u);
            for i in 0..m {
                for k in 0..m {
                    if i != k && jac[i][k] < h3 {
                        h3 = jac[i][k];
                        h3w = format!("df_{}/du_{} = {:.6e} at node {j}, u = {u:?}", i + 1, k + 1, jac[i][k]);
                    }
                }
            }
        }
    }
    let entry_h3 = Entry {
        name: "H3".into(),
        verdict: if h3 >= 0.0 { Verdict::Pass } else { Verdict::Fail },
        margin: Some(h3),
        witness: if h3 >= 0.0 { None } else { Some(h3w) },
        note: None,
    };
    rep.entries.push(entry_h3);

    let disp = Dispersion::new(model);
    // (H4)
    match disp.kappa(0, 0.0) {
        Ok(k0) => rep.push_margin("H4", k0, || format!("kappa_1(0) = {k0:.6e}")),
        Err(e) => rep.push_error("H4", &e),
    }

    // (H5): asymptotic statement; heuristic evidence from a long homogeneous run.
    let note = if opts.h5_evidence {
        match crate::sim::homogeneous_long_run(model, 0.05, 200.0) {
            Ok(dist) => format!("cell run from 0.05·1 to t = 200: sup |u - 1| = {dist:.3e}"),
            Err(e) => format!("cell run failed: {e}"),
        }
    } else {
        "no simulation requested".into()
    };
    rep.push_not_checkable("H5", note);

    // (H6) and (H7) rely on the speed.
    match disp.critical_speed() {
        Ok((c0, l0)) => {
            let mut gap = f64::INFINITY;
            let mut gw = String::new();
            let samples: Vec<f64> = (0..=20).map(|k| l0 * k as f64 / 20.0).collect();
            for &lam in &samples {
                let k1 = disp.kappa(0, lam);
                for i in 1..m {
                    let ki = disp.kappa(i, lam);
                    match (&k1, &ki) {
                        (Ok(a), Ok(b)) => {
                            if a - b < gap {
                                gap = a - b;
                                gw = format!("kappa_1 - kappa_{} = {:.6e} at lambda = {lam:.6}", i + 1, a - b);
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => {
                            gap = f64::NEG_INFINITY;
                            gw = e.to_string();
                        }
                    }
                }
            }
            rep.push_margin("H6", gap, || gw.clone());

            match disp.eigenfunction_cascade(l0) {
                Ok(phi) => {
                    let pmax = phi.components.iter().map(|c| c.max()).fold(0.0, f64::max);
                    let (mut h7, mut h7w) = (f64::INFINITY, String::new());
                    let zero = vec![0.0; m];
                    for k in 1..=40 {
                        let amp = k as f64 / 40.0 / pmax;
                        for j in 0..n {
                            let w: Vec<f64> = phi.components.iter().map(|c| amp * c.values[j]).collect();
                            for i in 0..m {
                                let mar = model.h[i].eval(j, &zero) - model.h[i].eval(j, &w);
                                if mar < h7 {
                                    h7 = mar;
                                    h7w = format!("h_{} rises by {:.3e} at node {j}, |w| = {:.3}", i + 1, -mar, amp * pmax);
                                }
                            }
                        }
                    }
                    let pass = h7 >= -1e-12;
                    rep.entries.push(Entry {
                        name: "H7".into(),
                        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                        margin: Some(h7),
                        witness: if pass { None } else { Some(h7w) },
                        note: Some(format!("sampled along w at c = c_plus0 = {c0:.10}")),
                    });
                }
                Err(e) => rep.push_error("H7", &e),
            }
        }
        Err(e) => {
            rep.push_error("H6", &e);
            rep.push_error("H7", &e);
        }
    }

    // (H8)
    match model.coupled_operator(State::One).and_then(|op| principal_eig_block(&op, COUPLED_TOL)) {
        Ok(p) => {
            let mu = p.value;
            rep.push_margin("H8", -mu, || format!("mu^- = {mu:.6e}"));
            if let Some(e) = rep.entries.last_mut() {
                e.note = Some(format!("mu^- = {mu:.10}, irreducible = {}", p.irreducible));
            }
        }
        Err(e) => rep.push_error("H8", &e),
    }
    rep
}

#[derive(Debug, Clone)]
pub struct CompetitionAnalysis {
    pub steady: SteadyStates,
    pub model: ReactionModel,
    pub report: HypothesisReport,
}

/// Speeds `(c⁻, c⁺)` from the boundary state `ν = (0, 1)`.
pub fn boundary_speeds_a6(spec: &CompetitionSpec, ss: &SteadyStates, model: &ReactionModel) -> Result<(f64, f64)> {
    let s = star_coefficients(spec, ss);
    let c_minus = crate::dispersion::min_speed(|lam| {
        Ok(principal_eig_scalar(&model.operator(0, s.a11.clone(), lam)?, SCALAR_TOL)?.value)
    })?
    .0;
    let c_plus = crate::dispersion::min_speed(|lam| {
        Ok(principal_eig_scalar(&model.operator(1, s.a22.clone(), -lam)?, SCALAR_TOL)?.value)
    })?
    .0;
    Ok((c_minus, c_plus))
}

pub fn check_competition_assumptions(spec: &CompetitionSpec, heuristic_a2: bool) -> Result<CompetitionAnalysis> {
    spec.validate()?;
    let mut rep = HypothesisReport::default();
    let n = spec.grid.n;
    let l1 = spec.lambda0(0, spec.b[0].clone())?;
    let l2 = spec.lambda0(1, spec.b[1].clone())?;
    if !(l1 > 0.0 && l2 > 0.0) {
        rep.push_margin("A1", l1.min(l2), || format!("lambda_0 = ({l1:.6e}, {l2:.6e})"));
        return Err(Error::InvalidParameter(format!("(A1) fails: lambda_0 = ({l1:.6e}, {l2:.6e})")));
    }
    let ss = competition_steady_states(spec, 1e-11)?;
    let inv = spec.b[0].zip_with(&spec.a12.zip_with(&ss.u2, |a, u| a * u), |b, x| b - x);
    let l3 = spec.lambda0(0, inv)?;
    rep.push_margin("A1", l1.min(l2).min(l3), || format!("lambda_0 values ({l1:.6e}, {l2:.6e}, {l3:.6e})"));

    let model = competition_to_cooperative(spec, &ss)?;

    let note = if heuristic_a2 {
        match crate::sim::competition_cell_sweep(spec, &ss) {
            Ok(s) => s,
            Err(e) => format!("sweep failed: {e}"),
        }
    } else {
        "no sweep requested".into()
    };
    rep.push_not_checkable("A2", note);

    let s = star_coefficients(spec, &ss);
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    let (mut w1, mut w2) = (0usize, 0usize);
    for j in 0..n {
        let a = s.a11.values[j] - s.a12.values[j];
        let b = s.a22.values[j] - s.a21.values[j];
        if a < m1 {
            m1 = a;
            w1 = j;
        }
        if b < m2 {
            m2 = b;
            w2 = j;
        }
    }
    rep.push_margin("A3.1", m1, || format!("a11 u1* - a12 u2* = {m1:.6e} at node {w1}"));
    rep.push_margin("A3.2", m2, || format!("a22 u2* - a21 u1* = {m2:.6e} at node {w2}"));

    let disp = Dispersion::new(&model);
    match disp.critical_speed() {
        Ok((c0, l0)) => {
            let k1 = disp.kappa(0, l0)?;
            let k2 = principal_eig_scalar(&model.operator(1, s.a22.map(|v| -v), l0)?, SCALAR_TOL)?.value;
            rep.push_margin("A4", k1 - k2, || format!("kappa_1 - kappa_2 = {:.6e} at lambda_plus0", k1 - k2));

            let mut a5 = f64::INFINITY;
            let mut a5w = String::new();
            for fac in [1.0, 1.25, 1.5, 2.0] {
                let c = fac * c0;
                match disp.lambda_c(c).and_then(|lc| disp.eigenfunction_cascade(lc)) {
                    Ok(phi) => {
                        for j in 0..n {
                            let ratio = ss.u1.values[j] * phi.components[0].values[j]
                                / (ss.u2.values[j] * phi.components[1].values[j]);
                            let bound = (spec.a12.values[j] / spec.a11.values[j]).max(spec.a22.values[j] / spec.a21.values[j]);
                            if ratio - bound < a5 {
                                a5 = ratio - bound;
                                a5w = format!("ratio {ratio:.6e} vs bound {bound:.6e} at node {j}, c = {c:.6}");
                            }
                        }
                    }
                    Err(e) => {
                        a5 = f64::NEG_INFINITY;
                        a5w = e.to_string();
                    }
                }
            }
            rep.push_margin("A5", a5, || a5w.clone());
            if let Some(e) = rep.entries.last_mut() {
                e.note = Some(format!("min over c in {{1, 1.25, 1.5, 2}}·c_plus0; {a5w}"));
            }
        }
        Err(e) => {
            rep.push_error("A4", &e);
            rep.push_error("A5", &e);
        }
    }
    match boundary_speeds_a6(spec, &ss, &model) {
        Ok((cm, cp)) => {
            rep.push_margin("A6", cm + cp, || format!("c^- = {cm:.6e}, c^+ = {cp:.6e}"));
            if let Some(e) = rep.entries.last_mut() {
                e.note = Some(format!("c^- = {cm:.10}, c^+ = {cp:.10}"));
            }
        }
        Err(e) => rep.push_error("A6", &e),
    }
    Ok(CompetitionAnalysis { steady: ss, model, report: rep })
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Const(f64),
    Cosine(CosineSpec),
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSpec {
    pub mean: f64,
    pub amp: f64,
    #[serde(default = "one")]
    pub harmonics: u32,
}

fn one() -> u32 {
    1
}

impl FieldSpec {
    /// `mean + amp cos(2π k x / L)` for the cosine form.
    pub fn build(&self, grid: CellGrid) -> Result<PeriodicField> {
        match self {
            FieldSpec::Const(v) => Ok(cst(grid, *v)),
            FieldSpec::Cosine(c) => {
                let l = grid.l;
                Ok(PeriodicField::from_fn(grid, |x| c.mean + c.amp * (2.0 * PI * c.harmonics as f64 * x / l).cos()))
            }
            FieldSpec::Csv(path) => {
                let (xs, ys) = read_xy_csv(path)?;
                PeriodicField::from_samples(grid, &xs, &ys)
            }
        }
    }
}

fn read_xy_csv(path: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Schema(format!("cannot read field csv {path}: {e}")))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        if parts.len() < 2 {
            return Err(Error::Schema(format!("{path}:{}: expected two columns", ln + 1)));
        }
        match (parts[0].parse::<f64>(), parts[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            // A non-numeric first row is a header.
            _ if xs.is_empty() => continue,
            _ => return Err(Error::Schema(format!("{path}:{}: non-numeric value", ln + 1))),
        }
    }
    if xs.is_empty() {
        return Err(Error::Schema(format!("{path}: no samples")));
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadTermSpec {
    pub k: usize,
    pub l: usize,
    pub coef: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySpec {
    pub c0: FieldSpec,
    pub lin: Vec<FieldSpec>,
    #[serde(default)]
    pub quad: Vec<QuadTermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub i: usize,
    pub j: usize,
    pub value: FieldSpec,
}

/// User model: indices in `couplings` and `quad` terms are 1-based as in the notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModelSpec {
    pub d: Vec<FieldSpec>,
    pub q: Vec<FieldSpec>,
    pub couplings: Vec<CouplingSpec>,
    pub h: Vec<PolySpec>,
}

impl UserModelSpec {
    pub fn build(&self, grid: CellGrid, e: Direction) -> Result<ReactionModel> {
        let m = self.h.len();
        let bad = |s: String| Error::Schema(s);
        if self.d.len() != m || self.q.len() != m {
            return Err(bad(format!("model.user: d and q need {m} entries")));
        }
        let mut a = vec![vec![None; m]; m];
        for c in &self.couplings {
            if c.j == 0 || c.i <= c.j || c.i > m {
                return Err(bad(format!("model.user.couplings: need 1 <= j < i <= {m}, got ({}, {})", c.i, c.j)));
            }
            a[c.i - 1][c.j - 1] = Some(c.value.build(grid)?);
        }
        let mut h = Vec::with_capacity(m);
        for (i, p) in self.h.iter().enumerate() {
            if p.lin.len() != m {
                return Err(bad(format!("model.user.h[{i}].lin: need {m} entries")));
            }
            let mut quad = Vec::new();
            for t in &p.quad {
                if t.k == 0 || t.l == 0 || t.k > m || t.l > m {
                    return Err(bad(format!("model.user.h[{i}].quad: index out of range")));
                }
                quad.push(QuadTerm { k: t.k - 1, l: t.l - 1, coef: t.coef.build(grid)? });
            }
            h.push(QuadPoly {
                c0: p.c0.build(grid)?,
                lin: p.lin.iter().map(|f| f.build(grid)).collect::<Result<_>>()?,
                quad,
            });
        }
        let model = ReactionModel {
            name: "user".into(),
            grid,
            e,
            d: self.d.iter().map(|f| f.build(grid)).collect::<Result<_>>()?,
            q: self.q.iter().map(|f| f.build(grid)).collect::<Result<_>>()?,
            a,
            h,
        };
        model.validate().map_err(|e| Error::Schema(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitionConfig {
    pub d: [FieldSpec; 2],
    pub drift: [FieldSpec; 2],
    pub b: [FieldSpec; 2],
    pub a11: FieldSpec,
    pub a12: FieldSpec,
    pub a21: FieldSpec,
    pub a22: FieldSpec,
    #[serde(default = "floor")]
    pub d0: f64,
    #[serde(default = "floor")]
    pub a0: f64,
}

fn floor() -> f64 {
    1e-3
}

impl CompetitionConfig {
    pub fn constant(b: f64, a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        let c = FieldSpec::Const;
        CompetitionConfig {
            d: [c(1.0), c(1.0)],
            drift: [c(0.0), c(0.0)],
            b: [c(b), c(b)],
            a11: c(a11),
            a12: c(a12),
            a21: c(a21),
            a22: c(a22),
            d0: floor(),
            a0: floor(),
        }
    }

    pub fn build(&self, grid: CellGrid, e: Direction) -> Result<CompetitionSpec> {
        let spec = CompetitionSpec {
            grid,
            e,
            d: [self.d[0].build(grid)?, self.d[1].build(grid)?],
            drift: [self.drift[0].build(grid)?, self.drift[1].build(grid)?],
            b: [self.b[0].build(grid)?, self.b[1].build(grid)?],
            a11: self.a11.build(grid)?,
            a12: self.a12.build(grid)?,
            a21: self.a21.build(grid)?,
            a22: self.a22.build(grid)?,
            d0: self.d0,
            a0: self.a0,
        };
        spec.validate().map_err(|e| Error::Schema(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_cell_grid;

    fn g() -> CellGrid {
        make_cell_grid(2.0 * PI, 32).unwrap()
    }

    #[test]
    fn benchmark_structure() {
        let m = constant2(g());
        assert_eq!(m.zeta(0).values[0], 1.0);
        assert_eq!(m.zeta(1).values[0], -1.0);
        assert!(m.evaluate_f(3, &[0.0, 0.0]).iter().all(|v| *v == 0.0));
        assert!(m.evaluate_f(3, &[1.0, 1.0]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn structural_identity() {
        let m = periodic2(g(), 0.4);
        for (j, u) in [(0usize, [0.3, 0.8]), (7, [0.9, 0.1]), (20, [0.5, 0.5])] {
            let f = m.evaluate_f(j, &u);
            assert_eq!(f[0] - u[0] * m.h[0].eval(j, &u), 0.0);
            assert_eq!(f[1] - 0.3 * u[0] - u[1] * m.h[1].eval(j, &u), 0.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = constant2(g());
        let eps = 1e-6;
        for u in [[0.2, 0.7], [0.9, 0.05], [0.5, 0.5], [1.1, -0.1]] {
            let jac = m.evaluate_jacobian(0, &u);
            for k in 0..2 {
                let mut up = u;
                let mut um = u;
                up[k] += eps;
                um[k] -= eps;
                let fp = m.evaluate_f(0, &up);
                let fm = m.evaluate_f(0, &um);
                for i in 0..2 {
                    let fd = (fp[i] - fm[i]) / (2.0 * eps);
                    assert!((fd - jac[i][k]).abs() < 1e-6);
                }
            }
        }
    }

    fn linear_pair(lower: f64) -> ReactionModel {
        let gr = g();
        let mut m = constant2(gr);
        m.h[0] = QuadPoly { c0: cst(gr, 1.0), lin: vec![cst(gr, -1.0), cst(gr, 0.0)], quad: vec![] };
        m.h[1] = QuadPoly { c0: cst(gr, -1.0), lin: vec![cst(gr, -0.3), cst(gr, 1.0)], quad: vec![] };
        m.a[1][0] = Some(cst(gr, lower));
        m
    }

    #[test]
    fn cooperativity_borderline_and_violation() {
        let opts = HypothesisOptions { lattice: 5, h5_evidence: false };
        // With a₂₁ = 0.3 the u₁-dependence of h₂ is exactly compensated at u₂ = 1.
        let rep = check_hypotheses(&linear_pair(0.3), opts);
        let e = rep.get("H3").unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        assert!(e.margin.unwrap().abs() < 1e-15);
        // A weaker lower coupling leaves ∂f₂/∂u₁ = 0.1 - 0.3u₂ < 0 near u₂ = 1.
        let rep = check_hypotheses(&linear_pair(0.1), opts);
        let e = rep.get("H3").unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert!(e.witness.as_ref().unwrap().contains("df_2/du_1"));
        assert!((e.margin.unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn negative_zeta_fails_h4() {
        let gr = g();
        let mut m = constant2(gr);
        m.h[0].c0 = cst(gr, -0.1);
        let rep = check_hypotheses(&m, HypothesisOptions { lattice: 3, h5_evidence: false });
        let e = rep.get("H4").unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        assert!((e.margin.unwrap() + 0.1).abs() < 1e-9);
    }

    #[test]
    fn benchmark_passes_checkable_hypotheses() {
        let rep = check_hypotheses(&constant2(g()), HypothesisOptions { lattice: 5, h5_evidence: false });
        for name in ["H1", "H2", "H3", "H4", "H6", "H7", "H8"] {
            assert_eq!(rep.verdict(name), Some(Verdict::Pass), "{name}: {:?}", rep.get(name));
        }
        assert_eq!(rep.verdict("H5"), Some(Verdict::NotCheckable));
    }

    #[test]
    fn logistic_steady_states() {
        let gr = g();
        let s = CompetitionSpec::constant(gr, 1.0, 1.0, 0.3, 0.3, 1.0);
        let ss = competition_steady_states(&s, 1e-10).unwrap();
        assert!(ss.u1.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let mut s2 = s.clone();
        s2.b[0] = cst(gr, 2.0);
        s2.a11 = cst(gr, 0.5);
        let ss2 = competition_steady_states(&s2, 1e-10).unwrap();
        assert!(ss2.u1.values.iter().all(|v| (v - 4.0).abs() < 1e-8));
    }

    #[test]
    fn periodic_logistic_residual() {
        let gr = make_cell_grid(1.0, 64).unwrap();
        let b = PeriodicField::from_fn(gr, |x| 1.0 + 0.3 * (2.0 * PI * x).cos());
        let one = cst(gr, 1.0);
        let zero = cst(gr, 0.0);
        let tol = 1e-10;
        let u = scalar_logistic_steady_state(gr, &one, &zero, &b, &one, Direction::Plus, tol).unwrap();
        let lap = crate::grid::laplacian_periodic(&u.values, gr.h());
        let res = (0..64).map(|j| (lap[j] + u.values[j] * (b.values[j] - u.values[j])).abs()).fold(0.0, f64::max);
        assert!(res <= 10.0 * tol, "{res}");
    }

    #[test]
    fn transform_constant_spec() {
        let gr = g();
        let s = CompetitionSpec::constant(gr, 1.0, 1.0, 0.3, 0.3, 1.0);
        let ss = competition_steady_states(&s, 1e-11).unwrap();
        let m = competition_to_cooperative(&s, &ss).unwrap();
        assert!((m.zeta(0).values[0] - 0.7).abs() < 1e-9);
        assert!(m.q[0].max_abs() < 1e-9);
        assert!(m.evaluate_f(0, &[1.0, 1.0]).iter().all(|v| v.abs() < 1e-10));
        for u in [[0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [0.2, 0.9]] {
            let c = inverse_transform(&ss, 0, u);
            let back = forward_transform(&ss, 0, c);
            assert!((back[0] - u[0]).abs() < 1e-12 && (back[1] - u[1]).abs() < 1e-12);
        }
        assert_eq!(inverse_transform(&ss, 0, [0.0, 0.0])[0], 0.0);
        assert!((inverse_transform(&ss, 0, [0.5, 0.5])[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lattice_is_capped() {
        assert_eq!(lattice_points(2, 5).len(), 25);
        assert_eq!(lattice_points(4, 5).len(), 625);
        assert!(lattice_points(6, 5).len() <= 625);
    }

    #[test]
    fn user_spec_round_trip() {
        let json = r#"{
            "d": [{"const": 1.0}, {"cosine": {"mean": 1.0, "amp": 0.2}}],
            "q": [{"const": 0.0}, {"const": 0.0}],
            "couplings": [{"i": 2, "j": 1, "value": {"const": 0.3}}],
            "h": [
                {"c0": {"const": 1.0}, "lin": [{"const": -1.2}, {"const": 0.2}]},
                {"c0": {"const": -1.0}, "lin": [{"const": 0.0}, {"const": 0.7}]}
            ]
        }"#;
        let spec: UserModelSpec = serde_json::from_str(json).unwrap();
        let m = spec.build(g(), Direction::Plus).unwrap();
        assert_eq!(m.m(), 2);
        assert!((m.d[1].values[0] - 1.2).abs() < 1e-15);
        assert!(serde_json::from_str::<UserModelSpec>(r#"{"d": []}"#).is_err());
    }
}
