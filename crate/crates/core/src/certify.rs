//! Explicit sub- and supersolutions with their prescribed parameters, and a
//! finite-difference check of the defining inequalities on sampled regions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Dispersion, GAP_MIN};
use crate::eigen::{principal_eig_block, COUPLED_TOL};
use crate::error::{Error, Result};
use crate::fronts::{front_position, FrontProfile};
use crate::grid::{gradient_periodic, PeriodicField};
use crate::models::{check_hypotheses, HypothesisOptions, ReactionModel, State, Verdict};
use crate::sim::Trajectory;

pub const C_ALLOW: f64 = 10.0;
pub const Z_SCAN_MAX: f64 = 40.0;
pub const CHI_WIDTH: f64 = 4.0;
/// Length of the sampled tail below `s₀` for the exponential candidates.
pub const TAIL_SPAN: f64 = 40.0;
const MAX_HALVINGS: usize = 40;
const MAX_WITNESSES: usize = 8;
const SIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    SubSupercritical,
    SubCritical,
    SuperLinearized,
    SuperLinearizedCritical,
    SandwichLower,
    SandwichUpper,
}

impl Kind {
    pub fn is_sub(self) -> bool {
        matches!(self, Kind::SubSupercritical | Kind::SubCritical | Kind::SandwichLower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// Sampled set `{s_lo ≤ ct - x·e ≤ s_hi, t_lo ≤ t ≤ t_hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Region {
    pub s_lo: f64,
    pub s_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Keep only points where every component is at most 1.
    pub below_one: bool,
}

/// `coef_i e^{rate·s} (|s| if abs_s) field_i(x)`.
#[derive(Debug, Clone)]
pub struct ExpTerm {
    pub coef: Vec<f64>,
    pub rate: f64,
    pub abs_s: bool,
    pub field: Vec<PeriodicField>,
}

impl ExpTerm {
    fn eval(&self, i: usize, j: usize, s: f64) -> f64 {
        let w = if self.abs_s { s.abs() } else { 1.0 };
        self.coef[i] * (self.rate * s).exp() * w * self.field[i].values[j]
    }

    fn ds(&self, i: usize, j: usize, s: f64) -> f64 {
        let (w, dw) = if self.abs_s { (s.abs(), s.signum()) } else { (1.0, 0.0) };
        self.coef[i] * (self.rate * s).exp() * (self.rate * w + dw) * self.field[i].values[j]
    }
}

/// Quintic smoothstep: 1 below `s_lo`, 0 above `s_hi`, nonincreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub s_lo: f64,
    pub s_hi: f64,
}

impl Cutoff {
    pub fn new(s_hi: f64) -> Self {
        Cutoff { s_lo: s_hi - CHI_WIDTH, s_hi }
    }

    fn tau(&self, s: f64) -> Option<f64> {
        let w = self.s_hi - self.s_lo;
        let t = (s - self.s_lo) / w;
        (t > 0.0 && t < 1.0).then_some(t)
    }

    pub fn value(&self, s: f64) -> f64 {
        match self.tau(s) {
            Some(t) => 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
            None if s <= self.s_lo => 1.0,
            None => 0.0,
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        let w = self.s_hi - self.s_lo;
        self.tau(s).map_or(0.0, |t| -30.0 * t * t * (1.0 - t) * (1.0 - t) / w)
    }

    pub fn d2(&self, s: f64) -> f64 {
        let w = self.s_hi - self.s_lo;
        self.tau(s).map_or(0.0, |t| -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w))
    }

    /// Sampled `max |χ'| + |χ''|`.
    pub fn derivative_bound(&self) -> f64 {
        let k = 4000;
        (0..=k)
            .map(|b| {
                let s = self.s_lo + (self.s_hi - self.s_lo) * b as f64 / k as f64;
                self.d1(s).abs() + self.d2(s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `ξ(x,s) = χ(s) Σ tail terms + (1 - χ(s)) Ψ(x)`.
#[derive(Debug, Clone)]
pub struct Correction {
    pub chi: Cutoff,
    pub tail: Vec<ExpTerm>,
    pub psi: Vec<PeriodicField>,
}

impl Correction {
    fn tail_value(&self, i: usize, j: usize, s: f64) -> f64 {
        self.tail.iter().map(|t| t.eval(i, j, s)).sum()
    }

    pub fn eval(&self, i: usize, j: usize, s: f64) -> f64 {
        let x = self.chi.value(s);
        let psi = self.psi[i].values[j];
        if x == 0.0 {
            return psi;
        }
        x * self.tail_value(i, j, s) + (1.0 - x) * psi
    }

    pub fn ds(&self, i: usize, j: usize, s: f64) -> f64 {
        let x = self.chi.value(s);
        if x == 0.0 {
            return 0.0;
        }
        let tail_ds: f64 = self.tail.iter().map(|t| t.ds(i, j, s)).sum();
        self.chi.d1(s) * (self.tail_value(i, j, s) - self.psi[i].values[j]) + x * tail_ds
    }
}

#[derive(Debug, Clone)]
struct Sandwich {
    profile: FrontProfile,
    sign: f64,
    s0: f64,
    sigma: f64,
    beta: f64,
    delta: f64,
    z0: f64,
    xi: Correction,
}

impl Sandwich {
    fn shift(&self, t: f64) -> f64 {
        self.s0 + self.sign * self.sigma * (1.0 - (-self.beta * t).exp())
    }

    fn u_s(&self, i: usize, j: usize, s: f64) -> f64 {
        let d = self.profile.ds;
        (self.profile.value(i, j, s + d) - self.profile.value(i, j, s - d)) / (2.0 * d)
    }
}

#[derive(Debug, Clone)]
enum Form {
    Exp(Vec<ExpTerm>),
    Sandwich(Box<Sandwich>),
}

/// Pointwise side conditions of the exponential candidates, checked on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Condition {
    /// `sup_x U(x, s) ≤ 0`.
    NonPositiveAt { s: f64 },
    /// `U < 1` on `[s_lo, s_hi]`.
    BelowOne { s_lo: f64, s_hi: f64 },
    /// `U > 0` on `[s_lo, s_hi]`.
    Positive { s_lo: f64, s_hi: f64 },
    /// `U` nondecreasing in `s` on `[s_lo, s_hi]`.
    Nondecreasing { s_lo: f64, s_hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideCheck {
    pub name: String,
    pub margin: f64,
    pub pass: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CandidateSolution {
    pub kind: Kind,
    pub c: f64,
    pub e: f64,
    pub h: f64,
    pub n: usize,
    pub m: usize,
    pub params: BTreeMap<String, f64>,
    pub region: Region,
    pub conditions: Vec<Condition>,
    /// Conditions evaluated once at build time.
    pub fixed_checks: Vec<SideCheck>,
    form: Form,
}

impl CandidateSolution {
    pub fn s_of(&self, t: f64, k: i64) -> f64 {
        self.c * t - self.e * k as f64 * self.h
    }

    fn node(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// `U(x_j, s)` for the exponential forms.
    pub fn profile_at(&self, j: usize, s: f64) -> Option<Vec<f64>> {
        match &self.form {
            Form::Exp(terms) => Some((0..self.m).map(|i| terms.iter().map(|t| t.eval(i, j, s)).sum()).collect()),
            Form::Sandwich(_) => None,
        }
    }

    /// Value at time `t` and global node `x = k h`.
    pub fn value(&self, t: f64, k: i64) -> Vec<f64> {
        let j = self.node(k);
        let s = self.s_of(t, k);
        match &self.form {
            Form::Exp(terms) => (0..self.m).map(|i| terms.iter().map(|tm| tm.eval(i, j, s)).sum()).collect(),
            Form::Sandwich(w) => {
                let sh = s + w.shift(t);
                let damp = w.delta * (-w.beta * t).exp();
                (0..self.m).map(|i| w.profile.value(i, j, sh) + w.sign * damp * w.xi.eval(i, j, sh + w.z0)).collect()
            }
        }
    }

    /// Chain-rule time derivative for profile-backed candidates (`∂ₜ = c ∂_s` on the profile).
    pub fn time_derivative(&self, t: f64, k: i64) -> Option<Vec<f64>> {
        let Form::Sandwich(w) = &self.form else { return None };
        let j = self.node(k);
        let sh = self.s_of(t, k) + w.shift(t);
        let ebt = (-w.beta * t).exp();
        let rate = self.c + w.sign * w.sigma * w.beta * ebt;
        Some(
            (0..self.m)
                .map(|i| {
                    let xi = w.xi.eval(i, j, sh + w.z0);
                    let xs = w.xi.ds(i, j, sh + w.z0);
                    w.u_s(i, j, sh) * rate + w.sign * w.delta * ebt * (xs * rate - w.beta * xi)
                })
                .collect(),
        )
    }

    /// Residual of the bare profile `U(x, ct - x·e + shift(t))` with the shift frozen.
    pub fn defect(&self, model: &ReactionModel, t: f64, k: i64) -> Option<Vec<f64>> {
        let Form::Sandwich(w) = &self.form else { return None };
        let off = w.shift(t);
        let at = |kk: i64| -> Vec<f64> {
            let j = self.node(kk);
            let s = self.s_of(t, kk) + off;
            (0..self.m).map(|i| w.profile.value(i, j, s)).collect()
        };
        let j = self.node(k);
        let s = self.s_of(t, k) + off;
        let ut: Vec<f64> = (0..self.m).map(|i| self.c * w.u_s(i, j, s)).collect();
        Some(operator_residual(model, j, self.h, &at(k - 1), &at(k), &at(k + 1), &ut))
    }

    /// Positive per-component scale the residuals are divided by.
    pub fn envelope(&self, t: f64, k: i64) -> Vec<f64> {
        let j = self.node(k);
        let s = self.s_of(t, k);
        match &self.form {
            Form::Exp(terms) => (0..self.m).map(|i| terms[0].eval(i, j, s).abs().max(1e-300)).collect(),
            Form::Sandwich(w) => {
                let damp = w.delta * (-w.beta * t).exp();
                (0..self.m).map(|i| (damp * w.xi.psi[i].values[j]).max(1e-300)).collect()
            }
        }
    }

    /// Copy with exponential term `idx` multiplied by `factor`.
    pub fn with_scaled_term(&self, idx: usize, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.form {
            Form::Exp(terms) if idx < terms.len() => {
                for c in &mut terms[idx].coef {
                    *c *= factor;
                }
            }
            _ => return Err(Error::InvalidParameter(format!("no exponential term {idx} to scale"))),
        }
        out.params.insert(format!("term{idx}_factor"), factor);
        Ok(out)
    }

    /// Side conditions: the fixed ones plus the pointwise [`Condition`]s on one cell.
    pub fn side_checks(&self) -> Vec<SideCheck> {
        let mut out = self.fixed_checks.clone();
        for cond in &self.conditions {
            out.push(self.eval_condition(*cond));
        }
        out
    }

    fn s_samples(&self, lo: f64, hi: f64) -> Vec<f64> {
        let k = (((hi - lo) / self.h).ceil() as usize).max(1);
        (0..=k).map(|b| lo + (hi - lo) * b as f64 / k as f64).collect()
    }

    fn eval_condition(&self, cond: Condition) -> SideCheck {
        let mut worst = f64::INFINITY;
        let mut wit = String::new();
        let mut probe = |margin: f64, what: String| {
            if margin < worst {
                worst = margin;
                wit = what;
            }
        };
        let name;
        match cond {
            Condition::NonPositiveAt { s } => {
                name = format!("sup_x U(x, {s:.6}) <= 0");
                for j in 0..self.n {
                    if let Some(u) = self.profile_at(j, s) {
                        let scale = self.envelope_at(j, s);
                        for (i, v) in u.iter().enumerate() {
                            probe(-v / scale[i], format!("U_{} = {v:.6e} at node {j}", i + 1));
                        }
                    }
                }
            }
            Condition::BelowOne { s_lo, s_hi } => {
                name = format!("U < 1 on [{s_lo:.4}, {s_hi:.4}]");
                for s in self.s_samples(s_lo, s_hi) {
                    for j in 0..self.n {
                        for (i, v) in self.profile_at(j, s).unwrap_or_default().iter().enumerate() {
                            probe(1.0 - v, format!("U_{} = {v:.6e} at node {j}, s = {s:.4}", i + 1));
                        }
                    }
                }
            }
            Condition::Positive { s_lo, s_hi } => {
                name = format!("U > 0 on [{s_lo:.4}, {s_hi:.4}]");
                for s in self.s_samples(s_lo, s_hi) {
                    for j in 0..self.n {
                        let scale = self.envelope_at(j, s);
                        for (i, v) in self.profile_at(j, s).unwrap_or_default().iter().enumerate() {
                            probe(v / scale[i], format!("U_{} = {v:.6e} at node {j}, s = {s:.4}", i + 1));
                        }
                    }
                }
            }
            Condition::Nondecreasing { s_lo, s_hi } => {
                name = format!("U nondecreasing in s on [{s_lo:.4}, {s_hi:.4}]");
                let ss = self.s_samples(s_lo, s_hi);
                for w in ss.windows(2) {
                    for j in 0..self.n {
                        let a = self.profile_at(j, w[0]).unwrap_or_default();
                        let b = self.profile_at(j, w[1]).unwrap_or_default();
                        let scale = self.envelope_at(j, w[1]);
                        for i in 0..a.len() {
                            probe((b[i] - a[i]) / scale[i], format!("U_{} drops at node {j}, s = {:.4}", i + 1, w[0]));
                        }
                    }
                }
            }
        }
        let pass = worst >= -SIDE_TOL;
        SideCheck { name, margin: worst, pass, witness: (!pass).then_some(wit) }
    }

    fn envelope_at(&self, j: usize, s: f64) -> Vec<f64> {
        match &self.form {
            Form::Exp(terms) => (0..self.m).map(|i| terms[0].eval(i, j, s).abs().max(1e-300)).collect(),
            Form::Sandwich(_) => vec![1.0; self.m],
        }
    }
}

/// `∂ₜu - dΔ_h u - q∇_h u - f(x,u)` from three lattice values and `∂ₜu`.
fn operator_residual(model: &ReactionModel, j: usize, h: f64, um: &[f64], u0: &[f64], up: &[f64], ut: &[f64]) -> Vec<f64> {
    let f = model.evaluate_f(j, u0);
    (0..u0.len())
        .map(|i| {
            let lap = (up[i] - 2.0 * u0[i] + um[i]) / (h * h);
            let grad = (up[i] - um[i]) / (2.0 * h);
            ut[i] - model.d[i].values[j] * lap - model.q[i].values[j] * grad - f[i]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    /// Time levels in the region.
    pub nt: usize,
    /// Step of the central time difference (closed-form candidates).
    pub dt_fd: f64,
    pub c_allow: f64,
    /// Use every `stride`-th lattice node.
    pub stride: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { nt: 5, dt_fd: 1e-2, c_allow: C_ALLOW, stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub component: usize,
    pub t: f64,
    pub x: f64,
    pub s: f64,
    pub margin: f64,
    pub allowance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginRow {
    pub component: usize,
    pub s: f64,
    pub t: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertReport {
    pub kind: Kind,
    pub params: BTreeMap<String, f64>,
    pub region: Region,
    /// Minimum normalized margin per component (positive = inequality holds strictly).
    pub margins: Vec<f64>,
    /// Minimum of margin + pointwise allowance per component.
    pub slack: Vec<f64>,
    pub samples: Vec<usize>,
    pub allowance: f64,
    /// Largest normalized residual of the bare profile (profile-backed candidates).
    pub defect: Option<f64>,
    pub side_conditions: Vec<SideCheck>,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    #[serde(skip)]
    pub rows: Vec<MarginRow>,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Rows `component, s, t, margin`.
    pub fn margin_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| vec![r.component as f64, r.s, r.t, r.margin]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Evaluate the residual on the region lattice and compare signs against the allowance.
pub fn residual_sign_check(model: &ReactionModel, cand: &CandidateSolution, sampling: Sampling) -> Result<CertReport> {
    let r = cand.region;
    if !(r.s_hi > r.s_lo) || r.t_hi < r.t_lo || sampling.nt == 0 {
        return Err(Error::EmptyRegion(format!("s in [{}, {}], t in [{}, {}]", r.s_lo, r.s_hi, r.t_lo, r.t_hi)));
    }
    let h = cand.h;
    let ts: Vec<f64> = if sampling.nt == 1 {
        vec![r.t_lo]
    } else {
        (0..sampling.nt).map(|a| r.t_lo + (r.t_hi - r.t_lo) * a as f64 / (sampling.nt - 1) as f64).collect()
    };
    let mut points = Vec::new();
    for &t in &ts {
        let xa = cand.e * (cand.c * t - r.s_hi);
        let xb = cand.e * (cand.c * t - r.s_lo);
        let k0 = (xa.min(xb) / h).ceil() as i64;
        let k1 = (xa.max(xb) / h).floor() as i64;
        let mut k = k0;
        while k <= k1 {
            points.push((t, k));
            k += sampling.stride.max(1) as i64;
        }
    }
    let allow = sampling.c_allow * (h * h + sampling.dt_fd * sampling.dt_fd);
    let is_sub = cand.kind.is_sub();
    let dt = sampling.dt_fd;
    // (component, s, t, k, margin, local allowance, defect)
    let evals: Vec<Vec<(usize, f64, f64, i64, f64, f64, f64)>> = points
        .par_iter()
        .map(|&(t, k)| {
            let u0 = cand.value(t, k);
            if r.below_one && u0.iter().any(|v| *v > 1.0) {
                return Vec::new();
            }
            let ut = cand.time_derivative(t, k).unwrap_or_else(|| {
                let a = cand.value(t + dt, k);
                let b = cand.value(t - dt, k);
                a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * dt)).collect()
            });
            let j = cand.node(k);
            let res = operator_residual(model, j, h, &cand.value(t, k - 1), &u0, &cand.value(t, k + 1), &ut);
            let env = cand.envelope(t, k);
            let defect = cand.defect(model, t, k);
            let s = cand.s_of(t, k);
            (0..cand.m)
                .map(|i| {
                    let signed = if is_sub { -res[i] } else { res[i] };
                    let d = defect.as_ref().map_or(0.0, |d| d[i].abs() / env[i]);
                    (i, s, t, k, signed / env[i], allow + d, d)
                })
                .collect()
        })
        .collect();
    let m = cand.m;
    let mut margins = vec![f64::INFINITY; m];
    let mut slack = vec![f64::INFINITY; m];
    let mut samples = vec![0usize; m];
    let mut defect_max: Option<f64> = None;
    let mut failing = Vec::new();
    let mut rows = Vec::new();
    for (i, s, t, k, mar, al, d) in evals.into_iter().flatten() {
        samples[i] += 1;
        margins[i] = margins[i].min(mar);
        slack[i] = slack[i].min(mar + al);
        if matches!(cand.form, Form::Sandwich(_)) {
            defect_max = Some(defect_max.unwrap_or(0.0).max(d));
        }
        if mar + al < 0.0 {
            failing.push(Witness { component: i + 1, t, x: k as f64 * h, s, margin: mar, allowance: al });
        }
        rows.push(MarginRow { component: i + 1, s, t, margin: mar });
    }
    if samples.iter().all(|&c| c == 0) {
        return Err(Error::EmptyRegion("no lattice point satisfies the region constraints".into()));
    }
    failing.sort_by(|a, b| (a.margin + a.allowance).total_cmp(&(b.margin + b.allowance)));
    failing.truncate(MAX_WITNESSES);
    let side = cand.side_checks();
    let pass = failing.is_empty() && side.iter().all(|c| c.pass);
    Ok(CertReport {
        kind: cand.kind,
        params: cand.params.clone(),
        region: r,
        margins,
        slack,
        samples,
        allowance: allow,
        defect: defect_max,
        side_conditions: side,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        witnesses: failing,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

fn check_deltas(d1: f64, d2: f64) -> Result<()> {
    if !(d2 > 0.0 && d2 <= d1) {
        return Err(Error::InvalidParameter(format!("need 0 < delta2 <= delta1, got {d1}, {d2}")));
    }
    Ok(())
}

/// Halve `eps` until `accept(eps)` reports `(σ, true)`.
fn shrink_eps(mut eps: f64, accept: impl Fn(f64) -> Result<(f64, bool)>) -> Result<(f64, f64, usize)> {
    let mut last = f64::NAN;
    for k in 0..MAX_HALVINGS {
        let (sig, ok) = accept(eps)?;
        if ok {
            return Ok((eps, sig, k));
        }
        last = sig;
        eps *= 0.5;
    }
    Err(Error::SigmaNonNegative(last))
}

/// `κ_j < κ₁ - GAP_MIN` for all `j ≥ 2` on sampled `[lo, hi]`.
fn gap_holds(disp: &Dispersion, lo: f64, hi: f64) -> Result<bool> {
    for b in 0..=10 {
        let lam = lo + (hi - lo) * b as f64 / 10.0;
        let k1 = disp.kappa(0, lam)?;
        for j in 1..disp.model.m() {
            if k1 - disp.kappa(j, lam)? < GAP_MIN {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn uniform(m: usize, v: f64) -> Vec<f64> {
    vec![v; m]
}

fn leading(m: usize, first: f64, rest: f64) -> Vec<f64> {
    (0..m).map(|i| if i == 0 { first } else { rest }).collect()
}

fn base_candidate(disp: &Dispersion, kind: Kind, c: f64, terms: Vec<ExpTerm>, region: Region) -> CandidateSolution {
    let model = disp.model;
    CandidateSolution {
        kind,
        c,
        e: model.e.sign(),
        h: model.grid.h(),
        n: model.n(),
        m: model.m(),
        params: BTreeMap::new(),
        region,
        conditions: Vec::new(),
        fixed_checks: Vec::new(),
        form: Form::Exp(terms),
    }
}

pub fn build_sub_supercritical(disp: &Dispersion, c: f64, delta1: f64, delta2: f64) -> Result<CandidateSolution> {
    sub_supercritical_at(disp, c, delta1, delta2, None)
}

/// Supercritical subsolution; `s0 = None` takes the largest admissible `s₀`.
pub fn sub_supercritical_at(
    disp: &Dispersion,
    c: f64,
    delta1: f64,
    delta2: f64,
    s0: Option<f64>,
) -> Result<CandidateSolution> {
    check_deltas(delta1, delta2)?;
    let model = disp.model;
    let m = model.m();
    if disp.is_critical(c)? {
        return Err(Error::InvalidParameter(format!("c = {c} is critical; use the critical subsolution")));
    }
    let lc = disp.lambda_c(c)?;
    let (eps, sig, halvings) = shrink_eps(disp.epsilon(c)?, |e| {
        let s = disp.kappa(0, lc + e)? - c * (lc + e);
        Ok((s, s < 0.0))
    })?;
    let pc = disp.eigenfunction_cascade(lc)?;
    let pe = disp.eigenfunction_cascade(lc + eps)?;
    let (big_c, small_c) = (pc.max(), pc.min());
    let (big_e, small_e) = (pe.max(), pe.min());
    let theta_e = big_e / small_e;
    let gamma0 = model.gamma0(m as f64 * theta_e);
    let denom = gamma0 * (1.0 + theta_e).powi(2) * (big_c + big_e) * (pc.sum_norm() + pe.sum_norm());
    let s_star = if denom > 0.0 { ((sig.abs() * small_e / denom).ln() / (lc - eps)).min(-1.0) } else { -1.0 };
    let s_amp = -(delta1 * big_c).ln() / lc;
    let s_n0 = (theta_e / delta1).ln() / eps;
    let admissible = s_star.min(s_amp).min(s_n0);
    let s0 = match s0 {
        None => admissible,
        Some(v) if v <= admissible => v,
        Some(v) => return Err(Error::InvalidParameter(format!("s0 = {v} exceeds the admissible {admissible:.6}"))),
    };
    let n0 = theta_e * (-eps * s0).exp();
    let terms = vec![
        ExpTerm { coef: leading(m, delta1, delta2), rate: lc, abs_s: false, field: pc.components.clone() },
        ExpTerm { coef: uniform(m, -n0 * delta1), rate: lc + eps, abs_s: false, field: pe.components.clone() },
    ];
    let region = Region { s_lo: s0 - TAIL_SPAN, s_hi: s0, t_lo: 0.0, t_hi: 2.0, below_one: false };
    let mut cand = base_candidate(disp, Kind::SubSupercritical, c, terms, region);
    for (k, v) in [
        ("c", c),
        ("lambda_c", lc),
        ("epsilon", eps),
        ("epsilon_halvings", halvings as f64),
        ("sigma_eps", sig),
        ("gamma0", gamma0),
        ("M_c", big_c),
        ("m_c", small_c),
        ("theta_c", big_c / small_c),
        ("M_eps", big_e),
        ("m_eps", small_e),
        ("theta_eps", theta_e),
        ("s_star", s_star),
        ("s0", s0),
        ("n0", n0),
        ("delta1", delta1),
        ("delta2", delta2),
    ] {
        cand.params.insert(k.into(), v);
    }
    cand.conditions = vec![Condition::NonPositiveAt { s: s0 }, Condition::BelowOne { s_lo: s0 - TAIL_SPAN, s_hi: s0 }];
    Ok(cand)
}

/// Critical-speed `ε*`: start at `λ*/4`, halve until `σ* < 0` and the (H6) gap holds on
/// `(λ* - 2ε*, λ* + 2ε*)`, plus `extra(σ*)`.
fn critical_epsilon(disp: &Dispersion, extra: impl Fn(f64) -> bool) -> Result<(f64, f64, usize)> {
    let (cs, ls) = disp.critical_speed()?;
    shrink_eps(ls / 4.0, |e| {
        let s = cs * (ls + e) - disp.kappa(0, ls + e)?;
        let ok = s < 0.0 && extra(s) && gap_holds(disp, ls - 2.0 * e, ls + 2.0 * e)?;
        Ok((s, ok))
    })
}

/// Largest `s ≤ start` with `g(s) ≥ 0` for `g` nonincreasing in `s`.
fn largest_admissible(start: f64, g: impl Fn(f64) -> f64) -> f64 {
    if g(start) >= 0.0 {
        return start;
    }
    let mut step = 1.0;
    let mut lo = start - step;
    while g(lo) < 0.0 {
        step *= 2.0;
        lo = start - step;
    }
    let mut hi = start;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn build_sub_critical(disp: &Dispersion, delta1: f64, delta2: f64) -> Result<CandidateSolution> {
    check_deltas(delta1, delta2)?;
    let model = disp.model;
    let m = model.m();
    let (cs, ls) = disp.critical_speed()?;
    let (eps, sig, halvings) = critical_epsilon(disp, |_| true)?;
    let phi = disp.eigenfunction_cascade(ls)?;
    let der = disp.eigenfunction_derivative(ls, None)?;
    let pe = disp.eigenfunction_cascade(ls + eps)?;
    let (big, small) = (phi.max(), phi.min());
    let big1 = der.max_abs();
    let (big_e, small_e) = (pe.max(), pe.min());
    let gamma0 = model.gamma0(4.0 / 3.0);

    // ŝ: a s + 2 ln|s| ≤ 0 for all s ≤ ŝ with a = (λ* - ε*)/2, and the logarithmic bound.
    let a = 0.5 * (ls - eps);
    let g = |s: f64| a * s + 2.0 * (-s).ln();
    let turn = -2.0 / a;
    let hat1 = if g(turn) <= 0.0 {
        0.0
    } else {
        let mut lo = 2.0 * turn;
        while g(lo) > 0.0 {
            lo *= 2.0;
        }
        let mut hi = turn;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };
    let denom = 36.0 * gamma0 * big * phi.sum_norm();
    let hat2 = if denom > 0.0 { 2.0 / (ls - eps) * (sig.abs() * small_e / denom).ln() } else { 0.0 };
    let s_hat = hat1.min(hat2).min(0.0);
    let s_star = [-1.0, -1.0 / ls, -big1 / small, s_hat].into_iter().fold(f64::INFINITY, f64::min);
    let s_amp = largest_admissible(s_star, |s| -ls * s - (3.0 * s.abs() * big).ln() - delta1.ln());
    let s_n0 = (small / (delta1 * big_e)).ln() / eps;
    let s0 = s_amp.min(s_n0);
    let n0 = (-eps * s0).exp() * small / big_e;
    let m0 = 3.0 * s0.abs();
    let deltas = leading(m, delta1, delta2);
    let terms = vec![
        ExpTerm { coef: deltas.clone(), rate: ls, abs_s: true, field: phi.components.clone() },
        ExpTerm { coef: uniform(m, -m0 * delta1), rate: ls, abs_s: false, field: phi.components.clone() },
        ExpTerm { coef: deltas.iter().map(|d| -d).collect(), rate: ls, abs_s: false, field: der.components.clone() },
        ExpTerm { coef: uniform(m, n0 * delta1), rate: ls + eps, abs_s: false, field: pe.components.clone() },
    ];
    let region = Region { s_lo: s0 - TAIL_SPAN, s_hi: s0, t_lo: 0.0, t_hi: 2.0, below_one: false };
    let mut cand = base_candidate(disp, Kind::SubCritical, cs, terms, region);
    for (k, v) in [
        ("c_star", cs),
        ("lambda_star", ls),
        ("epsilon_star", eps),
        ("epsilon_halvings", halvings as f64),
        ("sigma_star", sig),
        ("gamma0", gamma0),
        ("M_star", big),
        ("m_star", small),
        ("M1_star", big1),
        ("M_eps_star", big_e),
        ("m_eps_star", small_e),
        ("s_hat", s_hat),
        ("s_star", s_star),
        ("s0", s0),
        ("n0", n0),
        ("m0", m0),
        ("delta1", delta1),
        ("delta2", delta2),
        ("richardson_diff", der.richardson_diff),
    ] {
        cand.params.insert(k.into(), v);
    }
    cand.conditions = vec![Condition::NonPositiveAt { s: s0 }, Condition::BelowOne { s_lo: s0 - TAIL_SPAN, s_hi: s0 }];
    Ok(cand)
}

fn require_h7(model: &ReactionModel) -> Result<()> {
    let rep = check_hypotheses(model, HypothesisOptions { lattice: 3, h5_evidence: false });
    match rep.get("H7") {
        Some(e) if e.verdict == Verdict::Fail => {
            Err(Error::H7Fails(e.witness.clone().unwrap_or_else(|| format!("margin {:?}", e.margin))))
        }
        _ => Ok(()),
    }
}

/// `w_c = k e^{λ_c s} Φ_{λ_c}`, checked where `w_c ≤ 𝟏`.
pub fn build_super_linearized(disp: &Dispersion, c: f64, k: f64) -> Result<CandidateSolution> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("k = {k} must be positive")));
    }
    let model = disp.model;
    require_h7(model)?;
    let lc = disp.lambda_c(c)?;
    let phi = disp.eigenfunction_cascade(lc)?;
    let s_top = -(k * phi.max()).ln() / lc;
    let terms = vec![ExpTerm { coef: uniform(model.m(), k), rate: lc, abs_s: false, field: phi.components.clone() }];
    let region = Region { s_lo: s_top - TAIL_SPAN, s_hi: s_top + 2.0, t_lo: 0.0, t_hi: 2.0, below_one: true };
    let mut cand = base_candidate(disp, Kind::SuperLinearized, c, terms, region);
    for (key, v) in [("c", c), ("lambda_c", lc), ("k", k), ("s_top", s_top)] {
        cand.params.insert(key.into(), v);
    }
    cand.conditions = vec![Condition::Positive { s_lo: s_top - TAIL_SPAN, s_hi: s_top }];
    Ok(cand)
}

/// `W = k e^{λ*s}(|s|Φ* + nΦ* - Φ⁽¹⁾)` on `s ≤ s⁰ = s*(n)`.
pub fn build_super_linearized_critical(disp: &Dispersion, k: f64, n: f64) -> Result<CandidateSolution> {
    if !(k > 0.0 && n > 0.0) {
        return Err(Error::InvalidParameter(format!("need k > 0 and n > 0, got {k}, {n}")));
    }
    let model = disp.model;
    let m = model.m();
    require_h7(model)?;
    let (cs, ls) = disp.critical_speed()?;
    let phi = disp.eigenfunction_cascade(ls)?;
    let der = disp.eigenfunction_derivative(ls, None)?;
    let (small, big1) = (phi.min(), der.max_abs());
    let s_star = (-1.0f64).min(n - 1.0 / ls - big1 / small);
    let s0 = s_star;
    let kden = (2.0 * s0.abs() + n) * small - big1;
    if !(kden > 0.0) {
        return Err(Error::NonPositive(format!("k* denominator {kden:.3e} at s0 = {s0:.4}")));
    }
    let k_star = (-2.0 * ls * s0).exp() / kden;
    let terms = vec![
        ExpTerm { coef: uniform(m, k), rate: ls, abs_s: true, field: phi.components.clone() },
        ExpTerm { coef: uniform(m, k * n), rate: ls, abs_s: false, field: phi.components.clone() },
        ExpTerm { coef: uniform(m, -k), rate: ls, abs_s: false, field: der.components.clone() },
    ];
    let region = Region { s_lo: s0 - TAIL_SPAN, s_hi: s0, t_lo: 0.0, t_hi: 2.0, below_one: true };
    let mut cand = base_candidate(disp, Kind::SuperLinearizedCritical, cs, terms, region);
    // inf_x W(x, 2s⁰) ≥ 1 at k = k*.
    let scale = k_star / k;
    let mut worst = f64::INFINITY;
    for j in 0..model.n() {
        for v in cand.profile_at(j, 2.0 * s0).unwrap_or_default() {
            worst = worst.min(scale * v - 1.0);
        }
    }
    let pass = worst >= -1e-10;
    cand.fixed_checks.push(SideCheck {
        name: "inf_x W(x, 2 s0) >= 1 at k = k*".into(),
        margin: worst,
        pass,
        witness: (!pass).then(|| format!("min W at k* is {:.6e}", worst + 1.0)),
    });
    for (key, v) in [
        ("c_star", cs),
        ("lambda_star", ls),
        ("k", k),
        ("n", n),
        ("m_star", small),
        ("M1_star", big1),
        ("s_star", s_star),
        ("s0", s0),
        ("k_star", k_star),
    ] {
        cand.params.insert(key.into(), v);
    }
    cand.conditions = vec![
        Condition::Positive { s_lo: s0 - TAIL_SPAN, s_hi: s0 },
        Condition::Nondecreasing { s_lo: s0 - TAIL_SPAN, s_hi: s0 },
    ];
    Ok(cand)
}

/// Parameters shared by the lower and upper sandwich around one profile.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichSetup {
    pub c: f64,
    pub critical: bool,
    pub lambda: f64,
    pub epsilon: f64,
    /// `σ_ε` (supercritical) or `σ*` (critical).
    pub sigma_eps: f64,
    pub beta: f64,
    pub mu_minus: f64,
    pub delta: f64,
    pub delta_m: f64,
    pub delta_big_m: f64,
    pub z0: f64,
    pub z_margin: f64,
    pub chi_bound: f64,
    /// `inf ∂U_i/∂s` over the compact middle window.
    pub alpha: Vec<f64>,
    /// The middle-window estimate of `δ_c` (reported, not enforced).
    pub delta_c_estimate: f64,
    #[serde(skip)]
    xi: Correction,
    #[serde(skip)]
    profile: FrontProfile,
    #[serde(skip)]
    h: f64,
    #[serde(skip)]
    e: f64,
}

/// Principal pair of `DΔ + q∇ + D_uF(x,𝟏)`; requires `μ⁻ < 0` and `Ψ ≫ 0`.
pub fn h8_pair(model: &ReactionModel) -> Result<(f64, Vec<PeriodicField>)> {
    let op = model.coupled_operator(State::One)?;
    let p = principal_eig_block(&op, COUPLED_TOL)?;
    if !(p.value < 0.0) {
        return Err(Error::InvalidParameter(format!("(H8) fails: mu^- = {:.6e}", p.value)));
    }
    if p.vectors.iter().any(|v| !(v.min() > 0.0)) {
        return Err(Error::NonPositive("Psi is not strictly positive".into()));
    }
    Ok((p.value, p.vectors))
}

pub fn sandwich_setup(disp: &Dispersion, profile: &FrontProfile, c: f64, delta: f64) -> Result<SandwichSetup> {
    let model = disp.model;
    if profile.cell.n != model.n() || (profile.cell.l - model.grid.l).abs() > 1e-12 || profile.m() != model.m() {
        return Err(Error::InvalidParameter("profile grid does not match the model".into()));
    }
    if profile.monotonicity_defect > 1e-2 {
        return Err(Error::InvalidParameter(format!(
            "profile monotonicity defect {:.3e} is too large",
            profile.monotonicity_defect
        )));
    }
    let critical = disp.is_critical(c)?;
    let (mu, psi) = h8_pair(model)?;
    let psi_max = psi.iter().map(|p| p.max()).fold(0.0, f64::max);
    let psi_min = psi.iter().map(|p| p.min()).fold(f64::INFINITY, f64::min);
    let delta_m = 1.0 / psi_max;
    let delta_big_m = 1.0 / psi_min;
    if !(delta > 0.0 && delta <= delta_m) {
        return Err(Error::InvalidParameter(format!("delta = {delta} outside (0, delta_m = {delta_m:.6}]")));
    }
    let m = model.m();
    let (lambda, eps, sig, beta, tail) = if critical {
        let (_, ls) = disp.critical_speed()?;
        let (eps, sig, _) = critical_epsilon(disp, |s| s.abs() <= 0.5 * mu.abs())?;
        let phi = disp.eigenfunction_cascade(ls)?;
        let pe = disp.eigenfunction_cascade(ls + eps)?;
        let tail = vec![
            ExpTerm { coef: uniform(m, 1.0), rate: ls, abs_s: false, field: phi.components },
            ExpTerm { coef: uniform(m, -1.0), rate: ls + eps, abs_s: false, field: pe.components },
        ];
        (ls, eps, sig, sig.abs(), tail)
    } else {
        let lc = disp.lambda_c(c)?;
        let (eps, sig, _) = shrink_eps(disp.epsilon(c)?, |e| {
            let s = disp.kappa(0, lc + e)? - c * (lc + e);
            Ok((s, s < 0.0 && s.abs() <= mu.abs()))
        })?;
        let pe = disp.eigenfunction_cascade(lc + eps)?;
        let tail = vec![ExpTerm { coef: uniform(m, 1.0), rate: lc + eps, abs_s: false, field: pe.components }];
        (lc, eps, sig, 0.5 * sig.abs(), tail)
    };
    let chi = Cutoff::new(0.0);
    let chi_bound = chi.derivative_bound();
    if chi_bound > 1.0 {
        return Err(Error::InvalidParameter(format!("cutoff derivative bound {chi_bound:.4} exceeds 1")));
    }
    let xi = Correction { chi, tail, psi: psi.clone() };

    // z₀ scan: sup (U - δξ(s+z) - 1)/Ψ ≤ -δ/2 at δ and at δ_m.
    let h = model.grid.h();
    let zmargin = |z: f64, d: f64| -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..m {
            for j in 0..model.n() {
                let p = psi[i].values[j];
                for b in 0..profile.ns {
                    let s = profile.s(b);
                    let v = (profile.u[i][j][b] - d * xi.eval(i, j, s + z) - 1.0) / p;
                    worst = worst.min(-0.5 * d - v);
                }
            }
        }
        worst
    };
    let steps = (Z_SCAN_MAX / h).floor() as usize;
    let mut found = None;
    for a in 0..=steps {
        let z = a as f64 * h;
        let mar = zmargin(z, delta).min(zmargin(z, delta_m) * delta / delta_m);
        if mar >= 0.0 {
            found = Some((z, mar));
            break;
        }
    }
    let (z0, z_margin) = found.ok_or(Error::NoShift(Z_SCAN_MAX))?;

    let (alpha, delta_c_estimate) = middle_window_estimate(model, profile, &xi, c, delta, z0, mu, delta_m);
    Ok(SandwichSetup {
        c,
        critical,
        lambda,
        epsilon: eps,
        sigma_eps: sig,
        beta,
        mu_minus: mu,
        delta,
        delta_m,
        delta_big_m,
        z0,
        z_margin,
        chi_bound,
        alpha,
        delta_c_estimate,
        xi,
        profile: profile.clone(),
        h,
        e: model.e.sign(),
    })
}

/// `α_i = inf ∂U_i/∂s` and `min{δ_m, α_i / sup Δ_i}` on `ŝ ∈ [-M, M]` at `t = 0`, `σβ = 1`.
#[allow(clippy::too_many_arguments)]
fn middle_window_estimate(
    model: &ReactionModel,
    p: &FrontProfile,
    xi: &Correction,
    c: f64,
    delta: f64,
    z0: f64,
    mu: f64,
    delta_m: f64,
) -> (Vec<f64>, f64) {
    let m = model.m();
    let n = model.n();
    let h = model.grid.h();
    let big_m = xi.chi.s_hi.abs().max(xi.chi.s_lo.abs()) + CHI_WIDTH;
    let bins: Vec<usize> = (0..p.ns).filter(|&b| p.s(b).abs() <= big_m).collect();
    let mut alpha = vec![f64::INFINITY; m];
    for (i, a) in alpha.iter_mut().enumerate() {
        for j in 0..n {
            for &b in &bins {
                *a = a.min(p.ds_at(i, j, b));
            }
        }
    }
    let psi_norm = (0..n).map(|j| xi.psi.iter().map(|f| f.values[j]).sum::<f64>()).fold(0.0, f64::max);
    let tail_norms: Vec<f64> = xi
        .tail
        .iter()
        .map(|t| (0..n).map(|j| t.field.iter().map(|f| f.values[j]).sum::<f64>()).fold(0.0, f64::max))
        .collect();
    let grads: Vec<Vec<Vec<f64>>> =
        xi.tail.iter().map(|t| t.field.iter().map(|f| gradient_periodic(&f.values, h)).collect()).collect();
    let psi_grad: Vec<Vec<f64>> = xi.psi.iter().map(|f| gradient_periodic(&f.values, h)).collect();
    let ones = vec![1.0; m];
    let zero = vec![0.0; m];
    let gauss = [(0.5 - 0.5 * (0.6f64).sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * (0.6f64).sqrt(), 5.0 / 18.0)];
    let e = model.e.sign();
    let sb = 1.0;
    let mut sup_delta = vec![0.0f64; m];
    for j in 0..n {
        for &b in &bins {
            let s = p.s(b);
            let sc = s + z0;
            let u: Vec<f64> = (0..m).map(|i| p.u[i][j][b]).collect();
            let xv: Vec<f64> = (0..m).map(|i| xi.eval(i, j, sc)).collect();
            let um: Vec<f64> = (0..m).map(|i| u[i] - delta * xv[i]).collect();
            let (x1, x2, xs) = (xi.chi.d1(sc), xi.chi.d2(sc), xi.chi.value(sc));
            for i in 0..m {
                let hi = &model.h[i];
                let mut hik = vec![0.0; m];
                for &(g, w) in &gauss {
                    let pt: Vec<f64> = (0..m).map(|k| u[k] - (1.0 - g) * delta * xv[k]).collect();
                    for (k, v) in hi.grad(j, &pt).into_iter().enumerate() {
                        hik[k] += w * v;
                    }
                }
                let g1 = hi.grad(j, &ones);
                let gamma0 =
                    (hi.eval(j, &zero) - hi.eval(j, &um)).abs() + hik.iter().map(|v| (u[i] * v).abs()).sum::<f64>();
                let gamma1 = (hi.eval(j, &ones) - hi.eval(j, &um)).abs()
                    + (0..m).map(|k| (g1[k] - u[i] * hik[k]).abs()).sum::<f64>();
                let (d, q) = (model.d[i].values[j], model.q[i].values[j]);
                let mut r = 0.0;
                let mut tail_mag = 0.0;
                for (t, term) in xi.tail.iter().enumerate() {
                    let (lam, phi, dphi) = (term.rate, term.field[i].values[j], grads[t][i][j]);
                    let ex = term.coef[i] * (lam * sc).exp();
                    r += ex
                        * (x1 * (c - sb) * phi - xs * lam * sb * phi + 2.0 * d * x1 * dphi * e - d * x2 * phi
                            - 2.0 * d * x1 * lam * phi
                            + q * e * x1 * phi);
                    tail_mag += (lam * sc).exp() * tail_norms[t];
                }
                let ps = xi.psi[i].values[j];
                r += -x1 * (c - sb) * ps - 2.0 * d * x1 * psi_grad[i][j] * e + d * x2 * ps - q * e * x1 * ps;
                let tri = tail_mag * gamma0 + gamma1 * psi_norm + r.abs();
                sup_delta[i] = sup_delta[i].max(tri);
            }
        }
    }
    let _ = mu;
    let mut dc = delta_m;
    for i in 0..m {
        if !(alpha[i] > 0.0) {
            dc = 0.0;
        } else if sup_delta[i] > 0.0 {
            dc = dc.min(alpha[i] / sup_delta[i]);
        }
    }
    (alpha, dc)
}

impl SandwichSetup {
    /// Lower (sub) or upper (super) sandwich; `sigma = None` uses `1/β`.
    pub fn candidate(&self, side: Side, sigma: Option<f64>, s0: f64) -> Result<CandidateSolution> {
        let sigma = sigma.unwrap_or(1.0 / self.beta);
        if sigma * self.beta < 1.0 - 1e-12 {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} below 1/beta = {:.6}", 1.0 / self.beta)));
        }
        let p = &self.profile;
        let s_lo = p.s_lo + 1.0 - (s0 - sigma);
        let s_hi = p.s_hi() - 1.0 - (s0 + sigma);
        if !(s_hi > s_lo) {
            return Err(Error::EmptyRegion(format!("profile span too short for sigma = {sigma}")));
        }
        let (kind, sign) = match side {
            Side::Lower => (Kind::SandwichLower, -1.0),
            Side::Upper => (Kind::SandwichUpper, 1.0),
        };
        let form = Sandwich {
            profile: p.clone(),
            sign,
            s0,
            sigma,
            beta: self.beta,
            delta: self.delta,
            z0: self.z0,
            xi: self.xi.clone(),
        };
        let mut params = BTreeMap::new();
        for (k, v) in [
            ("c", self.c),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
            ("sigma_eps", self.sigma_eps),
            ("beta", self.beta),
            ("mu_minus", self.mu_minus),
            ("delta", self.delta),
            ("delta_m", self.delta_m),
            ("delta_M", self.delta_big_m),
            ("delta_c_estimate", self.delta_c_estimate),
            ("z0", self.z0),
            ("sigma", sigma),
            ("s0", s0),
            ("chi_bound", self.chi_bound),
            ("critical", if self.critical { 1.0 } else { 0.0 }),
        ] {
            params.insert(k.into(), v);
        }
        let zcheck = SideCheck {
            name: "sup (U - delta xi(s + z0) - 1)/Psi <= -delta/2".into(),
            margin: self.z_margin,
            pass: self.z_margin >= 0.0,
            witness: None,
        };
        Ok(CandidateSolution {
            kind,
            c: self.c,
            e: self.e,
            h: self.h,
            n: p.cell.n,
            m: p.m(),
            params,
            region: Region { s_lo, s_hi, t_lo: 0.0, t_hi: 3.0 / self.beta, below_one: false },
            conditions: Vec::new(),
            fixed_checks: vec![zcheck],
            form: Form::Sandwich(Box::new(form)),
        })
    }
}

pub fn build_stability_sandwich(
    disp: &Dispersion,
    profile: &FrontProfile,
    c: f64,
    delta: f64,
    sigma: f64,
    s0: f64,
    side: Side,
) -> Result<CandidateSolution> {
    sandwich_setup(disp, profile, c, delta)?.candidate(side, Some(sigma), s0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub t_c: f64,
    pub sigma_c: f64,
    pub s0: f64,
    /// `min (u - u⁻)` over the window.
    pub lower_gap: f64,
    /// `min (u⁺ - u)` over the window.
    pub upper_gap: f64,
}

/// First `(t_c, σ)` (snapshots in time order, then `σ = f/β` for the given factors) with
/// `u⁻ ≤ u(t_c) ≤ u⁺` on the window, `s₀` matched to the level-½ position at `t_c`.
pub fn search_bracketing_pair(setup: &SandwichSetup, traj: &Trajectory, factors: &[f64], t_min: f64) -> Result<Option<Bracket>> {
    let w = &traj.window;
    let h = w.h();
    let ks: Vec<i64> = (0..w.len()).map(|k| (w.x(k) / h).round() as i64).collect();
    for a in 0..traj.len() {
        let t = traj.times[a];
        if t < t_min {
            continue;
        }
        let state = traj.state(a);
        let Ok(xh) = front_position(&state, w, 0, 0.5) else { continue };
        let s0 = setup.e * xh - setup.c * t;
        for &f in factors {
            let sigma = f.max(1.0) / setup.beta;
            let lo = setup.candidate(Side::Lower, Some(sigma), s0)?;
            let up = setup.candidate(Side::Upper, Some(sigma), s0)?;
            let mut lg = f64::INFINITY;
            let mut ug = f64::INFINITY;
            for (idx, &k) in ks.iter().enumerate() {
                let a = lo.value(t, k);
                let b = up.value(t, k);
                for i in 0..state.m() {
                    lg = lg.min(state.u[i][idx] - a[i]);
                    ug = ug.min(b[i] - state.u[i][idx]);
                }
            }
            if lg >= -1e-10 && ug >= -1e-10 {
                return Ok(Some(Bracket { t_c: t, sigma_c: sigma, s0, lower_gap: lg, upper_gap: ug }));
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// ϱ from the Jacobian variation near 𝟏
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct VarrhoReport {
    pub alpha_star: f64,
    pub mu_minus: f64,
    pub target: f64,
    /// `None` when the inequality holds for every sampled `ϱ`.
    pub rho: Vec<Option<f64>>,
    pub rho_star: f64,
}

fn cube_offsets(m: usize) -> Vec<Vec<f64>> {
    let mut k = 5usize;
    while k.pow(m as u32) > 625 && k > 2 {
        k -= 1;
    }
    (0..k.pow(m as u32))
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let c = idx % k;
                    idx /= k;
                    -1.0 + 2.0 * c as f64 / (k - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// `max_{x, u ∈ [(1-ϱ)𝟏, (1+ϱ)𝟏]} Σ_k |∂fᵢ/∂u_k(x,u) - ∂fᵢ/∂u_k(x,𝟏)|` on a lattice.
pub fn jacobian_variation(model: &ReactionModel, i: usize, rho: f64) -> f64 {
    let m = model.m();
    let offs = cube_offsets(m);
    let ones = vec![1.0; m];
    let mut best = 0.0f64;
    for j in 0..model.n() {
        let j1 = &model.evaluate_jacobian(j, &ones)[i];
        for o in &offs {
            let u: Vec<f64> = o.iter().map(|t| 1.0 + rho * t).collect();
            let jr = &model.evaluate_jacobian(j, &u)[i];
            best = best.max(jr.iter().zip(j1).map(|(a, b)| (a - b).abs()).sum());
        }
    }
    best
}

pub fn compute_varrho(model: &ReactionModel, mu_minus: f64, psi: &[PeriodicField]) -> Result<VarrhoReport> {
    if !(mu_minus < 0.0) {
        return Err(Error::InvalidParameter(format!("(H8) requires mu^- < 0, got {mu_minus}")));
    }
    let pmax = psi.iter().map(|p| p.max()).fold(0.0, f64::max);
    let pmin = psi.iter().map(|p| p.min()).fold(f64::INFINITY, f64::min);
    let alpha = pmin / pmax;
    let target = alpha * mu_minus.abs() / 2.0;
    let mut rho = Vec::with_capacity(model.m());
    for i in 0..model.m() {
        let ok = |r: f64| jacobian_variation(model, i, r) <= target;
        if !ok(0.0) {
            return Err(Error::InvalidParameter(format!("varrho inequality fails at rho = 0 for component {}", i + 1)));
        }
        if ok(1e6) {
            rho.push(None);
            continue;
        }
        let mut hi = 1.0;
        while ok(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        rho.push(Some(lo));
    }
    let rho_star = rho.iter().flatten().fold(1.0f64, |a, r| a.min(*r));
    Ok(VarrhoReport { alpha_star: alpha, mu_minus, target, rho, rho_star })
}
