//! Experiment configuration, batch runners and result files.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::{self, Kind, Sampling, Side};
use crate::dispersion::{self, Dispersion};
use crate::eigen;
use crate::error::{Error, Result};
use crate::fronts::{self, ExtractOptions, FitWindow};
use crate::grid::{make_cell_grid, CellGrid, Direction};
use crate::models::{
    self, check_competition_assumptions, check_hypotheses, CompetitionConfig, HypothesisOptions, ReactionModel,
    UserModelSpec,
};
use crate::sim::{self, build_initial_front_like, build_step, SimState, Simulator, StepperConfig, WindowGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Dispersion,
    Simulate,
    Front,
    Certify,
    Competition,
    Hypotheses,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Dispersion => "dispersion",
            Experiment::Simulate => "simulate",
            Experiment::Front => "front",
            Experiment::Certify => "certify",
            Experiment::Competition => "competition",
            Experiment::Hypotheses => "hypotheses",
        }
    }
}

/// Built-in names: `constant2`, `periodic2`, `chain-<m>`, `competition`,
/// `competition-const`, `competition-strong`, `user`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// `+1` or `-1`.
    #[serde(default = "plus")]
    pub direction: i8,
    /// Diffusion amplitude of `periodic2`.
    #[serde(default = "half")]
    pub amp: f64,
    /// Growth `r(x)` of the first chain component.
    #[serde(default = "chain_r")]
    pub r: models::FieldSpec,
    #[serde(default = "half")]
    pub a: f64,
    #[serde(default = "two")]
    pub gamma: f64,
    #[serde(default = "tenth")]
    pub b: f64,
    #[serde(default)]
    pub user: Option<UserModelSpec>,
    #[serde(default)]
    pub competition: Option<CompetitionConfig>,
}

fn plus() -> i8 {
    1
}
fn half() -> f64 {
    0.5
}
fn two() -> f64 {
    2.0
}
fn tenth() -> f64 {
    0.1
}
fn chain_r() -> models::FieldSpec {
    models::FieldSpec::Const(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Nodes per periodicity cell.
    #[serde(default = "n_default")]
    pub n: usize,
    #[serde(default = "l_default")]
    pub cell_length: f64,
    /// Window length in cells.
    #[serde(default = "window_default")]
    pub window_cells: i64,
    /// Cells kept behind the initial front.
    #[serde(default = "back_default")]
    pub back_cells: i64,
    #[serde(default = "dt_default")]
    pub dt: f64,
    #[serde(default = "t_default")]
    pub t_end: f64,
    /// Time between stored snapshots.
    #[serde(default = "snap_default")]
    pub snapshot_every: f64,
}

fn n_default() -> usize {
    64
}
fn l_default() -> f64 {
    2.0 * PI
}
fn window_default() -> i64 {
    60
}
fn back_default() -> i64 {
    5
}
fn dt_default() -> f64 {
    0.01
}
fn t_default() -> f64 {
    100.0
}
fn snap_default() -> f64 {
    1.0
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n: n_default(),
            cell_length: l_default(),
            window_cells: window_default(),
            back_cells: back_default(),
            dt: dt_default(),
            t_end: t_default(),
            snapshot_every: snap_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    /// `𝟏` behind the front position, `𝟎` ahead.
    Step,
    /// `min{(1-ε₀)𝟏, k|x|^τ e^{-λ_c x} Φ}`; needs `c`.
    FrontLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "tenth")]
    pub eps0: f64,
    #[serde(default = "delta_default")]
    pub delta: f64,
    #[serde(default = "tenth")]
    pub delta1: f64,
    #[serde(default = "tenth")]
    pub delta2: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "levels_default")]
    pub levels: Vec<f64>,
    #[serde(default = "initial_default")]
    pub initial: Initial,
    /// Certification candidate; chosen from `c` when absent.
    #[serde(default)]
    pub kind: Option<Kind>,
    /// Multiply the second exponential term of the candidate by this factor.
    #[serde(default)]
    pub corrupt: Option<f64>,
    /// Number of λ samples in the dispersion table.
    #[serde(default = "samples_default")]
    pub samples: usize,
    #[serde(default)]
    pub h5_evidence: bool,
}

fn one() -> f64 {
    1.0
}
fn delta_default() -> f64 {
    0.02
}
fn levels_default() -> Vec<f64> {
    vec![0.5]
}
fn initial_default() -> Initial {
    Initial::Step
}
fn samples_default() -> usize {
    81
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "out_default")]
    pub output: String,
}

fn out_default() -> String {
    "out".into()
}

/// Parse a config, reporting missing required keys as JSON pointers.
pub fn parse_config(v: Value) -> Result<ExperimentConfig> {
    if !v.is_object() {
        return Err(Error::Schema("config must be a JSON object".into()));
    }
    for ptr in ["/experiment", "/model", "/model/name"] {
        if v.pointer(ptr).is_none() {
            return Err(Error::Schema(format!("missing key {ptr}")));
        }
    }
    serde_json::from_value(v).map_err(|e| Error::Schema(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub enum BuiltModel {
    Cooperative(ReactionModel),
    Competition(models::CompetitionSpec),
}

fn direction(d: i8) -> Result<Direction> {
    match d {
        1 => Ok(Direction::Plus),
        -1 => Ok(Direction::Minus),
        _ => Err(Error::Schema(format!("model.direction must be 1 or -1, got {d}"))),
    }
}

pub fn cell_grid(num: &Numerics) -> Result<CellGrid> {
    make_cell_grid(num.cell_length, num.n).map_err(|e| Error::Schema(format!("numerics: {e}")))
}

pub fn build_model(cfg: &ModelConfig, num: &Numerics) -> Result<BuiltModel> {
    let g = cell_grid(num)?;
    let e = direction(cfg.direction)?;
    let with_e = |mut m: ReactionModel| {
        m.e = e;
        m
    };
    let name = cfg.name.as_str();
    Ok(match name {
        "constant2" => BuiltModel::Cooperative(with_e(models::constant2(g))),
        "periodic2" => BuiltModel::Cooperative(with_e(models::periodic2(g, cfg.amp))),
        "user" => {
            let spec = cfg.user.as_ref().ok_or_else(|| Error::Schema("missing key /model/user".into()))?;
            BuiltModel::Cooperative(spec.build(g, e)?)
        }
        "competition" => {
            let spec = cfg.competition.as_ref().ok_or_else(|| Error::Schema("missing key /model/competition".into()))?;
            BuiltModel::Competition(spec.build(g, e)?)
        }
        "competition-const" => BuiltModel::Competition(CompetitionConfig::constant(1.0, 1.0, 0.3, 0.3, 1.0).build(g, e)?),
        "competition-strong" => {
            BuiltModel::Competition(CompetitionConfig::constant(1.0, 1.0, 0.3, 1.5, 1.0).build(g, e)?)
        }
        _ => match name.strip_prefix("chain-").and_then(|m| m.parse::<usize>().ok()) {
            Some(m) if m >= 1 => {
                let r = cfg.r.build(g)?;
                BuiltModel::Cooperative(with_e(models::chain(g, m, r, cfg.a, cfg.gamma, cfg.b)))
            }
            _ => return Err(Error::Schema(format!("unknown model name {name:?} at /model/name"))),
        },
    })
}

/// Tolerances in force, embedded in every results file.
pub fn tolerances() -> Value {
    json!({
        "eigen_scalar_tol": eigen::SCALAR_TOL,
        "eigen_coupled_tol": eigen::COUPLED_TOL,
        "eigen_max_iter": eigen::MAX_ITER,
        "gap_min": dispersion::GAP_MIN,
        "cascade_residual": dispersion::CASCADE_RESIDUAL,
        "tangency_tol": dispersion::TANGENCY_TOL,
        "critical_tol": dispersion::CRITICAL_TOL,
        "convexity_tol": dispersion::CONVEXITY_TOL,
        "lambda_max": dispersion::LAMBDA_MAX,
        "box_tol": sim::TOL_BOX,
        "guard_cells": sim::GUARD_CELLS,
        "edge_cells": fronts::EDGE_CELLS,
        "min_occupancy": fronts::MIN_OCCUPANCY,
        "c_allow": certify::C_ALLOW,
        "z_scan_max": certify::Z_SCAN_MAX,
        "chi_width": certify::CHI_WIDTH,
    })
}

/// Write `# a, b, ...` then rows at 17 significant digits.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(w, "# {}", header.join(", ")).map_err(io)?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(", ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn cols(base: &[&str], prefix: &str, m: usize) -> Vec<String> {
    let mut h: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    h.extend((1..=m).map(|i| format!("{prefix}{i}")));
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Check {
    fn new(name: &str, pass: bool, value: Option<f64>, tolerance: Option<f64>) -> Self {
        Check { name: name.into(), pass, value, tolerance }
    }
}

/// Collected results and CSV tables of one experiment.
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<(String, Vec<String>, Vec<Vec<f64>>)>,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Outcome { results, checks: Vec::new(), tables: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn table(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<f64>>) {
        self.tables.push((name.into(), header, rows));
    }
}

/// Run one experiment and write `resolved-config.json`, `results.json` and its CSVs.
/// Returns the process exit status: 0 when every check passes, 1 otherwise.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<i32> {
    let out = compute(cfg)?;
    let dir = PathBuf::from(&cfg.output);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_json(&dir.join("resolved-config.json"), cfg)?;
    emit_plotdata(&dir, &out)?;
    let pass = out.passed();
    let doc = json!({
        "experiment": cfg.experiment.name(),
        "model": cfg.model.name,
        "version": env!("CARGO_PKG_VERSION"),
        "tolerances": tolerances(),
        "results": out.results,
        "checks": out.checks,
        "pass": pass,
    });
    write_json(&dir.join("results.json"), &doc)?;
    Ok(if pass { 0 } else { 1 })
}

pub fn emit_plotdata(dir: &Path, out: &Outcome) -> Result<()> {
    for (name, header, rows) in &out.tables {
        write_csv(&dir.join(name), header, rows)?;
    }
    Ok(())
}

/// Compute an experiment without touching the filesystem.
pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let built = build_model(&cfg.model, &cfg.numerics)?;
    match (cfg.experiment, built) {
        (Experiment::Competition, BuiltModel::Competition(spec)) => run_competition(cfg, &spec),
        (Experiment::Hypotheses, BuiltModel::Competition(spec)) => competition_hypotheses(cfg, &spec),
        (Experiment::Competition, BuiltModel::Cooperative(_)) => {
            Err(Error::Schema("competition experiment needs a competition model".into()))
        }
        (exp, BuiltModel::Competition(spec)) => {
            let an = check_competition_assumptions(&spec, false)?;
            cooperative(cfg, exp, &an.model)
        }
        (exp, BuiltModel::Cooperative(model)) => cooperative(cfg, exp, &model),
    }
}

fn cooperative(cfg: &ExperimentConfig, exp: Experiment, model: &ReactionModel) -> Result<Outcome> {
    match exp {
        Experiment::Dispersion => run_dispersion(cfg, model),
        Experiment::Hypotheses => {
            let rep = check_hypotheses(model, HypothesisOptions { lattice: 5, h5_evidence: cfg.params.h5_evidence });
            let mut out = Outcome::new(json!({ "hypotheses": rep }));
            for e in &rep.entries {
                out.checks.push(Check::new(&e.name, e.verdict != models::Verdict::Fail, e.margin, None));
            }
            Ok(out)
        }
        Experiment::Simulate => run_simulate(cfg, model),
        Experiment::Front => run_front(cfg, model),
        Experiment::Certify => run_certify(cfg, model),
        Experiment::Competition => unreachable!(),
    }
}

fn run_dispersion(cfg: &ExperimentConfig, model: &ReactionModel) -> Result<Outcome> {
    let disp = Dispersion::new(model);
    let (c0, l0) = disp.critical_speed()?;
    let ns = cfg.params.samples.max(3);
    let lambdas: Vec<f64> = (1..=ns).map(|k| 3.0 * l0 * k as f64 / ns as f64).collect();
    let table = disp.table(&lambdas)?;
    let mut res = json!({
        "c_plus0": c0,
        "lambda_plus0": l0,
        "min_second_difference": table.min_second_difference,
        "convexity_flag": table.convexity_flag,
    });
    let lambda = match cfg.params.c {
        Some(c) => {
            let lc = disp.lambda_c(c)?;
            res["c"] = json!(c);
            res["lambda_c"] = json!(lc);
            res["critical"] = json!(disp.is_critical(c)?);
            if !disp.is_critical(c)? {
                res["epsilon"] = json!(disp.epsilon(c)?);
            }
            lc
        }
        None => l0,
    };
    let phi = disp.eigenfunction_cascade(lambda)?;
    res["eigenfunction"] = json!({
        "lambda": lambda,
        "kappa": phi.kappa,
        "residuals": phi.residuals,
        "max": phi.max(),
        "min": phi.min(),
    });
    let mut out = Outcome::new(res);
    out.checks.push(Check::new("positive eigenfunction", phi.min() > 0.0, Some(phi.min()), None));
    out.checks.push(Check::new("sampled convexity", !table.convexity_flag, Some(table.min_second_difference), None));
    let m = model.m();
    let rows = (0..lambdas.len()).map(|k| {
        let mut r = vec![lambdas[k]];
        r.extend((0..m).map(|i| table.kappas[i][k]));
        r
    });
    out.table("dispersion.csv", cols(&["lambda"], "kappa_", m), rows.collect());
    let erows = (0..model.n()).map(|j| {
        let mut r = vec![model.grid.x(j)];
        r.extend(phi.at_node(j));
        r
    });
    out.table("eigenfunction.csv", cols(&["x"], "phi_", m), erows.collect());
    Ok(out)
}

fn window(cfg: &ExperimentConfig, model: &ReactionModel) -> Result<WindowGrid> {
    let n = &cfg.numerics;
    WindowGrid::new(model.grid, -n.back_cells, n.window_cells - n.back_cells, model.m())
}

fn initial_state(cfg: &ExperimentConfig, disp: &Dispersion, w: &WindowGrid) -> Result<(SimState, Option<String>)> {
    let m = disp.model.m();
    match cfg.params.initial {
        Initial::Step => Ok((build_step(w, m, 0.0, 1.0 - cfg.params.eps0), None)),
        Initial::FrontLike => {
            let c = cfg.params.c.ok_or_else(|| Error::Schema("front-like initial data needs /params/c".into()))?;
            let init = build_initial_front_like(disp, w, c, cfg.params.k, cfg.params.eps0)?;
            Ok((init.state, init.warning))
        }
    }
}

/// Rows `t, position, c_running`; the running speed is the slope over the last 10 time units.
fn front_rows(ts: &[f64], xs: &[f64]) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(ts.len());
    let mut a = 0;
    for k in 0..ts.len() {
        while ts[k] - ts[a] > 10.0 + 1e-9 {
            a += 1;
        }
        let c = if k > a { (xs[k] - xs[a]) / (ts[k] - ts[a]) } else { f64::NAN };
        rows.push(vec![ts[k], xs[k], c]);
    }
    rows
}

fn run_simulate(cfg: &ExperimentConfig, model: &ReactionModel) -> Result<Outcome> {
    let model = sim::oriented(model);
    let disp = Dispersion::new(&model);
    let (c0, _) = disp.critical_speed()?;
    let w = window(cfg, &model)?;
    let (state, warning) = initial_state(cfg, &disp, &w)?;
    let num = &cfg.numerics;
    let sim = Simulator::new(&model, w.clone(), StepperConfig::new(num.dt).snapshots(num.snapshot_every))?;
    let traj = sim.run(state, num.t_end, &mut [])?;
    let t0 = traj.times[0];
    let mut res = json!({ "c_plus0": c0, "t_end": num.t_end, "warning": warning });
    let mut out = Outcome::new(Value::Null);
    let mut excess = 0.0f64;
    for k in 0..traj.len() {
        let (lo, hi) = traj.state(k).box_excess();
        excess = excess.max(lo).max(hi);
    }
    res["box_excess"] = json!(excess);
    out.checks.push(Check::new("box invariance", excess <= sim::TOL_BOX, Some(excess), Some(sim::TOL_BOX)));
    let mut speeds = Vec::new();
    for &lev in &cfg.params.levels {
        let (ts, xs) = fronts::positions(&traj, 0, lev, t0, t0 + num.t_end)?;
        let fit = fronts::measure_speed(&traj, 0, lev, t0 + 0.5 * num.t_end, t0 + num.t_end)?;
        speeds.push(json!({ "level": lev, "fit": fit, "relative_to_c_plus0": (fit.c - c0) / c0 }));
        let name = if cfg.params.levels.len() == 1 { "fronts.csv".to_string() } else { format!("fronts_{lev}.csv") };
        out.table(&name, vec!["t".into(), "position".into(), "c_running".into()], front_rows(&ts, &xs));
    }
    res["speeds"] = json!(speeds);
    let last = traj.last();
    let rows = (0..w.len()).map(|k| {
        let mut r = vec![w.x(k)];
        r.extend(last.u.iter().map(|c| c[k]));
        r
    });
    out.table("final_state.csv", cols(&["x"], "u_", model.m()), rows.collect());
    let dir = PathBuf::from(&cfg.output);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(e.to_string()))?;
    let mut f = BufWriter::new(fs::File::create(dir.join("trajectory.bin")).map_err(|e| Error::Io(e.to_string()))?);
    traj.write_binary(&mut f)?;
    out.results = res;
    Ok(out)
}

fn run_front(cfg: &ExperimentConfig, model: &ReactionModel) -> Result<Outcome> {
    let model = sim::oriented(model);
    let disp = Dispersion::new(&model);
    let (c0, l0) = disp.critical_speed()?;
    let c = cfg.params.c.ok_or_else(|| Error::Schema("missing key /params/c".into()))?;
    let w = window(cfg, &model)?;
    let mut fcfg = cfg.clone();
    fcfg.params.initial = Initial::FrontLike;
    let (state, warning) = initial_state(&fcfg, &disp, &w)?;
    let num = &cfg.numerics;
    let sim = Simulator::new(&model, w, StepperConfig::new(num.dt).snapshots(num.snapshot_every))?;
    let run = fronts::run_and_extract(&sim, state, 0.5 * num.t_end, num.t_end, ExtractOptions::new(0.0))?;
    let critical = disp.is_critical(c)?;
    let tau = if critical { 1 } else { 0 };
    let (lambda, tol) = if critical { (l0, 0.10) } else { (disp.lambda_c(c)?, 0.05) };
    let fits = fronts::fit_decay(&run.profile, &disp, tau, FitWindow::Levels { lo: 1e-9, hi: 1e-5 })?;
    let conv = fronts::convergence_metric(&run.tail, &run.profile)?;
    let mut out = Outcome::new(json!({
        "c": c,
        "c_plus0": c0,
        "lambda": lambda,
        "tau": tau,
        "measured_speed": run.speed,
        "warning": warning,
        "profile": {
            "s_lo": run.profile.s_lo,
            "s_hi": run.profile.s_hi(),
            "min_occupancy": run.profile.min_occupancy,
            "monotonicity_defect": run.profile.monotonicity_defect,
            "anchor_shift": run.profile.anchor_shift,
        },
        "fits": fits,
        "final_convergence": conv.last(),
    }));
    for f in &fits {
        let rel = (f.lambda_est - lambda).abs() / lambda;
        out.checks.push(Check::new(&format!("decay exponent U_{}", f.component), rel <= tol, Some(rel), Some(tol)));
    }
    let m = model.m();
    out.table("profile.csv", cols(&["x", "s"], "U_", m), run.profile.csv_rows());
    let frows = fits
        .iter()
        .map(|f| vec![f.component as f64, f.lambda_est, f.rho_est, f.s_range.0, f.s_range.1, f.decades, f.goodness])
        .collect();
    let fh = ["component", "lambda_est", "rho_est", "s_a", "s_b", "decades", "goodness"];
    out.table("fits.csv", fh.iter().map(|s| s.to_string()).collect(), frows);
    let crows = conv.iter().map(|p| vec![p.t, p.shift, p.sup_dist]).collect();
    out.table("convergence.csv", vec!["t".into(), "shift".into(), "sup_dist".into()], crows);
    Ok(out)
}

fn run_certify(cfg: &ExperimentConfig, model: &ReactionModel) -> Result<Outcome> {
    let model = sim::oriented(model);
    let disp = Dispersion::new(&model);
    let p = &cfg.params;
    let kind = match (p.kind, p.c) {
        (Some(k), _) => k,
        (None, Some(c)) if !disp.is_critical(c)? => Kind::SubSupercritical,
        _ => Kind::SubCritical,
    };
    let need_c = || p.c.ok_or_else(|| Error::Schema("missing key /params/c".into()));
    let mut cand = match kind {
        Kind::SubSupercritical => certify::build_sub_supercritical(&disp, need_c()?, p.delta1, p.delta2)?,
        Kind::SubCritical => certify::build_sub_critical(&disp, p.delta1, p.delta2)?,
        Kind::SuperLinearized => certify::build_super_linearized(&disp, need_c()?, p.k)?,
        Kind::SuperLinearizedCritical => certify::build_super_linearized_critical(&disp, p.k, 1.0)?,
        Kind::SandwichLower | Kind::SandwichUpper => {
            let c = need_c()?;
            let w = window(cfg, &model)?;
            let init = build_initial_front_like(&disp, &w, c, p.k, p.eps0)?;
            let num = &cfg.numerics;
            let sim = Simulator::new(&model, w, StepperConfig::new(num.dt).snapshots(num.snapshot_every))?;
            let run = fronts::run_and_extract(&sim, init.state, 0.5 * num.t_end, num.t_end, ExtractOptions::new(0.0))?;
            let setup = certify::sandwich_setup(&disp, &run.profile, run.speed.c, p.delta)?;
            let side = if kind == Kind::SandwichLower { Side::Lower } else { Side::Upper };
            setup.candidate(side, p.sigma, 0.0)?
        }
    };
    if let Some(f) = p.corrupt {
        cand = cand.with_scaled_term(1, f)?;
    }
    let rep = certify::residual_sign_check(&model, &cand, Sampling::default())?;
    let mut out = Outcome::new(serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?);
    let worst = rep.slack.iter().copied().fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new("residual sign", rep.witnesses.is_empty(), Some(worst), Some(rep.allowance)));
    for s in &rep.side_conditions {
        out.checks.push(Check::new(&s.name, s.pass, Some(s.margin), None));
    }
    let header = ["component", "s", "t", "margin"].iter().map(|s| s.to_string()).collect();
    out.table("margins.csv", header, rep.margin_rows());
    Ok(out)
}

fn competition_hypotheses(cfg: &ExperimentConfig, spec: &models::CompetitionSpec) -> Result<Outcome> {
    let an = check_competition_assumptions(spec, cfg.params.h5_evidence)?;
    let rep = check_hypotheses(&an.model, HypothesisOptions { lattice: 5, h5_evidence: cfg.params.h5_evidence });
    let mut out = Outcome::new(json!({ "assumptions": an.report, "hypotheses": rep }));
    for e in an.report.entries.iter().chain(&rep.entries) {
        out.checks.push(Check::new(&e.name, e.verdict != models::Verdict::Fail, e.margin, None));
    }
    Ok(out)
}

/// Endpoint errors of the inverse-transformed front `min/max` over nodes 10 cells behind / ahead.
pub fn competition_endpoints(
    ss: &models::SteadyStates,
    state: &SimState,
    w: &WindowGrid,
    x_front: f64,
    offset_cells: f64,
) -> (f64, f64) {
    let (mut behind, mut ahead) = (0.0f64, 0.0f64);
    for k in 0..w.len() {
        let x = w.x(k);
        let j = w.cell_index(k);
        let v = models::inverse_transform(ss, j, [state.u[0][k], state.u[1][k]]);
        if x <= x_front - offset_cells * w.cell.l && x >= w.x_lo() + fronts::EDGE_CELLS * w.cell.l {
            behind = behind.max((v[0] - ss.u1.values[j]).abs()).max(v[1].abs());
        } else if x >= x_front + offset_cells * w.cell.l && x <= w.x_hi() - fronts::EDGE_CELLS * w.cell.l {
            ahead = ahead.max(v[0].abs()).max((v[1] - ss.u2.values[j]).abs());
        }
    }
    (behind, ahead)
}

fn run_competition(cfg: &ExperimentConfig, spec: &models::CompetitionSpec) -> Result<Outcome> {
    let an = check_competition_assumptions(spec, cfg.params.h5_evidence)?;
    let model = sim::oriented(&an.model);
    let disp = Dispersion::new(&model);
    let (c0, _) = disp.critical_speed()?;
    let h8 = certify::h8_pair(&model).map(|p| p.0);
    let w = window(cfg, &model)?;
    let num = &cfg.numerics;
    let state = build_step(&w, 2, 0.0, 1.0 - cfg.params.eps0);
    let sim = Simulator::new(&model, w.clone(), StepperConfig::new(num.dt).snapshots(num.snapshot_every))?;
    let traj = sim.run(state, num.t_end, &mut [])?;
    let t0 = traj.times[0];
    let last = traj.last();
    let xf = fronts::front_position(&last, &w, 0, 0.5)?;
    let (behind, ahead) = competition_endpoints(&an.steady, &last, &w, xf, 10.0);
    let fit = fronts::measure_speed(&traj, 0, 0.5, t0 + 0.5 * num.t_end, t0 + num.t_end)?;
    let mut out = Outcome::new(json!({
        "assumptions": an.report,
        "c_plus0": c0,
        "mu_minus": h8.as_ref().ok(),
        "h8_error": h8.as_ref().err().map(|e| e.to_string()),
        "speed": fit,
        "front_position": xf,
        "endpoint_error_behind": behind,
        "endpoint_error_ahead": ahead,
    }));
    for e in &an.report.entries {
        if e.name != "A2" {
            out.checks.push(Check::new(&e.name, e.verdict != models::Verdict::Fail, e.margin, None));
        }
    }
    out.checks.push(Check::new("endpoint (u1*, 0)", behind <= 1e-2, Some(behind), Some(1e-2)));
    out.checks.push(Check::new("endpoint (0, u2*)", ahead <= 1e-2, Some(ahead), Some(1e-2)));
    let (ts, xs) = fronts::positions(&traj, 0, 0.5, t0, t0 + num.t_end)?;
    out.table("fronts.csv", vec!["t".into(), "position".into(), "c_running".into()], front_rows(&ts, &xs));
    let rows = (0..w.len())
        .map(|k| {
            let v = models::inverse_transform(&an.steady, w.cell_index(k), [last.u[0][k], last.u[1][k]]);
            vec![w.x(k), last.u[0][k], last.u[1][k], v[0], v[1]]
        })
        .collect();
    let header = ["x", "w_1", "w_2", "u_1", "u_2"].iter().map(|s| s.to_string()).collect();
    out.table("competition_state.csv", header, rows);
    Ok(out)
}
