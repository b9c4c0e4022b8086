use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use perifront::cli_io::{load_config, parse_config, run_experiment};
use perifront::Error;

#[derive(Parser)]
#[command(name = "perifront", version, about = "Fronts of cooperative reaction-diffusion-advection systems in periodic media")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dispersion curves, critical speed and eigenfunctions.
    Dispersion(Opts),
    /// Simulate the Cauchy problem and track level sets.
    Simulate(Opts),
    /// Extract a front profile and fit its tail.
    Front(Opts),
    /// Build a sub- or supersolution and check its residual sign.
    Certify(Opts),
    /// Competition assumptions and the inverse-transformed front.
    Competition(Opts),
    /// Hypothesis report for a model.
    Hypotheses(Opts),
}

#[derive(Args)]
struct Opts {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    window_cells: Option<i64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated level values.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// `step` or `front-like`.
    #[arg(long)]
    initial: Option<String>,
    /// Certification candidate, e.g. `sub_supercritical`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set(v: &mut Value, path: &[&str], x: Value) {
    let mut cur = v;
    for key in &path[..path.len() - 1] {
        let obj = cur.as_object_mut().expect("object");
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut().expect("object").insert(path[path.len() - 1].to_string(), x);
}

fn assemble(exp: &str, o: &Opts) -> Result<Value, Error> {
    let mut v = match &o.config {
        Some(p) => load_config(p)?,
        None => json!({}),
    };
    if !v.is_object() {
        return Err(Error::Schema("config must be a JSON object".into()));
    }
    if let Some(e) = v.get("experiment").and_then(Value::as_str) {
        if e != exp {
            return Err(Error::Schema(format!("config experiment {e:?} does not match subcommand {exp:?}")));
        }
    }
    set(&mut v, &["experiment"], json!(exp));
    if let Some(m) = &o.model {
        set(&mut v, &["model", "name"], json!(m));
    }
    let nums: [(&str, Option<Value>); 4] = [
        ("n", o.n.map(|x| json!(x))),
        ("window_cells", o.window_cells.map(|x| json!(x))),
        ("dt", o.dt.map(|x| json!(x))),
        ("t_end", o.t_end.map(|x| json!(x))),
    ];
    for (k, x) in nums {
        if let Some(x) = x {
            set(&mut v, &["numerics", k], x);
        }
    }
    let params: [(&str, Option<Value>); 8] = [
        ("c", o.c.map(|x| json!(x))),
        ("k", o.k.map(|x| json!(x))),
        ("eps0", o.eps0.map(|x| json!(x))),
        ("delta", o.delta.map(|x| json!(x))),
        ("sigma", o.sigma.map(|x| json!(x))),
        ("levels", o.levels.as_ref().map(|x| json!(x))),
        ("initial", o.initial.as_ref().map(|x| json!(x))),
        ("kind", o.kind.as_ref().map(|x| json!(x))),
    ];
    for (k, x) in params {
        if let Some(x) = x {
            set(&mut v, &["params", k], x);
        }
    }
    if let Some(p) = &o.out {
        set(&mut v, &["output"], json!(p.to_string_lossy()));
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("PERIFRONT_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let (exp, opts) = match &cli.cmd {
        Cmd::Dispersion(o) => ("dispersion", o),
        Cmd::Simulate(o) => ("simulate", o),
        Cmd::Front(o) => ("front", o),
        Cmd::Certify(o) => ("certify", o),
        Cmd::Competition(o) => ("competition", o),
        Cmd::Hypotheses(o) => ("hypotheses", o),
    };
    let run = assemble(exp, opts).and_then(parse_config).and_then(|cfg| run_experiment(&cfg));
    match run {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("perifront {exp}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
