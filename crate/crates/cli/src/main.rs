use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use upfn_core::bandwidth::{
    class_h_functional, nikolskii_class_bound, nikolskii_select, write_bandwidth_csv, NikolskiiParams,
    SelectorOptions,
};
use upfn_core::entropy::{entropy_table, EntropyClass, QClassParams, SsBall};
use upfn_core::field::{lattice_for, lp_norm, sample_noise, write_dump, DumpHeader, FieldPlan, DEFAULT_CELL_CAP};
use upfn_core::grid::GriddedFunction;
use upfn_core::kernel::{Kernel, Profile};
use upfn_core::upper::{
    calibrated_star_table, constants_report, read_lambda_csv, Calibration, Constants, LambdaOverride, UpperFnConfig,
};
use upfn_core::verify::{run_scenario, write_report, Scenario};
use upfn_core::Error;

/// Upper functions for Lp-norms of kernel-smoothed Gaussian white noise.
#[derive(Parser)]
#[command(name = "upfn", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a verification scenario and write its report.
    Verify(VerifyArgs),
    /// Simulate the fields of a scenario and write their Lp-norms.
    Simulate(SimulateArgs),
    /// Print the constants report for a configuration.
    Constants(ConstantsArgs),
    /// Run the bandwidth selector on a gridded function.
    SelectBandwidth(SelectArgs),
    /// Covering numbers and entropy scaling of a function class.
    Entropy(EntropyArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// CSV of (replicate, bandwidth, norm).
    #[arg(long)]
    out: PathBuf,
    /// Replicate count, overriding the scenario.
    #[arg(long)]
    replicates: Option<usize>,
    /// Raw binary dump of every field value.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct ConstantsArgs {
    /// JSON configuration; an optional `kernel` key names the kernel.
    #[arg(long)]
    config: PathBuf,
    /// Kernel catalog name, overriding the config.
    #[arg(long)]
    kernel: Option<String>,
    /// `lambda_star=<csv>`, `lambda_d_star=<csv>` or `c_d=<value>`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Halve quadrature steps and tighten series tolerances tenfold.
    #[arg(long)]
    tight: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Gridded function CSV.
    #[arg(long)]
    function: PathBuf,
    /// Smoothness parameters (JSON).
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Net base; defaults to e^-2.
    #[arg(long)]
    base: Option<f64>,
    #[arg(long, default_value_t = 40)]
    s_max: u32,
    #[arg(long, default_value_t = 128)]
    quad_nodes: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Bandwidth CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EntropyArgs {
    /// `ss:gamma=..,m=..,radius=..,length=..,dim=..` or
    /// `q:kernel=..,h=..,b=..,tau=..,r=..,omega=..`.
    #[arg(long)]
    class: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the calibrated lambda* node table (omega, mu, value).
    #[arg(long)]
    lambda_table: Option<PathBuf>,
    /// Domain length for the lambda* table.
    #[arg(long, default_value_t = 3.0)]
    length: f64,
}

/// Command failure: an assertion failed (exit 2) or an error occurred.
enum Failure {
    Assertion(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type Out = std::result::Result<(), Failure>;

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T, Error> {
    Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?)
}

fn verify(a: VerifyArgs) -> Out {
    let sc: Scenario = read_json(&a.scenario)?;
    let report = run_scenario(&sc)?;
    write_report(&report, &a.out, a.svg)?;
    for u in &report.upper {
        println!(
            "{}: E-hat {:e} (se {:e}), bound {}, pass {}",
            u.kind.label(),
            u.e_hat,
            u.se,
            u.bound.map(|b| format!("{b:e}")).unwrap_or_else(|| "-".into()),
            u.pass.map(|p| p.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    for h in &report.hypotheses {
        println!("hypothesis {}: {} ({})", h.name, if h.holds { "holds" } else { "fails" }, h.detail);
    }
    println!("oracles pass: {}", report.oracles.pass);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("scenario `{}` failed; see {}", sc.name, a.out.display())))
    }
}

fn simulate(a: SimulateArgs) -> Out {
    let mut sc: Scenario = read_json(&a.scenario)?;
    if let Some(n) = a.replicates {
        sc.replicates = n;
    }
    sc.check_envelope()?;
    let kernel = sc.kernel()?;
    let hs = sc.bandwidths()?;
    let grid = sc.grid()?;
    let spec = lattice_for(&kernel, &hs, sc.delta, DEFAULT_CELL_CAP)?;
    let plan = FieldPlan::new(&kernel, &hs, &grid, &spec)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(Error::from)?;
    w.write_record(["replicate", "bandwidth", "norm"]).map_err(Error::from)?;
    let mut all = Vec::new();
    for rep in 0..sc.replicates {
        let noise = sample_noise(&spec, sc.seed, rep as u64, DEFAULT_CELL_CAP)?;
        let vals = plan.evaluate(&noise)?;
        for (k, v) in vals.iter().enumerate() {
            let n = lp_norm(v, &grid, sc.cfg.p);
            w.write_record([rep.to_string(), k.to_string(), format!("{n:e}")]).map_err(Error::from)?;
        }
        if a.dump.is_some() {
            all.push(vals);
        }
    }
    w.flush()?;
    if let Some(p) = a.dump {
        let header = DumpHeader {
            dims: vec![grid.n as u32; grid.dim],
            replicates: sc.replicates as u64,
            bandwidths: hs.len() as u32,
        };
        write_dump(BufWriter::new(File::create(p)?), &header, &all)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct ConstantsInput {
    #[serde(default = "default_kernel")]
    kernel: String,
    #[serde(flatten)]
    cfg: UpperFnConfig,
}

fn default_kernel() -> String {
    "triangle".into()
}

fn constants(a: ConstantsArgs) -> Out {
    let input: ConstantsInput = read_json(&a.config)?;
    let mut cfg = input.cfg;
    for o in &a.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override `{o}` is not KEY=VALUE")))?;
        match key {
            "lambda_star" | "lambda_d_star" => match read_lambda_csv(File::open(value)?)? {
                LambdaOverride::Star(s) => cfg.overrides.lambda_star = s,
                LambdaOverride::D(d) => cfg.overrides.lambda_d_star = d,
            },
            "c_d" => {
                cfg.overrides.c_d = Some(
                    value
                        .parse()
                        .map_err(|_| Error::Parse(format!("c_d must be a number, got `{value}`")))?,
                )
            }
            other => return Err(Error::Parse(format!("unknown override `{other}`")).into()),
        }
    }
    if a.tight {
        cfg.tolerances = cfg.tolerances.tightened();
    }
    cfg.validate()?;
    let kernel = Kernel::from_catalog(a.kernel.as_deref().unwrap_or(&input.kernel), cfg.d)?;
    let report = constants_report(&Constants::new(cfg, kernel)?)?;
    let body = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    match a.out {
        Some(p) => fs::write(p, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn select_bandwidth(a: SelectArgs) -> Out {
    let f = GriddedFunction::read_csv(File::open(&a.function)?)?;
    let np: NikolskiiParams = read_json(&a.params)?;
    let base = a.base.unwrap_or((-2.0f64).exp());
    let d = f.grid.dim;
    let kernel = Kernel::product(Profile::from_catalog(&np.base)?.w_ell(np.ell)?, d)?;
    let opts = SelectorOptions {
        s_max: a.s_max,
        quad_nodes: a.quad_nodes,
    };
    let sel = nikolskii_select(&np, &f, &kernel, a.eps, base, &opts)?;
    write_bandwidth_csv(&sel.bandwidth, BufWriter::new(File::create(&a.out)?))?;
    let functional = class_h_functional(&sel.bandwidth, a.tau);
    let bound = nikolskii_class_bound(&np, a.tau, f.grid.b, d);
    let summary = serde_json::json!({
        "s_eps": sel.s_eps,
        "class_functional": functional,
        "class_bound": bound,
        "halo_cells": sel.halo.iter().filter(|h| **h).count(),
        "c_tilde": np.c_tilde,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    if functional <= bound {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("class functional {functional} exceeds bound {bound}")))
    }
}

fn parse_class(spec: &str) -> Result<EntropyClass, Error> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("class spec `{spec}` needs a `kind:` prefix")))?;
    let mut kv = std::collections::HashMap::new();
    for part in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("`{part}` is not key=value")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |k: &str, default: Option<f64>| -> Result<f64, Error> {
        match kv.get(k) {
            Some(v) => v.parse().map_err(|_| Error::Parse(format!("`{k}` must be a number"))),
            None => default.ok_or_else(|| Error::Parse(format!("missing `{k}`"))),
        }
    };
    match kind {
        "ss" => Ok(EntropyClass::SsBall(SsBall::new(
            num("gamma", None)?,
            num("m", Some(2.0))?,
            num("radius", Some(1.0))?,
            num("length", Some(1.0))?,
            num("dim", Some(1.0))? as usize,
        ))),
        "q" => {
            let profile = Profile::from_catalog(kv.get("kernel").map(String::as_str).unwrap_or("triangle"))?;
            let q = QClassParams::new(profile, num("h", None)?, num("b", Some(0.5))?, num("tau", Some(0.5))?, num("r", Some(2.0))?);
            Ok(EntropyClass::QClass(q, num("omega", None)?))
        }
        other => Err(Error::Parse(format!("unknown class kind `{other}`"))),
    }
}

fn entropy(a: EntropyArgs) -> Out {
    let class = parse_class(&a.class)?;
    let (rows, check) = entropy_table(&class, a.budget, a.seed)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(Error::from)?;
    w.write_record(["delta", "n", "ln_n", "in_fit", "slope", "expected", "residual_rms", "pass"])
        .map_err(Error::from)?;
    for r in &rows {
        w.write_record([
            format!("{:e}", r.delta),
            r.n.to_string(),
            r.ln_n.to_string(),
            r.in_fit.to_string(),
            check.slope.to_string(),
            check.expected.to_string(),
            check.residual_rms.to_string(),
            check.pass.to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    if let Some(p) = &a.lambda_table {
        let cal = Calibration {
            budget: a.budget,
            seed: a.seed,
        };
        let mut t = csv::Writer::from_path(p).map_err(Error::from)?;
        t.write_record(["omega", "mu", "value"]).map_err(Error::from)?;
        for (o, m, v) in calibrated_star_table(a.length, cal)? {
            t.write_record([o.to_string(), m.to_string(), v.to_string()]).map_err(Error::from)?;
        }
        t.flush()?;
    }
    println!(
        "slope {:.4}, expected {:.4}, {} points, pass {}",
        check.slope, check.expected, check.points, check.pass
    );
    if check.pass {
        Ok(())
    } else {
        Err(Failure::Assertion("entropy scaling check failed".into()))
    }
}

/// 0 on success, 2 when an asserted check fails, 3 for contract or input
/// errors, 1 for anything else (I/O, capacity).
fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_contract() => 3,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Verify(a) => verify(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Constants(a) => constants(a),
        Cmd::SelectBandwidth(a) => select_bandwidth(a),
        Cmd::Entropy(a) => entropy(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
