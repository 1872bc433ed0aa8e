//! `dpko`: differentially private model-X knockoff experiments.

use clap::{Args, Parser, Subcommand};
use dp_knockoffs::harness::{self, ExperimentConfig, RawConfig, Scenario};
use dp_knockoffs::theory;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dpko",
    version,
    about = "Differentially private model-X knockoffs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation scenario named in the config
    Simulate(RunArgs),
    /// Emit theoretical power/FDP rows for the configured grid
    Theory(RunArgs),
    /// Compare the projection mechanism against the Gaussian baseline
    Compare(RunArgs),
    /// Repeated private selection on a CSV dataset
    RealData(RealDataArgs),
    /// Evaluate the debiasing sufficient conditions at parameter points
    CheckConditions(ConditionsArgs),
    /// Scan exponent regimes for a feasible projection dimension
    Regime(RegimeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file (flat `key = value` under `[section]` headers)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry (repeatable): `--set section.key=value`
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output CSV path
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Manifest path (defaults to `<out>.manifest.txt`)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RealDataArgs {
    /// CSV dataset with a header row
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ConditionsArgs {
    /// Sample sizes (comma list; scalars broadcast across points)
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Feature counts
    #[arg(long, value_delimiter = ',')]
    p: Vec<usize>,
    /// Sparsity levels (fractional values allowed)
    #[arg(long, value_delimiter = ',')]
    s0: Vec<f64>,
    /// Projection dimensions
    #[arg(long, value_delimiter = ',')]
    r: Vec<usize>,
    /// Privacy budgets
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Privacy slack
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    c_lambda: f64,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegimeArgs {
    /// Sample-size exponents (n = p^alpha)
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Privacy exponents (eps = p^gamma)
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Projection exponents to scan, as `lo:hi:step`
    #[arg(long, default_value = "1.5:8.0:0.005")]
    beta_grid: String,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Simulate(args) => run_table(args, None, TableKind::Scenario),
        Command::Theory(args) => run_table(args, None, TableKind::Theory),
        Command::Compare(args) => run_table(
            args,
            Some(("run", "scenario", "mechanism-compare")),
            TableKind::Scenario,
        ),
        Command::RealData(args) => run_real_data(args),
        Command::CheckConditions(args) => run_conditions(args),
        Command::Regime(args) => run_regime(args),
    }
}

enum TableKind {
    Scenario,
    Theory,
}

fn load_config(args: &RunArgs, force: Option<(&str, &str, &str)>) -> Result<RawConfig, String> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::load(path).map_err(|e| e.to_string())?,
        None => RawConfig::default(),
    };
    if let Some((section, key, value)) = force {
        raw.set(section, key, value);
    }
    for entry in &args.overrides {
        let (path, value) = entry
            .split_once('=')
            .ok_or_else(|| format!("override {entry:?} is not section.key=value"))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| format!("override {entry:?} is missing the section"))?;
        raw.set(section.trim(), key.trim(), value.trim());
    }
    Ok(raw)
}

fn manifest_path(args: &RunArgs) -> PathBuf {
    args.manifest.clone().unwrap_or_else(|| {
        let mut os = args.out.clone().into_os_string();
        os.push(".manifest.txt");
        PathBuf::from(os)
    })
}

fn run_table(
    args: RunArgs,
    force: Option<(&str, &str, &str)>,
    kind: TableKind,
) -> Result<(), String> {
    let raw = load_config(&args, force)?;
    let cfg = ExperimentConfig::from_raw(&raw).map_err(|e| e.to_string())?;
    let table = match kind {
        TableKind::Scenario => harness::run(&cfg),
        TableKind::Theory => harness::theory_overlay(&cfg),
    }
    .map_err(|e| e.to_string())?;
    table.write_csv(&args.out).map_err(|e| e.to_string())?;
    harness::write_manifest(manifest_path(&args), &raw, &[]).map_err(|e| e.to_string())?;
    eprintln!(
        "wrote {} rows to {}",
        table.rows().len(),
        args.out.display()
    );
    Ok(())
}

fn run_real_data(args: RealDataArgs) -> Result<(), String> {
    let mut raw = load_config(&args.run, Some(("run", "scenario", "real-data")))?;
    let cfg = ExperimentConfig::from_raw(&raw).map_err(|e| e.to_string())?;
    if cfg.scenario != Scenario::RealData {
        return Err("real-data invoked with a non-real-data scenario".into());
    }
    let report = harness::real_data_run(&args.data, &cfg).map_err(|e| e.to_string())?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    report
        .table
        .write_csv(&args.run.out)
        .map_err(|e| e.to_string())?;
    raw.set("dataset", "path", &args.data.display().to_string());
    raw.set("dataset", "n", &report.n.to_string());
    raw.set("dataset", "p", &report.p.to_string());
    raw.set(
        "dataset",
        "inferred_bound",
        &format!("{}", report.inferred_bound),
    );
    harness::write_manifest(manifest_path(&args.run), &raw, &report.warnings)
        .map_err(|e| e.to_string())?;
    eprintln!(
        "wrote {} rows to {}",
        report.table.rows().len(),
        args.run.out.display()
    );
    Ok(())
}

fn broadcast(len: usize, values: &[f64], what: &str) -> Result<Vec<f64>, String> {
    match values.len() {
        1 => Ok(vec![values[0]; len]),
        l if l == len => Ok(values.to_vec()),
        other => Err(format!("{what} has {other} entries, expected 1 or {len}")),
    }
}

fn broadcast_usize(len: usize, values: &[usize], what: &str) -> Result<Vec<usize>, String> {
    match values.len() {
        1 => Ok(vec![values[0]; len]),
        l if l == len => Ok(values.to_vec()),
        other => Err(format!("{what} has {other} entries, expected 1 or {len}")),
    }
}

fn run_conditions(args: ConditionsArgs) -> Result<(), String> {
    let len = args
        .n
        .len()
        .max(args.p.len())
        .max(args.s0.len())
        .max(args.r.len())
        .max(args.epsilon.len())
        .max(args.delta.len());
    if len == 0 {
        return Err("no parameter points given".into());
    }
    let n = broadcast_usize(len, &args.n, "--n")?;
    let p = broadcast_usize(len, &args.p, "--p")?;
    let r = broadcast_usize(len, &args.r, "--r")?;
    let s0 = broadcast(len, &args.s0, "--s0")?;
    let epsilon = broadcast(len, &args.epsilon, "--epsilon")?;
    let delta = broadcast(len, &args.delta, "--delta")?;

    let mut out = String::from(
        "n,p,s0,r,epsilon,delta,lambda,kappa_n,phi_w,w_squared,rho_n,\
         lhs1,rhs1,ratio1,lhs2,rhs2,ratio2,lhs3,rhs3,ratio3,lhs4,rhs4,ratio4,all_pass\n",
    );
    for i in 0..len {
        let report = theory::check_debias_conditions(
            n[i],
            p[i],
            s0[i],
            r[i],
            epsilon[i],
            delta[i],
            args.sigma,
            args.c_lambda,
        )
        .map_err(|e| e.to_string())?;
        let all_pass = report.conditions.iter().all(|c| c.passes());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            n[i],
            p[i],
            s0[i],
            r[i],
            epsilon[i],
            delta[i],
            report.lambda,
            report.kappa_n,
            report.phi_w,
            report.w_squared,
            report.rho_n
        ));
        for side in &report.conditions {
            out.push_str(&format!(",{},{},{}", side.lhs, side.rhs, side.ratio()));
        }
        out.push_str(&format!(",{}\n", all_pass));
    }
    emit(args.out.as_deref(), &out)
}

fn parse_beta_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("beta grid {text:?} is not lo:hi:step"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("{e}"))?;
    let step: f64 = parts[2].parse().map_err(|e| format!("{e}"))?;
    if !(step > 0.0 && hi >= lo) {
        return Err("beta grid needs hi >= lo and step > 0".into());
    }
    let mut grid = Vec::new();
    let mut b = lo;
    while b <= hi + 1e-12 {
        grid.push(b);
        b += step;
    }
    Ok(grid)
}

fn run_regime(args: RegimeArgs) -> Result<(), String> {
    if args.alpha.is_empty() || args.gamma.is_empty() {
        return Err("need at least one --alpha and one --gamma".into());
    }
    let grid = parse_beta_grid(&args.beta_grid)?;
    let mut out = String::from("alpha,gamma,feasible,witness_beta\n");
    for &alpha in &args.alpha {
        for &gamma in &args.gamma {
            let report = theory::regime_feasible(alpha, gamma, &grid);
            out.push_str(&format!(
                "{alpha},{gamma},{},{}\n",
                report.feasible,
                report
                    .witness_beta
                    .map_or(String::from(""), |b| format!("{b}"))
            ));
        }
    }
    emit(args.out.as_deref(), &out)
}

fn emit(path: Option<&Path>, contents: &str) -> Result<(), String> {
    match path {
        Some(path) => std::fs::write(path, contents).map_err(|e| e.to_string()),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}
