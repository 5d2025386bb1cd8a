use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use momentprop::augmentation::{basis_size, build_moment_system, close_system, MomentSystemJson};
use momentprop::scenario::{
    builtin_names, compare_scenario, compare_table, load_scenario, run_propagate, CompareOptions, ErrorClass,
    Method, OutputFormat, PropagateOptions, ScenarioError, TableId, DEFAULT_TABLE_TOL,
};

/// Exact moment propagation through stochastic systems, with linear,
/// unscented and Monte Carlo baselines.
#[derive(Parser, Debug)]
#[command(name = "momentprop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate moments of a scenario and write the trajectory.
    Propagate {
        /// Built-in name or path to a scenario file.
        scenario: String,
        /// exact, direct, linear, unscented or montecarlo.
        #[arg(long, short, default_value = "exact")]
        method: String,
        /// `a..b` or a comma list; defaults to the scenario's orders.
        #[arg(long)]
        orders: Option<String>,
        /// Propagate fewer steps than the scenario horizon.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, env = "MOMPROP_OUT")]
        out: Option<PathBuf>,
        /// Monte Carlo rollouts.
        #[arg(long)]
        ns: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Unscented spread parameter (default 3 − n).
        #[arg(long, allow_hyphen_values = true)]
        kappa: Option<f64>,
        /// csv, json or csv,json; defaults to the scenario's outputs.
        #[arg(long)]
        format: Option<String>,
    },
    /// Compare methods on table1, table2, or Monte Carlo against exact moments on a scenario.
    Compare {
        target: String,
        #[arg(long, default_value_t = 1_000_000)]
        ns: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Absolute tolerance against printed table cells.
        #[arg(long, default_value_t = DEFAULT_TABLE_TOL)]
        tol: f64,
        #[arg(long, allow_hyphen_values = true)]
        kappa: Option<f64>,
        #[arg(long)]
        orders: Option<String>,
        #[arg(long, env = "MOMPROP_OUT")]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
    /// Print a scenario's laws, augmented basis and moment-system sizes.
    Describe {
        scenario: String,
        /// Print the canonical scenario text instead.
        #[arg(long)]
        source: bool,
    },
    /// Emit the JSON moment-state system of one order.
    ExportSystem {
        scenario: String,
        #[arg(long)]
        order: u32,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    class: ErrorClass,
    msg: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure { class: e.class(), msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { class: ErrorClass::Usage, msg: msg.into() }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { class: ErrorClass::Io, msg: format!("{}: {e}", path.display()) }
}

fn ci_mode() -> bool {
    std::env::var("CI").is_ok_and(|v| !v.is_empty() && v != "0" && v != "false")
}

fn parse_orders(s: &str) -> Result<Vec<u32>, Failure> {
    let bad = || usage(format!("invalid orders `{s}`; use `a..b` or `1,2,3`"));
    let v: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if v.is_empty() || v.contains(&0) {
        return Err(bad());
    }
    Ok(v)
}

fn parse_formats(s: &str) -> Result<Vec<OutputFormat>, Failure> {
    s.split(',')
        .map(|p| match p.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(usage(format!("unknown format `{other}`"))),
        })
        .collect()
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Propagate { scenario, method, orders, horizon, out, ns, seed, kappa, format } => {
            let method: Method = method.parse()?;
            if method == Method::MonteCarlo && seed.is_none() && ci_mode() {
                return Err(usage("--seed is required for montecarlo when CI is set"));
            }
            let scn = load_scenario(&scenario)?;
            let opts = PropagateOptions {
                method,
                orders: orders.as_deref().map(parse_orders).transpose()?,
                horizon,
                samples: ns,
                seed,
                kappa,
            };
            let table = run_propagate(&scn, &opts)?;
            let formats = match format {
                Some(f) => parse_formats(&f)?,
                None => scn.outputs.clone(),
            };
            let dir = out_dir(out);
            for f in formats {
                let path = dir.join(format!("{}_{}.{}", scn.name, method, f.extension()));
                let body = match f {
                    OutputFormat::Csv => table.to_csv(),
                    OutputFormat::Json => table.to_json(),
                };
                write_atomic(&path, &body)?;
                println!("{}", path.display());
            }
        }
        Command::Compare { target, ns, seed, tol, kappa, orders, out } => {
            if seed.is_none() && ci_mode() {
                return Err(usage("--seed is required for Monte Carlo comparisons when CI is set"));
            }
            let mut opts = CompareOptions { samples: ns, tolerance: tol, kappa, ..Default::default() };
            if let Some(s) = seed {
                opts.seed = s;
            }
            opts.orders = orders.as_deref().map(parse_orders).transpose()?;
            let report = match target.parse::<TableId>() {
                Ok(id) => compare_table(id, &opts)?,
                Err(_) => compare_scenario(&load_scenario(&target)?, &opts)?,
            };
            print!("{report}");
            if let Some(dir) = out {
                let stem = Path::new(&target).file_stem().map_or_else(|| target.clone(), |s| s.to_string_lossy().into());
                let path = dir.join(format!("compare_{stem}.csv"));
                write_atomic(&path, &report.to_csv())?;
                println!("{}", path.display());
            }
        }
        Command::List => {
            for name in builtin_names() {
                let scn = load_scenario(name)?;
                let alias = if scn.name != name { format!(" (alias of {})", scn.name) } else { String::new() };
                println!("{name:<14} {}{alias}", scn.description.as_deref().unwrap_or(""));
            }
        }
        Command::Describe { scenario, source } => {
            let scn = load_scenario(&scenario)?;
            if source {
                print!("{}", scn.source);
                return Ok(());
            }
            let spec = &scn.spec;
            let names = |ids: &[momentprop::algebra::SymbolId]| {
                ids.iter().map(|s| spec.table.name(*s).to_string()).collect::<Vec<_>>().join(", ")
            };
            println!("scenario: {}", scn.name);
            if let Some(d) = &scn.description {
                println!("description: {d}");
            }
            println!("states: {}", names(&spec.states));
            println!("targets: {}", names(&scn.targets));
            println!("horizon: {}", scn.horizon);
            for (w, law) in &spec.disturbances {
                println!("disturbance {} ~ {law}", spec.table.name(*w));
            }
            for s in &spec.states {
                println!("initial {} ~ {}", spec.table.name(*s), spec.initial[s]);
            }
            let aug = close_system(spec, &scn.targets).map_err(ScenarioError::from)?;
            let f = aug.functional_names(&spec.table);
            println!("augmented basis ({} functionals): {}", f.len(), f.join(", "));
            for (i, row) in aug.transition.iter().enumerate() {
                let terms: Vec<String> =
                    row.iter().map(|(j, e)| format!("({})*{}", e.display(&spec.table), f[*j])).collect();
                println!("  {}' = {}", f[i], if terms.is_empty() { "0".into() } else { terms.join(" + ") });
            }
            for &alpha in &scn.orders {
                let d = basis_size(aug.len(), alpha);
                println!("order {alpha}: moment system {d} x {d} per step");
            }
        }
        Command::ExportSystem { scenario, order, out } => {
            if order == 0 {
                return Err(usage("--order must be at least 1"));
            }
            let scn = load_scenario(&scenario)?;
            let aug = close_system(&scn.spec, &scn.targets).map_err(ScenarioError::from)?;
            let ms = build_moment_system(&aug, order, &scn.spec).map_err(ScenarioError::from)?;
            let json = MomentSystemJson::new(&scn.spec, &aug, &ms);
            let body = serde_json::to_string_pretty(&json).expect("moment system serializes") + "\n";
            match out {
                Some(path) => {
                    write_atomic(&path, &body)?;
                    println!("{}", path.display());
                }
                None => print!("{body}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.class.exit_code() as u8)
        }
    }
}
