use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use toruslab::basis::{
    config_to_atom_space, default_atom_space, make_config, make_config_at, ConfigSpec,
};
use toruslab::bounds::{
    corollary_family, endpoint_machinery, endpoint_upper_check, family_analysis, legendre_phi,
    predicted_range, psi, FamilyRule,
};
use toruslab::maximal::{empirical_norm_search, indicator_q0, indicator_q1, Witness};
use toruslab::measure::ENUMERATION_LIMIT;
use toruslab::oracle::build_grid;
use toruslab::sweep::{
    analysis_space, analyze_point, fmt_float, plot_data, run_sweep, threads_from_env, to_csv, Mode,
    SweepSpec,
};
use toruslab::verify::{run_verify, Ceilings, GridSize, VerifyOptions};
use toruslab::Rational;

#[derive(Parser)]
#[command(name = "toruslab", version, about = "Maximal operators of (eps, d)-configurations on the infinite torus")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a configuration on the first basis level with d coordinates
    MkConfig {
        #[arg(long)]
        eps: String,
        #[arg(long)]
        d: u32,
        /// Use basis level m instead of the first one that fits
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak-type norm report for a configuration
    Analyze {
        config: PathBuf,
        #[arg(long)]
        p: f64,
        /// Evaluations of the seeded coordinate search (0 to skip)
        #[arg(long, default_value_t = 0)]
        search: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        exact: bool,
    },
    /// Endpoint machinery and the L log L ratio of a witness
    Endpoint {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value = "single")]
        witness: String,
    },
    /// Grid sweep to CSV
    Sweep {
        spec: PathBuf,
        /// CSV path; overrides the spec, default stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for (A_p, upper/B) data files
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Sup trajectories of a corollary family
    Family {
        #[arg(long)]
        rule: String,
        #[arg(long)]
        p0: f64,
        #[arg(long)]
        jmax: u64,
        /// Exponents to evaluate; default (1+p0)/2, p0, 2 p0
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
    },
    /// Run the invariant suites and print the constants manifest
    Verify {
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value = "small")]
        grid: String,
        /// JSON file overriding the default ceilings
        #[arg(long)]
        ceilings: Option<PathBuf>,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the Legendre transform φ and ψ at given points
    Phi {
        #[arg(long)]
        eps: String,
        /// Use c directly instead of the endpoint choice for (eps, d)
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        d: Option<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Write the oracle cell grid of a configuration as flat binary
    DumpGrid {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Input(String),
    Verify,
    Partial(usize),
}

impl From<toruslab::Error> for Failure {
    fn from(e: toruslab::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

/// Rounds every float in a JSON tree to 12 significant digits.
fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x: f64 = fmt_float(n.as_f64().unwrap_or(f64::NAN)).parse().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

/// Writes to stdout; a closed pipe ends output quietly.
fn write_stdout(text: &str) -> CliResult {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(v: Value) -> CliResult {
    let text = serde_json::to_string_pretty(&rounded(v)).map_err(|e| Failure::Input(e.to_string()))?;
    write_stdout(&(text + "\n"))
}

fn parse_eps(s: &str) -> Result<Rational, Failure> {
    s.parse::<Rational>().map_err(|e| Failure::Input(format!("--eps {s}: {e}")))
}

fn load_config(path: &Path) -> Result<ConfigSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn mk_config(eps: &str, d: u32, m: Option<u64>, out: Option<PathBuf>) -> CliResult {
    let eps = parse_eps(eps)?;
    let cfg = match m {
        Some(m) => make_config_at(eps, d, m)?,
        None => make_config(eps, d)?,
    };
    let text = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::Input(e.to_string()))?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => write_stdout(&(text + "\n"))?,
    }
    Ok(())
}

fn analyze(config: &Path, p: f64, search: u64, seed: u64, exact: bool) -> CliResult {
    let cfg = load_config(config)?;
    let mode = if exact { Mode::Exact } else { Mode::Float };
    let report = analyze_point(&cfg.eps, cfg.d as u64, p, mode)?;
    let mut v = serde_json::to_value(&report).map_err(|e| Failure::Input(e.to_string()))?;
    v["m"] = json!(cfg.level.m);
    if search > 0 {
        let space = analysis_space(&cfg.eps, cfg.d as u64)?;
        let s = empirical_norm_search(&space, p, search, seed, true)?;
        v["search"] = serde_json::to_value(&s).map_err(|e| Failure::Input(e.to_string()))?;
    }
    emit(v)
}

fn endpoint(config: &Path, lambda: f64, witness: &str) -> CliResult {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Failure::Input(format!("--lambda must be positive, got {lambda}")));
    }
    let cfg = load_config(config)?;
    let witness: Witness = witness.parse()?;
    let space = if cfg.d <= ENUMERATION_LIMIT {
        config_to_atom_space(&cfg)?
    } else {
        default_atom_space(cfg.eps.clone(), cfg.d)?
    };
    let f = match witness {
        Witness::Center => indicator_q0::<f64>(&space),
        Witness::Single => indicator_q1::<f64>(&space)?,
        Witness::Height => {
            return Err(Failure::Input("endpoint witness must be center or single".into()))
        }
    };
    let ratio = endpoint_upper_check(&space, &f, lambda)?;
    let rep = endpoint_machinery(&cfg.eps, cfg.d as u64);
    emit(json!({
        "schema": "v1",
        "eps": cfg.eps.to_string(),
        "d": cfg.d,
        "lambda": lambda,
        "witness": witness.name(),
        "endpoint": serde_json::to_value(&rep).map_err(|e| Failure::Input(e.to_string()))?,
        "ratio": ratio,
    }))
}

fn sweep(spec: &Path, out: Option<PathBuf>, plot: Option<PathBuf>, threads: Option<usize>) -> CliResult {
    let text = fs::read_to_string(spec).map_err(|e| Failure::Input(format!("{}: {e}", spec.display())))?;
    let spec: SweepSpec =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("sweep spec: {e}")))?;
    spec.validate()?;
    let rows = run_sweep(&spec, threads.or_else(threads_from_env))?;
    let csv = to_csv(&rows);
    match out.or_else(|| spec.outputs.csv.as_ref().map(PathBuf::from)) {
        Some(path) => fs::write(path, &csv)?,
        None => write_stdout(&csv)?,
    }
    if let Some(dir) = plot.or_else(|| spec.outputs.plot_dir.as_ref().map(PathBuf::from)) {
        fs::create_dir_all(&dir)?;
        let files = plot_data(&rows);
        let mut manifest = String::from("# file p columns\n");
        for (name, body) in &files {
            fs::write(dir.join(name), body)?;
            manifest.push_str(&format!("{name} A_p upper/B\n"));
        }
        fs::write(dir.join("manifest.txt"), manifest)?;
    }
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        return Err(Failure::Partial(failed));
    }
    Ok(())
}

fn family(rule: &str, p0: f64, jmax: u64, p: Vec<f64>) -> CliResult {
    let rule: FamilyRule = rule.parse()?;
    if !(p0 > 1.0) || !p0.is_finite() {
        return Err(Failure::Input(format!("--p0 must lie in (1, inf), got {p0}")));
    }
    let p_grid = if p.is_empty() {
        vec![(1.0 + p0) / 2.0, p0, 2.0 * p0]
    } else {
        p
    };
    let members = corollary_family(rule, p0, jmax);
    let report = family_analysis(&members, &p_grid)?;
    emit(json!({
        "schema": "v1",
        "rule": rule,
        "p0": p0,
        "jmax": jmax,
        "predicted_range": predicted_range(rule, p0),
        "report": serde_json::to_value(&report).map_err(|e| Failure::Input(e.to_string()))?,
    }))
}

fn verify(oracle: bool, grid: &str, ceilings: Option<PathBuf>, seed: u64, as_json: bool) -> CliResult {
    let grid: GridSize = grid.parse()?;
    let ceilings = match ceilings {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Ceilings>(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => Ceilings::default(),
    };
    let opts = VerifyOptions {
        grid,
        oracle,
        seed,
        ceilings,
        threads: threads_from_env(),
    };
    let report = run_verify(&opts);
    if as_json {
        emit(serde_json::to_value(&report).map_err(|e| Failure::Input(e.to_string()))?)?;
    } else {
        let mut text = String::new();
        for suite in &report.suites {
            for c in &suite.checks {
                let mark = if c.passed { "PASS" } else { "FAIL" };
                text.push_str(&format!("{mark} [{}] {} {}\n", suite.name, c.name, c.detail));
            }
        }
        text.push_str("# measured constants\n");
        for (k, v) in report.manifest() {
            text.push_str(&format!("{k} = {}\n", fmt_float(v)));
        }
        write_stdout(&text)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn phi(eps: &str, c: Option<f64>, d: Option<u64>, xs: Vec<f64>) -> CliResult {
    let eps = parse_eps(eps)?;
    toruslab::measure::check_epsilon(&eps)?;
    let c = match (c, d) {
        (Some(c), _) if c > 0.0 => c,
        (Some(c), _) => return Err(Failure::Input(format!("--c must be positive, got {c}"))),
        (None, Some(d)) if d > 0 => endpoint_machinery(&eps, d).c,
        _ => return Err(Failure::Input("give --c or a positive --d".into())),
    };
    let e = eps.to_f64();
    let mut rows = Vec::new();
    for x in xs {
        if !(x > 0.0) {
            return Err(Failure::Input(format!("x must be positive, got {x}")));
        }
        rows.push(json!({ "x": x, "phi": legendre_phi(x, e, c), "psi": psi(x, e, c) }));
    }
    emit(json!({ "schema": "v1", "eps": eps.to_string(), "c": c, "values": rows }))
}

fn dump_grid(config: &Path, out: &Path) -> CliResult {
    let cfg = load_config(config)?;
    let gm = build_grid(&cfg)?;
    let file = fs::File::create(out)?;
    gm.write_dump(io::BufWriter::new(file))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::MkConfig { eps, d, m, out } => mk_config(&eps, d, m, out),
        Cmd::Analyze { config, p, search, seed, exact } => analyze(&config, p, search, seed, exact),
        Cmd::Endpoint { config, lambda, witness } => endpoint(&config, lambda, &witness),
        Cmd::Sweep { spec, out, plot_data, threads } => sweep(&spec, out, plot_data, threads),
        Cmd::Family { rule, p0, jmax, p } => family(&rule, p0, jmax, p),
        Cmd::Verify { oracle, grid, ceilings, seed, json } => verify(oracle, &grid, ceilings, seed, json),
        Cmd::Phi { eps, c, d, x } => phi(&eps, c, d, x),
        Cmd::DumpGrid { config, out } => dump_grid(&config, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verify) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Partial(n)) => {
            eprintln!("{n} sweep rows failed");
            ExitCode::from(3)
        }
    }
}
