use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seroprev::exact::{functional_exact_interval, Functional};
use seroprev::harness::{emit_report, format_sig, parse_config, render_report, ConfigEntries, ReportFormat};
use seroprev::{
    compute_interval, run_coverage, Error, IntervalResult, Method, MethodSettings, MethodSpec, RngSeed, ScanStrategy,
    SweepAxis,
};

#[derive(Parser)]
#[command(name = "seroprev", version, about = "Confidence intervals and coverage experiments for seroprevalence surveys")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute intervals on one dataset.
    Interval(IntervalArgs),
    /// Estimate coverage at the base parameter by Monte Carlo.
    Coverage(Common),
    /// Estimate coverage along a grid of one parameter.
    Sweep(SweepArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Positives in the survey, negative-control and positive-control samples.
    #[arg(long)]
    x: Option<String>,
    /// Sample sizes.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated methods: delta, pb, bca, proj, inv-asym, inv-boot, exact, exact-grid, functional.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated statistics for the inversion methods.
    #[arg(long)]
    stat: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Lattice points per nuisance axis for the exact methods.
    #[arg(long = "grid")]
    grid: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    b: Option<usize>,
    /// Monte Carlo replicates.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for coverage runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Scan strategy for test inversion: full or local.
    #[arg(long)]
    scan: Option<String>,
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// table, csv or json-lines.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IntervalArgs {
    #[command(flatten)]
    common: Common,
    /// For `--method functional`: difference, relative_risk or odds_ratio of two samples given by `--x a,b --n a,b`.
    #[arg(long)]
    functional: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter to vary: p1, p2, p3, n1, n2 or n3.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated grid; defaults to 20 points around the base value.
    #[arg(long)]
    values: Option<String>,
}

fn load(common: &Common) -> Result<ConfigEntries, Error> {
    let mut e = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ConfigEntries::default(),
    };
    let strings = [
        ("x", &common.x),
        ("n", &common.n),
        ("method", &common.method),
        ("stat", &common.stat),
        ("scan", &common.scan),
        ("format", &common.format),
    ];
    for (k, v) in strings {
        if let Some(v) = v {
            e.set(k, v)?;
        }
    }
    let numbers = [
        ("alpha", common.alpha.map(|v| v.to_string())),
        ("gamma", common.gamma.map(|v| v.to_string())),
        ("grid", common.grid.map(|v| v.to_string())),
        ("b", common.b.map(|v| v.to_string())),
        ("reps", common.reps.map(|v| v.to_string())),
        ("seed", common.seed.map(|v| v.to_string())),
        ("threads", common.threads.map(|v| v.to_string())),
        ("out", common.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in numbers {
        if let Some(v) = v {
            e.set(k, &v)?;
        }
    }
    Ok(e)
}

fn format_of(e: &ConfigEntries) -> Result<ReportFormat, Error> {
    e.get("format").map(str::parse).transpose().map(Option::unwrap_or_default)
}

fn write_output(text: &str, out: Option<&str>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("cannot write {path}: {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: Option<&str>) -> Result<Option<T>, Error> {
    v.map(|s| s.trim().parse::<T>().map_err(|_| Error::InvalidInput(format!("{key}: cannot parse '{s}'"))))
        .transpose()
}

fn pair(key: &str, v: &str) -> Result<[u64; 2], Error> {
    let items: Vec<u64> = v
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::InvalidInput(format!("{key}: cannot parse '{s}'"))))
        .collect::<Result<_, _>>()?;
    match items.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::InvalidInput(format!("{key}: the functional method takes two samples, got '{v}'"))),
    }
}

struct Computed {
    spec: MethodSpec,
    result: Result<IntervalResult, Error>,
}

fn run_interval(args: &IntervalArgs) -> Result<u8, Error> {
    let e = load(&args.common)?;
    let format = format_of(&e)?;
    let seed: u64 = parse_num("seed", e.get("seed"))?.unwrap_or(0);
    let mut settings = MethodSettings::default();
    if let Some(a) = parse_num("alpha", e.get("alpha"))? {
        settings.alpha = a;
    }
    if let Some(g) = parse_num("gamma", e.get("gamma"))? {
        settings.gamma = g;
    }
    if let Some(g) = parse_num("grid", e.get("grid"))? {
        settings.g = g;
    }
    if let Some(s) = e.get("scan") {
        settings.scan.strategy = match s.trim() {
            "full" => ScanStrategy::Full,
            "local" => ScanStrategy::Local,
            _ => return Err(Error::InvalidInput(format!("scan: expected full or local, got '{s}'"))),
        };
    }
    let b: Option<usize> = parse_num("b", e.get("b"))?;
    let specs = e.methods()?;

    let mut computed = Vec::new();
    if specs.iter().any(|s| s.method == Method::Functional) {
        if specs.len() > 1 {
            return Err(Error::InvalidInput("the functional method cannot be combined with other methods".into()));
        }
        let kind: Functional = args
            .functional
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--method functional needs --functional".into()))?
            .parse()?;
        let x = pair("x", e.get("x").ok_or_else(|| Error::InvalidInput("missing x".into()))?)?;
        let n = pair("n", e.get("n").ok_or_else(|| Error::InvalidInput("missing n".into()))?)?;
        let result = functional_exact_interval(kind, x[0], n[0], x[1], n[1], settings.alpha, settings.gamma, settings.g)
            .map(|r| r.interval.with_note(format!("functional: {}", kind.tag())));
        computed.push(Computed { spec: specs[0], result });
    } else {
        let x = e.counts()?;
        for (i, spec) in specs.iter().enumerate() {
            let mut s = settings;
            s.b = b.unwrap_or(if spec.method == Method::InversionBootstrap { 10_000 } else { 100_000 });
            let result = compute_interval(spec, &x, &s, RngSeed::new(seed).derive(i as u64));
            computed.push(Computed { spec: *spec, result });
        }
    }

    let mut text = String::new();
    match format {
        ReportFormat::Table => {
            text.push_str(&format!("{:<10} {:<12} {:>10} {:>10} {:>7}\n", "method", "statistic", "lower", "upper", "level"));
            for c in &computed {
                let stat = c.spec.statistic.map(|s| s.tag()).unwrap_or("");
                match &c.result {
                    Ok(r) => {
                        text.push_str(&format!("{:<10} {:<12} {:>10.6} {:>10.6} {:>7}\n", c.spec.method, stat, r.lower, r.upper, r.level));
                        for d in &r.diagnostics {
                            text.push_str(&format!("    note: {d}\n"));
                        }
                    }
                    Err(err) => text.push_str(&format!("{:<10} {:<12} failed: {err}\n", c.spec.method, stat)),
                }
            }
            text.push_str(&format!("seed = {seed}\n"));
        }
        ReportFormat::Csv => {
            text.push_str("method,statistic,lower,upper,level,seed\n");
            for c in &computed {
                if let Ok(r) = &c.result {
                    let stat = c.spec.statistic.map(|s| s.tag()).unwrap_or("");
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        c.spec.method,
                        stat,
                        format_sig(r.lower),
                        format_sig(r.upper),
                        format_sig(r.level),
                        seed
                    ));
                }
            }
        }
        ReportFormat::JsonLines => {
            for c in &computed {
                if let Ok(r) = &c.result {
                    let v = serde_json::json!({
                        "method": c.spec.method.tag(),
                        "statistic": c.spec.statistic.map(|s| s.tag()),
                        "lower": r.lower,
                        "upper": r.upper,
                        "level": r.level,
                        "diagnostics": r.diagnostics,
                        "seed": seed,
                    });
                    text.push_str(&v.to_string());
                    text.push('\n');
                }
            }
        }
    }
    write_output(&text, e.get("out"))?;

    let mut code = 0;
    for c in &computed {
        if let Err(err) = &c.result {
            eprintln!("error: {}: {err}", c.spec);
            code = code.max(exit_code(err));
        }
    }
    Ok(code)
}

fn run_experiment(e: ConfigEntries) -> Result<u8, Error> {
    let format = format_of(&e)?;
    let cfg = e.to_experiment()?;
    let report = run_coverage(&cfg)?;
    match &cfg.out {
        Some(path) => emit_report(&report, format, path)?,
        None => print!("{}", render_report(&report, format)?),
    }
    Ok(0)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Interval(args) => run_interval(&args),
        Command::Coverage(common) => {
            let e = load(&common)?;
            if e.get("sweep").is_some() {
                return Err(Error::InvalidInput("coverage runs a single point; use the sweep subcommand".into()));
            }
            run_experiment(e)
        }
        Command::Sweep(args) => {
            let mut e = load(&args.common)?;
            if let Some(axis) = &args.sweep {
                e.set("sweep", axis)?;
            }
            if let Some(v) = &args.values {
                e.set("sweep_values", v)?;
            }
            match e.get("sweep") {
                Some(axis) => {
                    axis.parse::<SweepAxis>()?;
                }
                None => return Err(Error::InvalidInput("sweep needs --sweep p1|p2|p3|n1|n2|n3".into())),
            }
            run_experiment(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
