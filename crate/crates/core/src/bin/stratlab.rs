use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stratlab::acceptance::{acceptance_csv, run_acceptance};
use stratlab::classifier::{alexandrov_classify, classify};
use stratlab::graph::build_graph;
use stratlab::measure::{ball_volume_mc, derive_seed, sample_points_low_discrepancy};
use stratlab::model::{ModelDocument, StratifiedModel};
use stratlab::report::{write_atomic, CsvTable};
use stratlab::spectral::{eigen_cached, spectrum_csv};
use stratlab::suite::{
    catalog, catalog_table, read_json, resolve_center, run, run_catalog, run_check, summary_csv, write_outputs,
    Center, CheckOutcome, CheckSpec, ExperimentConfig, Workspace,
};
use stratlab::Error;

#[derive(Parser)]
#[command(name = "stratlab", version, about = "Curvature-dimension checks on model stratified spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Catalog,
    Acceptance,
}

#[derive(Args)]
struct Output {
    /// Write here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ModelArg {
    /// Model document, inline JSON or `@file.json`.
    #[arg(long)]
    model: String,
}

#[derive(Subcommand)]
enum Command {
    /// RCD(K, N) verdict, plus the Alexandrov verdict when `--alexandrov k` is given.
    Classify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "K", allow_negative_numbers = true)]
        k: f64,
        #[arg(long = "N")]
        n: f64,
        #[arg(long, allow_negative_numbers = true)]
        alexandrov: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Exact distance between two points.
    Distance {
        #[command(flatten)]
        model: ModelArg,
        /// `apex`, `pole`, or a center in JSON such as `{"radial":{"r":1,"angle":0}}`.
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo ball volume.
    Volume {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        center: String,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Low eigenvalues of the graph Laplacian.
    Spectrum {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// One comparison check, given as JSON (inline or `@file.json`).
    Compare {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        check: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Bochner margins of the low eigenfunctions with ψ ≡ 1.
    Bochner {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long = "K", allow_negative_numbers = true)]
        k: f64,
        #[arg(long = "N")]
        n: f64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// The built-in catalog with expected verdicts and check plans.
    Catalog {
        /// Print the documentation table instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment config, or a built-in suite.
    Report {
        #[arg(long, conflicts_with = "suite")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        /// Only catalog entries whose name contains this text.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical { .. } | Error::Resolution(_) | Error::InconsistentMetric(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T, Error> {
    match arg.strip_prefix('@') {
        Some(path) => read_json(path.as_ref()),
        None => serde_json::from_str(arg).map_err(|e| Error::Config(format!("invalid {what} JSON: {e}"))),
    }
}

fn load_model(arg: &ModelArg) -> Result<StratifiedModel, Error> {
    let doc: ModelDocument = parse_json(&arg.model, "model")?;
    StratifiedModel::try_from(doc)
}

fn parse_center(arg: &str) -> Result<Center, Error> {
    match arg {
        "apex" => Ok(Center::Apex),
        "pole" => Ok(Center::Pole),
        _ => parse_json(arg, "center"),
    }
}

fn emit_text(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<(), Error> {
    emit_text(out, &serde_json::to_string_pretty(value)?)
}

/// JSON value, or a two-column `key,value` CSV of its top-level scalars.
fn emit<T: Serialize>(output: &Output, value: &T) -> Result<(), Error> {
    match output.format {
        Format::Json => emit_json(&output.out, value),
        Format::Csv => {
            let v = serde_json::to_value(value)?;
            let mut table = CsvTable::new(&["key", "value"]);
            if let serde_json::Value::Object(map) = v {
                for (k, v) in map {
                    table.push(vec![k, v.to_string()]);
                }
            }
            emit_text(&output.out, &table.render())
        }
    }
}

fn emit_checks(output: &Output, entry: &str, value: &impl Serialize, checks: &[CheckOutcome]) -> Result<(), Error> {
    match output.format {
        Format::Json => emit_json(&output.out, value),
        Format::Csv => {
            let rows: Vec<(&str, &CheckOutcome)> = checks.iter().map(|c| (entry, c)).collect();
            emit_text(&output.out, &summary_csv(&rows))
        }
    }
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Classify { model, k, n, alexandrov, output } => {
            let m = load_model(&model)?;
            let verdict = classify(&m, k, n);
            match alexandrov {
                Some(ak) => emit(&output, &serde_json::json!({ "schema": 1, "rcd": verdict, "alexandrov": alexandrov_classify(&m, ak) }))?,
                None => emit(&output, &verdict)?,
            }
            Ok(0)
        }
        Command::Distance { model, p, q, output } => {
            let m = load_model(&model)?;
            let (x, y) = (resolve_center(&m, &parse_center(&p)?)?, resolve_center(&m, &parse_center(&q)?)?);
            let d = m.distance(&x, &y)?;
            emit(&output, &serde_json::json!({ "schema": 1, "model_hash": m.model_hash(), "p": x, "q": y, "distance": d }))?;
            Ok(0)
        }
        Command::Volume { model, center, r, samples, seed, output } => {
            let m = load_model(&model)?;
            let x = resolve_center(&m, &parse_center(&center)?)?;
            let e = ball_volume_mc(&m, &x, r, samples, seed)?;
            emit(&output, &serde_json::json!({
                "schema": 1, "model_hash": m.model_hash(), "center": x, "radius": r,
                "value": e.value, "stderr": e.stderr, "samples": e.samples, "seed": e.seed,
            }))?;
            Ok(0)
        }
        Command::Spectrum { model, samples, eps, count, seed, output } => {
            let m = load_model(&model)?;
            let cloud = sample_points_low_discrepancy(&m, samples, derive_seed(seed, 0xc10d))?;
            let g = build_graph(&m, &cloud, eps)?;
            let s = eigen_cached(&g, count)?;
            match output.format {
                Format::Json => emit_json(&output.out, &serde_json::json!({ "schema": 1, "model_hash": m.model_hash(), "seed": seed, "spectrum": s }))?,
                Format::Csv => emit_text(&output.out, &spectrum_csv(&s))?,
            }
            Ok(0)
        }
        Command::Compare { model, check, seed, output } => {
            let m = load_model(&model)?;
            let spec: CheckSpec = parse_json(&check, "check")?;
            let mut ws = Workspace::new(&m, seed);
            let report = run_check(&mut ws, &spec, derive_seed(seed, 0))?;
            let pass = report.pass;
            let outcome = CheckOutcome { model_hash: m.model_hash(), expected_pass: true, as_expected: pass, report };
            emit_checks(&output, "", &outcome, std::slice::from_ref(&outcome))?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Bochner { model, samples, eps, count, k, n, seed, output } => {
            let m = load_model(&model)?;
            let spec = CheckSpec::Bochner { nodes: samples, eps, eigenvalues: count, k, n, test_function: None };
            let mut ws = Workspace::new(&m, seed);
            let report = run_check(&mut ws, &spec, seed)?;
            let pass = report.pass;
            let outcome = CheckOutcome { model_hash: m.model_hash(), expected_pass: true, as_expected: pass, report };
            emit_checks(&output, "", &outcome, std::slice::from_ref(&outcome))?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Catalog { table, out } => {
            if table {
                emit_text(&out, &catalog_table())?;
            } else {
                emit_json(&out, &serde_json::json!({ "schema": 1, "entries": catalog() }))?;
            }
            Ok(0)
        }
        Command::Report { config, suite, filter, seed, output } => match (config, suite) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let config = ExperimentConfig::from_json(&text)?;
                let report = run(&config)?;
                write_outputs(&report, &config.output)?;
                if output.out.is_some() || (config.output.json.is_none() && config.output.csv.is_none()) {
                    emit_checks(&output, "", &report, &report.checks)?;
                }
                Ok(if report.all_as_expected() { 0 } else { 1 })
            }
            (None, Some(Suite::Catalog)) => {
                let report = run_catalog(seed, filter.as_deref())?;
                match output.format {
                    Format::Json => emit_json(&output.out, &report)?,
                    Format::Csv => emit_text(&output.out, &report.csv())?,
                }
                Ok(if report.success() { 0 } else { 1 })
            }
            (None, Some(Suite::Acceptance)) => {
                let rows = run_acceptance(seed)?;
                match output.format {
                    Format::Json => emit_json(&output.out, &serde_json::json!({ "schema": 1, "seed": seed, "rows": rows }))?,
                    Format::Csv => emit_text(&output.out, &acceptance_csv(&rows))?,
                }
                Ok(if rows.iter().all(|r| r.pass) { 0 } else { 1 })
            }
            (None, None) => Err(Error::Config("report needs --config or --suite".into()).into()),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("stratlab: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

