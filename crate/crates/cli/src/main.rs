//! `delinq-chain` command-line front end.
//!
//! Exit status: 0 on success, 1 for usage or parse errors, 2 for data
//! validation and I/O failures, 3 when `(I - Q)` cannot be inverted.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind as ClapErrorKind, Args, Parser, Subcommand};
use delinq_chain::baselines::{write_curves_csv, DEFAULT_FLATTENING_EPSILON, DEFAULT_FLATTENING_K};
use delinq_chain::markov::{DEFAULT_MIN_ROW_COUNT, STOCHASTIC_TOLERANCE};
use delinq_chain::recommend::DEFAULT_THRESHOLD;
use delinq_chain::{
    bad_rate, count_transitions, detect_flattening, ever_dpd_curves, filter_never_delinquent, fundamental_matrix,
    load_panel, normalize_counts, parse_bad_definition_with, recommend, roll_rate, simulate_panel, to_canonical,
    validate_stochastic, write_panel_csv, Error, ErrorKind, Panel, Period, RecommendParams, SimulationSpec,
    StateConfig, TransitionMatrix,
};
use serde::Serialize;
use serde_json::json;

use report::{Inputs, RunReport};

const THREADS_VAR: &str = "DELINQ_CHAIN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "delinq-chain",
    version,
    about = "Performance period and bad definition from delinquency panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recommend a bad definition and performance period for a panel.
    Analyze(AnalyzeArgs),
    /// Write transition counts and the estimated, canonical and fundamental matrices.
    Matrix(MatrixArgs),
    /// Roll rates from worst state in the first X months to write-off in the next Y.
    Rollrate(RollrateArgs),
    /// Ever-DPD curves per vintage and the month each one flattens.
    Vintage(VintageArgs),
    /// Parse a bad definition and, given a panel, measure its bad rate.
    Baddef(BaddefArgs),
    /// Simulate a panel from a transition matrix.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
struct PanelArgs {
    /// Panel CSV with account_id, period, dpd and optional status columns.
    #[arg(long)]
    input: PathBuf,
    /// JSON state configuration (bucket_edges, writeoff_dpd).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    panel: PanelArgs,
    /// Stay-or-improve probability below which a state is past the point of no return.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Rows estimated from fewer transitions are flagged.
    #[arg(long, default_value_t = DEFAULT_MIN_ROW_COUNT)]
    min_row_count: u64,
    #[arg(long, default_value = "report.json")]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct MatrixArgs {
    #[command(flatten)]
    #[serde(flatten)]
    panel: PanelArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Count transitions of never-delinquent accounts as well.
    #[arg(long)]
    all_accounts: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_ROW_COUNT)]
    min_row_count: u64,
}

#[derive(Debug, Args, Serialize)]
struct RollrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    panel: PanelArgs,
    /// Observation window in months.
    #[arg(long)]
    x: u32,
    /// Outcome window in months.
    #[arg(long)]
    y: u32,
    #[arg(long, default_value = "rollrate.json")]
    output: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VintageArgs {
    #[command(flatten)]
    #[serde(flatten)]
    panel: PanelArgs,
    #[arg(long, default_value_t = 30)]
    dpd: u32,
    /// Largest monthly increase that still counts as flat.
    #[arg(long, default_value_t = DEFAULT_FLATTENING_EPSILON)]
    epsilon: f64,
    /// Number of consecutive flat increments required.
    #[arg(long, default_value_t = DEFAULT_FLATTENING_K)]
    k: u32,
    #[arg(long, default_value = "vintage.json")]
    output: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BaddefArgs {
    /// Definition text, e.g. "Ever 60+ DPD in 15 Months".
    #[arg(long)]
    definition: String,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Square transition matrix CSV with a `state,<states...>` header.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    accounts: usize,
    #[arg(long)]
    months: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "panel.csv")]
    output: PathBuf,
    /// Open period of the first vintage, YYYY-MM.
    #[arg(long, default_value = "2020-01")]
    start_period: String,
    /// Number of monthly vintages to spread accounts over.
    #[arg(long, default_value_t = 1)]
    vintages: usize,
    /// Allowed deviation of matrix row sums from 1 before renormalising.
    #[arg(long, default_value_t = STOCHASTIC_TOLERANCE)]
    row_tolerance: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Library(Error),
    Io { path: PathBuf, source: std::io::Error },
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Library(err)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Library(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data | ErrorKind::Io => 2,
                ErrorKind::Numerical => 3,
            },
            Failure::Io { .. } => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Library(e) => e.to_string(),
            Failure::Io { path, source } => format!("{}: {source}", path.display()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |source| Failure::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn configure_threads() -> Outcome {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))
}

fn load_config(path: Option<&Path>, inputs: &mut Inputs) -> std::result::Result<StateConfig, Failure> {
    match path {
        None => Ok(StateConfig::default()),
        Some(path) => {
            let bytes = inputs.read("config", path).map_err(io_at(path))?;
            let text =
                String::from_utf8(bytes).map_err(|_| Failure::Usage(format!("{} is not UTF-8", path.display())))?;
            Ok(StateConfig::from_json(&text)?)
        }
    }
}

fn load(args: &PanelArgs, inputs: &mut Inputs) -> std::result::Result<(Panel, Vec<String>), Failure> {
    let config = load_config(args.config.as_deref(), inputs)?;
    let bytes = inputs.read("panel", &args.input).map_err(io_at(&args.input))?;
    let loaded = load_panel(bytes.as_slice(), &config)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok((loaded.panel, loaded.warnings))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> delinq_chain::Result<()>) -> Outcome {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(io_at(path))
}

fn finish(report: &RunReport, path: &Path) -> Outcome {
    report.write(path).map_err(io_at(path))
}

fn analyze(args: &AnalyzeArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let (panel, warnings) = load(&args.panel, &mut inputs)?;
    let params = RecommendParams {
        threshold: args.threshold,
        min_row_count: args.min_row_count,
        ..RecommendParams::default()
    };
    let rec = recommend(&panel, &params)?;

    let ponr = rec.point_of_no_return;
    println!(
        "accounts: {} ({} removed as never delinquent)",
        panel.len(),
        rec.filter.map_or(0, |f| f.removed)
    );
    println!(
        "point of no return: {} (stay-or-improve probability {:.4})",
        ponr.dpd_label(),
        rec.stay_or_improve_probs[&ponr]
    );
    println!(
        "performance period: {:.2} months, rounded to {}",
        rec.performance_period_months_raw, rec.performance_period_months
    );
    println!("bad definition: {}", rec.bad_definition_text);
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }

    let mut report = RunReport::new(
        "analyze",
        json!({
            "args": args,
            "recommend": params,
            "state_config": panel.state_config,
        }),
        &inputs,
    );
    report.warnings = warnings.into_iter().chain(rec.warnings.iter().cloned()).collect();
    report.outputs = json!({ "recommendation": rec });
    finish(&report, &args.output)
}

fn matrix(args: &MatrixArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let (panel, mut warnings) = load(&args.panel, &mut inputs)?;
    let (panel, filter) = if args.all_accounts {
        (panel, None)
    } else {
        let (filtered, summary) = filter_never_delinquent(&panel);
        (filtered, Some(summary))
    };
    let counts = count_transitions(&panel);
    let matrix = normalize_counts(&counts)?;
    let diagnostics = validate_stochastic(&matrix, STOCHASTIC_TOLERANCE, args.min_row_count);
    let canonical = to_canonical(&matrix)?;
    let fundamental = match fundamental_matrix(&canonical) {
        Ok(m) => Some(m),
        Err(e) => {
            eprintln!("warning: {e}");
            warnings.push(e.to_string());
            None
        }
    };
    warnings.extend(diagnostics.iter().map(|d| d.to_string()));

    fs::create_dir_all(&args.out_dir).map_err(io_at(&args.out_dir))?;
    let dir = &args.out_dir;
    write_with(&dir.join("counts.csv"), |b| counts.write_csv(b))?;
    write_with(&dir.join("transition.csv"), |b| matrix.write_csv(b))?;
    write_with(&dir.join("canonical.csv"), |b| canonical.write_csv(b))?;
    if let Some(m) = &fundamental {
        write_with(&dir.join("fundamental.csv"), |b| m.write_csv(b))?;
    }
    println!(
        "{} transitions from {} accounts written to {}",
        counts.total(),
        panel.len(),
        dir.display()
    );

    let mut report = RunReport::new(
        "matrix",
        json!({ "args": args, "state_config": panel.state_config }),
        &inputs,
    );
    report.warnings = warnings;
    report.outputs = json!({
        "filter": filter,
        "counts": counts,
        "matrix": matrix,
        "diagnostics": diagnostics,
        "canonical": canonical,
        "fundamental": fundamental,
    });
    finish(&report, &dir.join("matrix.json"))
}

fn rollrate(args: &RollrateArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let (panel, warnings) = load(&args.panel, &mut inputs)?;
    let table = roll_rate(&panel, args.x, args.y)?;
    println!(
        "worst state in months 1-{}, write-off in months {}-{}",
        args.x,
        args.x + 1,
        args.x + args.y
    );
    for (state, row) in &table.rows {
        let rate = row.default_rate.map_or("n/a".to_string(), |r| format!("{r:.4}"));
        println!(
            "{:>10}: {rate} ({} of {} mature, {} immature)",
            state.dpd_label(),
            row.n_defaulted,
            row.n_accounts,
            row.n_immature
        );
    }
    if let Some(path) = &args.csv {
        write_with(path, |b| table.write_csv(b))?;
    }
    let mut report = RunReport::new(
        "rollrate",
        json!({ "args": args, "state_config": panel.state_config }),
        &inputs,
    );
    report.warnings = warnings;
    report.outputs = json!({ "roll_rate": table });
    finish(&report, &args.output)
}

fn vintage(args: &VintageArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let (panel, mut warnings) = load(&args.panel, &mut inputs)?;
    let curves = ever_dpd_curves(&panel, args.dpd)?;
    let mut flattening = Vec::new();
    for curve in &curves {
        let month = match detect_flattening(curve, args.epsilon, args.k) {
            Ok(m) => m,
            Err(Error::InsufficientData { .. }) => {
                warnings.push(format!(
                    "vintage {}: curve too short to test for flattening",
                    curve.vintage
                ));
                None
            }
            Err(e) => return Err(e.into()),
        };
        let shown = month.map_or("no flattening found".to_string(), |m| format!("flattens at month {m}"));
        println!(
            "{}: {} accounts, {shown}",
            curve.vintage,
            curve.points.first().map_or(0, |p| p.n_accounts)
        );
        flattening.push(json!({ "vintage": curve.vintage, "month_on_book": month }));
    }
    if let Some(path) = &args.csv {
        write_with(path, |b| write_curves_csv(&curves, b))?;
    }
    let mut report = RunReport::new(
        "vintage",
        json!({ "args": args, "state_config": panel.state_config }),
        &inputs,
    );
    report.warnings = warnings;
    report.outputs = json!({ "curves": curves, "flattening": flattening });
    finish(&report, &args.output)
}

fn baddef(args: &BaddefArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let config = load_config(args.config.as_deref(), &mut inputs)?;
    let def = parse_bad_definition_with(&args.definition, &config)?;
    println!("definition: {def}");
    let mut warnings = Vec::new();
    let rate = match &args.input {
        None => None,
        Some(path) => {
            let bytes = inputs.read("panel", path).map_err(io_at(path))?;
            let loaded = load_panel(bytes.as_slice(), &config)?;
            warnings = loaded.warnings;
            let rate = bad_rate(&loaded.panel, &def);
            match rate.rate {
                Some(r) => println!(
                    "bad rate: {r:.6} ({} of {} mature accounts, {} immature)",
                    rate.n_bad, rate.n_mature, rate.n_immature
                ),
                None => println!("bad rate: n/a (no mature accounts, {} immature)", rate.n_immature),
            }
            Some(rate)
        }
    };
    if let Some(path) = &args.output {
        let mut report = RunReport::new("baddef", json!({ "args": args, "state_config": config }), &inputs);
        report.warnings = warnings;
        report.outputs = json!({ "definition": def.to_string(), "bad_rate": rate });
        finish(&report, path)?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let mut inputs = Inputs::default();
    let config = load_config(args.config.as_deref(), &mut inputs)?;
    let bytes = inputs.read("matrix", &args.matrix).map_err(io_at(&args.matrix))?;
    let matrix = TransitionMatrix::read_csv(bytes.as_slice(), args.row_tolerance)?;
    let start: Period = args
        .start_period
        .parse()
        .map_err(|e: Error| Failure::Usage(format!("--start-period: {e}")))?;
    if args.vintages == 0 {
        return Err(Failure::Usage("--vintages must be at least 1".into()));
    }
    let mut spec =
        SimulationSpec::new(matrix, args.accounts, args.months, args.seed).with_vintages(start, args.vintages);
    spec.state_config = config;
    let panel = simulate_panel(&spec)?;
    write_with(&args.output, |b| write_panel_csv(&panel, b))?;
    let rows: usize = panel.histories.iter().map(|h| h.observations.len()).sum();
    println!(
        "{} accounts, {rows} rows written to {}",
        panel.len(),
        args.output.display()
    );
    if let Some(path) = &args.report {
        let mut report = RunReport::new(
            "simulate",
            json!({ "args": args, "state_config": spec.state_config }),
            &inputs,
        );
        report.outputs = json!({ "panel": args.output, "accounts": panel.len(), "rows": rows });
        finish(&report, path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Matrix(a) => matrix(a),
        Command::Rollrate(a) => rollrate(a),
        Command::Vintage(a) => vintage(a),
        Command::Baddef(a) => baddef(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
