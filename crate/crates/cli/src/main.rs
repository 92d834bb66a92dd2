//! `scenmon`: filter highD recordings into disturbance traces, evaluate
//! scenario specifications on them, and debug individual formulas.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use scenmon_core::pipeline::report::matches_csv;
use scenmon_core::pipeline::{
    evaluate, filter_dir, read_traces, render_table, with_jobs, write_traces, check_params, DisturbTrace, EvaluationReport,
    PipelineError, RunStats, StoreError,
};
use scenmon_core::road::{RoadNetwork, Zone};
use scenmon_core::scenario::catalog;
use scenmon_core::stl::exemplify::{exemplify, ExemplifyConfig, ExemplifyError, ExemplifyOutcome, SignalTemplate};
use scenmon_core::stl::{eval_series, parse, Bindings, EvalContext, EvalError, Formula, ParseError};
use scenmon_core::synth;
use scenmon_core::trace::{read_csv, write_csv, Trace};
use scenmon_service::{ServeError, ServiceConfig};

mod config;

use config::{Config, Overrides};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Params(m) => CliError::Usage(m),
            PipelineError::Ingest(e) => CliError::Data(e.to_string()),
            PipelineError::Store(e) => e.into(),
            PipelineError::Eval(e) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "scenmon", version, about = "Scenario monitoring over highway traffic recordings")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest recordings and write the trimmed disturbance traces to `trace_dir`
    Filter,
    /// Evaluate the spec sets on the traces in `trace_dir` and write reports to `out_dir`
    Evaluate,
    /// `filter` and `evaluate` in one go
    Run,
    /// Evaluate one formula on one trace
    Check(CheckArgs),
    /// Search for a trace satisfying a formula
    Exemplify(ExemplifyArgs),
    /// Print the scenario formulas of the selected spec sets
    Catalog {
        /// One JSON object per line
        #[arg(long)]
        json: bool,
    },
    /// Write generated data
    Generate {
        #[command(subcommand)]
        what: Generate,
    },
    /// Serve the HTTP debugging API on `addr` until interrupted
    Serve,
}

#[derive(clap::Args)]
struct FormulaArgs {
    /// Formula text
    #[arg(long, conflicts_with = "formula_file", required_unless_present = "formula_file")]
    formula: Option<String>,
    #[arg(long, value_name = "FILE")]
    formula_file: Option<PathBuf>,
    /// Vehicle binding NAME=ID (names default to themselves)
    #[arg(long = "vehicle", value_name = "NAME=ID")]
    vehicles: Vec<String>,
    /// Lane binding NAME=LANE
    #[arg(long = "lane", value_name = "NAME=LANE")]
    lanes: Vec<String>,
}

#[derive(clap::Args)]
struct CheckArgs {
    #[command(flatten)]
    formula: FormulaArgs,
    /// Trace CSV
    #[arg(long, value_name = "FILE")]
    trace: PathBuf,
    /// Print the robustness of the formula at every sample
    #[arg(long)]
    series: bool,
    /// Print every subformula
    #[arg(long)]
    subformulas: bool,
}

#[derive(clap::Args)]
struct ExemplifyArgs {
    #[command(flatten)]
    formula: FormulaArgs,
    /// Also require this formula to be violated
    #[arg(long)]
    against: Option<String>,
    /// Signal template (JSON); overrides the vehicle and timing flags
    #[arg(long, value_name = "FILE")]
    template: Option<PathBuf>,
    /// Vehicles of the generated trace
    #[arg(long = "id", default_value = "SV")]
    ids: Vec<String>,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Largest number of formula evaluations
    #[arg(long)]
    budget: Option<usize>,
    /// Where to write the trace CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Generate {
    /// A small highD-layout corpus of generated disturbances
    Corpus { dir: PathBuf },
    /// One generated trace of a scenario
    Trace {
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// The lanelet map of a road zone
    Map {
        /// main, merge or depart
        #[arg(long, default_value = "main")]
        zone: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(&cli.overrides)?;
    match cli.command {
        Command::Filter => with_jobs(cfg.jobs, || cmd_filter(&cfg)),
        Command::Evaluate => with_jobs(cfg.jobs, || cmd_evaluate(&cfg)),
        Command::Run => with_jobs(cfg.jobs, || cmd_run(&cfg)),
        Command::Check(a) => cmd_check(&cfg, &a),
        Command::Exemplify(a) => cmd_exemplify(&cfg, &a),
        Command::Catalog { json } => cmd_catalog(&cfg, json),
        Command::Generate { what } => cmd_generate(&cfg, what),
        Command::Serve => cmd_serve(&cfg),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn filter_to(cfg: &Config, trace_dir: &Path) -> Result<Vec<DisturbTrace>, CliError> {
    let data_dir = cfg.require("data_dir", &cfg.data_dir)?;
    let params = cfg.params();
    let (traces, stats) = filter_dir(data_dir, &params, cfg.frame_rate)?;
    write_traces(trace_dir, &traces, &params, stats.to_map())?;
    print!("{}", stats_text(&stats, traces.len(), trace_dir));
    Ok(traces)
}

fn stats_text(stats: &RunStats, traces: usize, dir: &Path) -> String {
    let mut out = String::new();
    for (k, v) in stats.to_map() {
        out += &format!("{k}: {v}\n");
    }
    out + &format!("{traces} traces written to {}\n", dir.display())
}

fn evaluate_to(cfg: &Config, traces: &[DisturbTrace], out_dir: &Path) -> Result<(), CliError> {
    let params = cfg.params();
    let mut reports: Vec<EvaluationReport> = Vec::new();
    let mut sets = Vec::new();
    for spec in cfg.spec_sets()? {
        let (r, m) = evaluate(&spec, traces, &params).map_err(eval_error)?;
        sets.push((spec.variant.name().to_string(), m));
        reports.push(r);
    }
    let table = render_table(&reports);
    let jsonl: String = reports.iter().map(|r| r.json_line() + "\n").collect();
    write_file(&out_dir.join("table.txt"), table.as_bytes())?;
    write_file(&out_dir.join("report.jsonl"), jsonl.as_bytes())?;
    write_file(&out_dir.join("matches.csv"), matches_csv(&sets).as_bytes())?;
    print!("{table}");
    Ok(())
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::UnboundName { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn cmd_filter(cfg: &Config) -> Result<(), CliError> {
    filter_to(cfg, cfg.require("trace_dir", &cfg.trace_dir)?).map(|_| ())
}

fn cmd_evaluate(cfg: &Config) -> Result<(), CliError> {
    let trace_dir = cfg.require("trace_dir", &cfg.trace_dir)?;
    let out_dir = cfg.require("out_dir", &cfg.out_dir)?;
    let (manifest, traces) = read_traces(trace_dir)?;
    check_params(&manifest.params, &cfg.params())?;
    evaluate_to(cfg, &traces, out_dir)
}

fn cmd_run(cfg: &Config) -> Result<(), CliError> {
    let trace_dir = cfg.require("trace_dir", &cfg.trace_dir)?;
    let out_dir = cfg.require("out_dir", &cfg.out_dir)?;
    let traces = filter_to(cfg, trace_dir)?;
    evaluate_to(cfg, &traces, out_dir)
}

/// `%g`-style formatting with six significant digits.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

fn read_formula(a: &FormulaArgs) -> Result<String, CliError> {
    match (&a.formula, &a.formula_file) {
        (Some(f), _) => Ok(f.clone()),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        (None, None) => Err(CliError::Usage("no formula given".into())),
    }
}

fn parse_formula(text: &str) -> Result<Formula, CliError> {
    parse(text).map_err(|e| CliError::Usage(render_parse_error(text, &e)))
}

fn render_parse_error(text: &str, e: &ParseError) -> String {
    let pos = e.position().min(text.chars().count());
    format!("{e}\n  {}\n  {}^", text.trim_end(), " ".repeat(pos))
}

fn pairs(flag: &str, items: &[String]) -> Result<Vec<(String, String)>, CliError> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| CliError::Usage(format!("--{flag} expects NAME=ID, got `{s}`")))
        })
        .collect()
}

fn load_map(cfg: &Config) -> Result<RoadNetwork, CliError> {
    match &cfg.map {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            RoadNetwork::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        }
        None => Ok(synth::main_road()),
    }
}

fn bindings(trace: &Trace, a: &FormulaArgs) -> Result<Bindings, CliError> {
    let mut b = Bindings::new();
    for id in trace.vehicle_ids() {
        b = b.vehicle(id, id);
    }
    for (name, id) in pairs("vehicle", &a.vehicles)? {
        b = b.vehicle(&name, &id);
    }
    for (name, lane) in pairs("lane", &a.lanes)? {
        b = b.lane(&name, &lane);
    }
    Ok(b)
}

fn cmd_check(cfg: &Config, a: &CheckArgs) -> Result<(), CliError> {
    let text = read_formula(&a.formula)?;
    let f = parse_formula(&text)?;
    let file = fs::File::open(&a.trace).map_err(|e| CliError::Data(format!("{}: {e}", a.trace.display())))?;
    let trace = read_csv(std::io::BufReader::new(file), None).map_err(|e| CliError::Data(format!("{}: {e}", a.trace.display())))?;
    let road = load_map(cfg)?;
    let ctx = EvalContext::new(&trace, &road, bindings(&trace, &a.formula)?)
        .with_rss(cfg.rss)
        .with_mode(cfg.mode)
        .with_convention(cfg.angle_convention);
    let report = eval_series(&f, &ctx).map_err(eval_error)?;
    let root = &report.nodes[0];
    let mut out = format!("verdict: {}\nrobustness: {}\n", root.satisfied[0], sig6(root.robustness[0]));
    if a.series {
        out += "time\tsatisfied\trobustness\n";
        for (k, t) in report.times.iter().enumerate() {
            out += &format!("{}\t{}\t{}\n", sig6(*t), root.satisfied[k], sig6(root.robustness[k]));
        }
    }
    if a.subformulas {
        out += "id\tsatisfied\trobustness\tsubformula\n";
        for n in &report.nodes {
            out += &format!("{}\t{}\t{}\t{}\n", n.id, n.satisfied[0], sig6(n.robustness[0]), n.label);
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_exemplify(cfg: &Config, a: &ExemplifyArgs) -> Result<(), CliError> {
    let text = read_formula(&a.formula)?;
    let mut f = parse_formula(&text)?;
    if let Some(after) = &a.against {
        f = Formula::and(f, Formula::not(parse_formula(after)?));
    }
    let template = match &a.template {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => {
            let mut t = SignalTemplate::single(&a.ids[0], a.duration, a.dt);
            for id in &a.ids[1..] {
                let mut v = t.vehicles[0].clone();
                v.id = id.clone();
                t.vehicles.push(v);
            }
            t
        }
    };
    let road = load_map(cfg)?;
    let lanes = pairs("lane", &a.formula.lanes)?.into_iter().collect();
    let search = match a.budget {
        Some(b) => ExemplifyConfig::with_budget(b, cfg.seed),
        None => ExemplifyConfig {
            seed: cfg.seed,
            ..ExemplifyConfig::default()
        },
    };
    let outcome = exemplify(&f, &template, &road, &lanes, &cfg.rss, &search).map_err(|e| match e {
        ExemplifyError::Eval(e) => eval_error(e),
        other => CliError::Usage(other.to_string()),
    })?;
    match outcome {
        ExemplifyOutcome::Found {
            trace,
            robustness,
            evaluations,
        } => {
            let mut csv = Vec::new();
            write_csv(&trace, &mut csv).map_err(|e| CliError::Internal(e.to_string()))?;
            match &a.out {
                Some(p) => write_file(p, &csv)?,
                None => std::io::stdout().write_all(&csv).map_err(|e| CliError::Internal(e.to_string()))?,
            }
            eprintln!("found: robustness {} after {evaluations} evaluations", sig6(robustness));
        }
        ExemplifyOutcome::Failure {
            best_robustness,
            evaluations,
            ..
        } => {
            eprintln!("no example found: best robustness {} after {evaluations} evaluations", sig6(best_robustness));
        }
    }
    Ok(())
}

fn cmd_catalog(cfg: &Config, json: bool) -> Result<(), CliError> {
    let mut out = String::new();
    for spec in cfg.spec_sets()? {
        for e in catalog(spec.variant, &cfg.scenario).into_iter().filter(|e| spec.indices.contains(&e.index)) {
            if json {
                out += &serde_json::to_string(&e).expect("catalog entries serialize");
                out.push('\n');
            } else {
                out += &format!("{}\ts{}\t{}\n", spec.variant, e.index, e.formula);
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn cmd_generate(cfg: &Config, what: Generate) -> Result<(), CliError> {
    match what {
        Generate::Corpus { dir } => {
            scenmon_core::pipeline::fixture::write_corpus(&dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
            println!("corpus written to {}", dir.display());
        }
        Generate::Trace { index, out } => {
            if !(1..=scenmon_core::scenario::SCENARIO_COUNT).contains(&index) {
                return Err(CliError::Usage(format!("scenario index {index} is outside 1..=24")));
            }
            let case = synth::generate(index, cfg.seed);
            let mut csv = Vec::new();
            write_csv(&case.trace, &mut csv).map_err(|e| CliError::Internal(e.to_string()))?;
            write_file(&out, &csv)?;
            let road = synth::road_for(index);
            if let Some(b) = case.bindings(&road) {
                let lanes: Vec<String> = b.lanes.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("scenario {index}: lanes {}", lanes.join(" "));
            }
        }
        Generate::Map { zone, out } => {
            let zone = match zone.as_str() {
                "main" => Zone::Main,
                "merge" => Zone::Merge,
                "depart" => Zone::Depart,
                other => return Err(CliError::Usage(format!("unknown zone `{other}`; expected main, merge or depart"))),
            };
            write_file(&out, synth::zone_road(zone).to_json().as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_serve(cfg: &Config) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    let service = ServiceConfig {
        params: cfg.params(),
        ..ServiceConfig::default()
    };
    rt.block_on(async {
        let listener = scenmon_service::bind(cfg.addr).await.map_err(serve_error)?;
        let addr = listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        scenmon_service::serve(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(serve_error)
    })?;
    rt.shutdown_timeout(Duration::from_secs(5));
    Ok(())
}

fn serve_error(e: ServeError) -> CliError {
    match e {
        ServeError::PortInUse(_) | ServeError::Bind { .. } => CliError::Data(e.to_string()),
        ServeError::Io(e) => CliError::Internal(e.to_string()),
    }
}
