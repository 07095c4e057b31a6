//! Command-line front end: parse/emit/defuse formula files and run
//! scenarios to CSV traces.
//!
//! Exit codes: 0 success, 1 parse error, 2 validation/configuration error,
//! 3 numeric error during simulation. Diagnostics go to stderr, data to
//! stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hfpn::engine::{self, EngineError, SimError};
use hfpn::formula;
use hfpn::fusion;
use hfpn::net::{ArcKind, Net};
use hfpn::scenario::{Scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "hfpn",
    about = "Hybrid functional Petri nets: formulas, fusion, simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula file and list the denoted net.
    Parse { file: PathBuf },
    /// Parse a formula file and print its canonical formula.
    Emit { file: PathBuf },
    /// Decompose a formula file into structural units, one per line.
    Defuse { file: PathBuf },
    /// Execute a scenario file and write its CSV trace.
    Run {
        file: PathBuf,
        /// Override the scenario's step count.
        #[arg(long)]
        steps: Option<u64>,
        /// Override the scenario's step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the trace output path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Comma-separated columns (`p<id>`, `t<id>_v`) to summarize;
        /// defaults to all.
        #[arg(long)]
        watch: Option<String>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Parse { file } => cmd_parse(&file),
        Command::Emit { file } => cmd_emit(&file),
        Command::Defuse { file } => cmd_defuse(&file),
        Command::Run {
            file,
            steps,
            dt,
            trace,
            watch,
        } => cmd_run(&file, steps, dt, trace, watch),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn parse_formula_file(path: &Path) -> Result<formula::ParseOutcome, Failure> {
    let text = formula::strip_comments(&read_file(path)?);
    formula::parse_detailed(&text)
        .map_err(|err| Failure::new(1, format!("{}:{}: {err}", path.display(), err.offset())))
}

fn cmd_parse(path: &Path) -> Result<(), Failure> {
    let outcome = parse_formula_file(path)?;
    let net = &outcome.net;
    if !outcome.fresh_ids.is_empty() {
        let ids: Vec<String> = outcome.fresh_ids.iter().map(|i| i.to_string()).collect();
        eprintln!(
            "warning: {} empty slot(s) completed with fresh id(s) {}",
            outcome.fresh_ids.len(),
            ids.join(", ")
        );
    }
    print_net(net);
    println!("canonical: {}", formula::emit(net));
    Ok(())
}

fn print_net(net: &Net) {
    for place in net.places() {
        println!("place p{} m={}", place.id, place.marking);
    }
    for tr in net.transitions() {
        match tr.kind {
            hfpn::net::TransitionKind::Discrete => {
                println!("transition t{} d={}", tr.id, tr.delay)
            }
            hfpn::net::TransitionKind::Continuous => {
                println!("transition t{} v={}", tr.id, tr.speed)
            }
        }
    }
    for arc in net.arcs() {
        let kind = match arc.kind {
            ArcKind::Normal => "normal",
            ArcKind::Inhibitory => "inhibitory",
            ArcKind::Associative => "associative",
        };
        println!(
            "arc {} -> {} {} k={} w={}",
            arc.source, arc.target, kind, arc.threshold, arc.weight
        );
    }
    println!("nodes: {}, arcs: {}", net.node_count(), net.arc_count());
}

fn cmd_emit(path: &Path) -> Result<(), Failure> {
    let outcome = parse_formula_file(path)?;
    println!("{}", formula::emit(&outcome.net));
    Ok(())
}

fn cmd_defuse(path: &Path) -> Result<(), Failure> {
    let outcome = parse_formula_file(path)?;
    let (units, _residue) = fusion::defuse(&outcome.net);
    for unit in &units {
        println!("{unit}");
    }
    Ok(())
}

fn scenario_failure(err: ScenarioError) -> Failure {
    let code = match &err {
        ScenarioError::Formula(_) => 1,
        _ => 2,
    };
    Failure::new(code, err.to_string())
}

fn engine_failure(err: EngineError) -> Failure {
    let code = match &err {
        EngineError::Sim(SimError::NonFiniteSpeed(_))
        | EngineError::Sim(SimError::NegativeMarkingBug { .. }) => 3,
        _ => 2,
    };
    Failure::new(code, err.to_string())
}

fn cmd_run(
    path: &Path,
    steps: Option<u64>,
    dt: Option<f64>,
    trace: Option<PathBuf>,
    watch: Option<String>,
) -> Result<(), Failure> {
    let text = read_file(path)?;
    let scenario = Scenario::parse(&text).map_err(scenario_failure)?;
    let mut config = scenario.to_run_config();
    if let Some(steps) = steps {
        config.steps = steps;
    }
    if let Some(dt) = dt {
        config.dt = dt;
    }
    let trace_path = trace
        .or_else(|| scenario.trace_path.clone())
        .unwrap_or_else(|| path.with_extension("csv"));

    let result = engine::run(config).map_err(engine_failure)?;
    let csv = result.trace.to_csv();
    std::fs::write(&trace_path, &csv)
        .map_err(|e| Failure::new(2, format!("{}: {e}", trace_path.display())))?;

    let trace = &result.trace;
    let mut columns: Vec<String> = trace
        .place_columns
        .iter()
        .map(|p| format!("p{p}"))
        .chain(trace.speed_columns.iter().map(|t| format!("t{t}_v")))
        .collect();
    if let Some(watch) = watch {
        let wanted: Vec<&str> = watch.split(',').map(str::trim).collect();
        columns.retain(|c| wanted.contains(&c.as_str()));
    }
    let value_of = |row: &engine::TraceRow, name: &str| -> f64 {
        if let Some(idx) = trace
            .place_columns
            .iter()
            .position(|p| format!("p{p}") == name)
        {
            row.markings[idx]
        } else {
            let idx = trace
                .speed_columns
                .iter()
                .position(|t| format!("t{t}_v") == name)
                .unwrap();
            row.speeds[idx]
        }
    };

    println!(
        "trace written to {} ({} rows)",
        trace_path.display(),
        trace.rows.len()
    );
    let last = trace.rows.last().expect("runs record at least one row");
    let finals: Vec<String> = columns
        .iter()
        .map(|c| format!("{c}={}", engine::fmt_sig(value_of(last, c))))
        .collect();
    println!("final {}", finals.join(" "));
    let ranges: Vec<String> = columns
        .iter()
        .map(|c| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in &trace.rows {
                let v = value_of(row, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            format!("{c}=[{},{}]", engine::fmt_sig(lo), engine::fmt_sig(hi))
        })
        .collect();
    println!("range {}", ranges.join(" "));
    Ok(())
}
