//! `laparo`: run, validate and summarize scripted scenarios.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use laparo_core::scenario::{
    load_scenario, read_csv, run_with, summarize, LogWriter, Metrics, Overrides, Scenario,
    ScenarioError, SummaryConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "laparo",
    version,
    about = "Laparoscope holder scenario simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios, writing `<name>.csv` and `<name>.metrics.json`.
    Run(RunArgs),
    /// Parse and check scenario files without simulating.
    Validate { files: Vec<PathBuf> },
    /// Recompute metrics from a log.
    Summarize {
        log: PathBuf,
        /// Scenario supplying the completion predicate and pixel dead zone.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    no_adapt: bool,
    #[arg(long)]
    no_tracking: bool,
    #[arg(long)]
    continuous_nonlinearity: bool,
}

const EXIT_INVALID: u8 = 1;
const EXIT_ABORT: u8 = 2;

#[derive(Serialize)]
struct Report<'a> {
    scenario: &'a str,
    seed: u64,
    aborted: Option<String>,
    metrics: &'a Metrics,
}

enum Outcome {
    Done,
    Aborted,
}

fn load_with(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut s = load_scenario(path)?;
    s.apply(overrides);
    s.validate()?;
    Ok(s)
}

fn run_one(scenario: &Scenario, out: &Path) -> Result<Outcome, String> {
    let csv_path = out.join(format!("{}.csv", scenario.name));
    let file = File::create(&csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    let mut writer = LogWriter::new(BufWriter::new(file));
    let mut write_err = None;
    let (records, abort) = run_with(scenario, |r| {
        if write_err.is_none() {
            write_err = writer.write(r).err();
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = write_err {
        return Err(format!("{}: {e}", csv_path.display()));
    }
    writer
        .finish()
        .map_err(|e| format!("{}: {e}", csv_path.display()))?;

    let Ok(metrics) = summarize(&records, &scenario.summary_config()) else {
        let reason = abort.map(|e| e.to_string()).unwrap_or_default();
        eprintln!("{}: aborted before the first tick: {reason}", scenario.name);
        return Ok(Outcome::Aborted);
    };
    let report = Report {
        scenario: &scenario.name,
        seed: scenario.seed,
        aborted: abort.as_ref().map(|e| e.to_string()),
        metrics: &metrics,
    };
    let json_path = out.join(format!("{}.metrics.json", scenario.name));
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
    std::fs::write(&json_path, json + "\n").map_err(|e| format!("{}: {e}", json_path.display()))?;

    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{}: {} ticks, completion {} s, settle {} s, max RCM error {:.2e} m, steady ΔF {:.3} N",
        scenario.name,
        metrics.ticks,
        fmt(metrics.completion_time),
        fmt(metrics.settle_time),
        metrics.max_rcm_error,
        metrics.steady_residual,
    );
    match abort {
        Some(e) => {
            eprintln!("{}: aborted: {e}", scenario.name);
            Ok(Outcome::Aborted)
        }
        None => Ok(Outcome::Done),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let overrides = Overrides {
        seed: args.seed,
        dt: args.dt,
        duration: args.duration,
        no_adapt: args.no_adapt,
        no_tracking: args.no_tracking,
        continuous_nonlinearity: args.continuous_nonlinearity,
    };
    let mut scenarios = Vec::new();
    for f in &args.files {
        match load_with(f, &overrides) {
            Ok(s) => scenarios.push(s),
            Err(e) => {
                eprintln!("{}: {e}", f.display());
                return ExitCode::from(EXIT_INVALID);
            }
        }
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("{}: {e}", args.out.display());
        return ExitCode::from(EXIT_INVALID);
    }
    let outcomes: Vec<_> = thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(|| run_one(s, &args.out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut code = 0;
    for o in outcomes {
        match o {
            Ok(Outcome::Done) => {}
            Ok(Outcome::Aborted) => code = code.max(EXIT_ABORT),
            Err(e) => {
                eprintln!("{e}");
                code = code.max(EXIT_INVALID);
            }
        }
    }
    ExitCode::from(code)
}

fn validate(files: &[PathBuf]) -> ExitCode {
    let mut ok = true;
    for f in files {
        match load_scenario(f) {
            Ok(s) => println!("{}: ok ({} ticks)", f.display(), s.ticks()),
            Err(e) => {
                eprintln!("{}: {e}", f.display());
                ok = false;
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    }
}

fn summarize_log(log: &Path, scenario: Option<&Path>) -> ExitCode {
    let config = match scenario.map(load_scenario).transpose() {
        Ok(s) => s.map(|s| s.summary_config()).unwrap_or_default(),
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let records = match File::open(log)
        .map_err(|e| e.to_string())
        .and_then(|f| read_csv(BufReader::new(f)).map_err(|e| e.to_string()))
    {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", log.display());
            return ExitCode::from(EXIT_INVALID);
        }
    };
    summary(&records, &config)
}

fn summary(records: &[laparo_core::scenario::LogRecord], config: &SummaryConfig) -> ExitCode {
    match summarize(records, config) {
        Ok(m) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&m).expect("metrics serialize")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Validate { files } => validate(&files),
        Command::Summarize { log, scenario } => summarize_log(&log, scenario.as_deref()),
    }
}
