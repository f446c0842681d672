//! `closeout`: run close-out auction scenarios from the command line.
//!
//! Exit codes: 0 completed, 1 reference mismatch, 2 invalid input,
//! 3 protocol error, 4 conservation failure.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use closeout_core::harness::{
    im_progression, load_scenario, run_table1, run_timed, sweep, table1_path, ErrorKind, RunReport, Scenario,
    ScenarioError, TABLE1_ROWS,
};
use closeout_core::Money;

const EXIT_MISMATCH: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_PROTOCOL: u8 = 3;
const EXIT_CONSERVATION: u8 = 4;

#[derive(Parser)]
#[command(name = "closeout", version, about = "Auction-based close-out of defaulted derivative portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Human,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its report.
    Run {
        path: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the initial margin (posted and reference).
        #[arg(long)]
        im: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Parse and validate a scenario file without running it.
    Validate { path: PathBuf },
    /// Reproduce the five reference auction rows.
    Table1 {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))]
        scenarios_dir: PathBuf,
    },
    /// Re-run a scenario over a range of IM values.
    Sweep {
        path: PathBuf,
        #[arg(long)]
        im_from: String,
        #[arg(long)]
        im_to: String,
        #[arg(long)]
        im_step: String,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn invalid(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_INVALID)
}

fn load(path: &PathBuf) -> Result<Scenario, ExitCode> {
    load_scenario(path).map_err(|e| {
        match &e {
            ScenarioError::Invalid(fields) => {
                eprintln!("error: {} is invalid", path.display());
                for f in fields {
                    eprintln!("  {}: {}", f.field, f.message);
                }
            }
            other => eprintln!("error: {}: {other}", path.display()),
        }
        ExitCode::from(EXIT_INVALID)
    })
}

fn parse_money(text: &str, scenario: &Scenario, flag: &str) -> Result<Money, ExitCode> {
    Money::parse(text, scenario.currency()).map_err(|e| invalid(format!("{flag}: {e}")))
}

fn exit_for(report: &RunReport) -> ExitCode {
    match report.report.error.as_ref().map(|e| e.kind) {
        None => ExitCode::SUCCESS,
        Some(ErrorKind::Protocol) => ExitCode::from(EXIT_PROTOCOL),
        Some(ErrorKind::Conservation) => ExitCode::from(EXIT_CONSERVATION),
    }
}

fn cmd_run(
    path: PathBuf,
    seed: Option<u64>,
    im: Option<String>,
    format: Format,
) -> Result<ExitCode, ExitCode> {
    let mut scenario = load(&path)?;
    if let Some(seed) = seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(text) = im {
        let im = parse_money(&text, &scenario, "--im")?;
        if im.is_negative() {
            return Err(invalid("--im must be non-negative"));
        }
        scenario = scenario.with_im(im);
    }
    let report = run_timed(&scenario);
    match format {
        Format::Human => emit(&report.to_human()),
        Format::Structured => emit(&format!("{}\n", report.to_json())),
    }
    Ok(exit_for(&report))
}

fn cmd_table1(dir: PathBuf, format: Format) -> Result<ExitCode, ExitCode> {
    for row in 1..=TABLE1_ROWS {
        let path = table1_path(&dir, row);
        if !path.is_file() {
            return Err(invalid(format!("missing reference scenario {}", path.display())));
        }
    }
    let rows = run_table1(&dir).map_err(invalid)?;
    let all_passed = rows.iter().all(|r| r.passed());
    match format {
        Format::Structured => {
            emit(&format!("{}\n", serde_json::to_string_pretty(&rows).expect("rows serialize")));
        }
        Format::Human => {
            let mut out = String::from("row  mq       trade            result\n");
            for r in &rows {
                let trade = match (&r.winner, &r.execution_price) {
                    (Some(w), Some(p)) => format!("(#{w}, {p})"),
                    _ => "-".to_string(),
                };
                let mq = r.market_quotation.as_deref().unwrap_or("-");
                let verdict = if r.passed() { "ok" } else { "MISMATCH" };
                out += &format!("{:<4} {:<8} {:<16} {}\n", r.row, mq, trade, verdict);
                for m in &r.mismatches {
                    out += &format!("     {}: expected {} got {}\n", m.field, m.expected, m.actual);
                }
            }
            emit(&out);
        }
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_MISMATCH) })
}

fn cmd_sweep(
    path: PathBuf,
    from: String,
    to: String,
    step: String,
    format: Format,
) -> Result<ExitCode, ExitCode> {
    let scenario = load(&path)?;
    let from = parse_money(&from, &scenario, "--im-from")?;
    let to = parse_money(&to, &scenario, "--im-to")?;
    let step = parse_money(&step, &scenario, "--im-step")?;
    let ims = im_progression(&from, &to, &step).map_err(invalid)?;
    let rows = sweep(&scenario, &ims);
    match format {
        Format::Structured => {
            emit(&format!("{}\n", serde_json::to_string_pretty(&rows).expect("rows serialize")));
        }
        Format::Human => {
            let mut out = String::from("im        decision                trade cost  residual\n");
            for r in &rows {
                let decision = match (&r.decision, &r.error) {
                    (_, Some(e)) => format!("error: {e}"),
                    (Some(d), None) => format!("{d:?}"),
                    (None, None) => "-".to_string(),
                };
                let cost = r.trade_cost.as_ref().map_or("-".to_string(), Money::render);
                let residual = r.residual.as_ref().map_or("-".to_string(), Money::render);
                out += &format!("{:<9} {:<23} {:<11} {}\n", r.im.render(), decision, cost, residual);
            }
            emit(&out);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { path, seed, im, format } => cmd_run(path, seed, im, format),
        Command::Validate { path } => load(&path).map(|s| {
            emit(&format!("{}: ok ({} bidders)\n", path.display(), s.bidders.len()));
            ExitCode::SUCCESS
        }),
        Command::Table1 { format, scenarios_dir } => cmd_table1(scenarios_dir, format),
        Command::Sweep { path, im_from, im_to, im_step, format } => {
            cmd_sweep(path, im_from, im_to, im_step, format)
        }
    };
    result.unwrap_or_else(|code| code)
}
