//! `simulpl` command-line harness.

mod data;
mod toy;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simulpl::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "simulpl",
    version,
    about = "Prefix-level preference data, latency-aware preference losses and read/write policy evaluation for simultaneous translation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    ExtractPrefixes(data::ExtractPrefixesArgs),
    Simulate(data::SimulateArgs),
    EvalLatency(data::EvalLatencyArgs),
    EvalPreference(data::EvalPreferenceArgs),
    Loss(toy::LossArgs),
    GradCheck(toy::GradCheckArgs),
    TrainToy(toy::TrainToyArgs),
    Tradeoff(toy::TradeoffArgs),
    Annotate(toy::AnnotateArgs),
}

/// Opens `path` for writing, or stdout when absent.
pub(crate) fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub(crate) fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_all(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let label = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut out = open_output(path)?;
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| io_err(&label, e))
}

/// Fixed-precision float cell; empty for undefined values.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub(crate) fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Validation(format!("CSV output: {e}"));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(format!("CSV output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 cells is UTF-8"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExtractPrefixes(a) => data::extract_prefixes(a),
        Command::Simulate(a) => data::simulate(a),
        Command::EvalLatency(a) => data::eval_latency(a),
        Command::EvalPreference(a) => data::eval_preference(a),
        Command::Loss(a) => toy::loss(a),
        Command::GradCheck(a) => toy::grad_check(a),
        Command::TrainToy(a) => toy::train_toy(a),
        Command::Tradeoff(a) => toy::tradeoff(a),
        Command::Annotate(a) => toy::annotate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
