//! Command-line front end for the `fblrate` library.
//!
//! Every run emits one record (JSON or CSV) and exits with 0 on success,
//! 2 on invalid input and 3 when an optimisation has no feasible point.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::error::ErrorKind;
use clap::{ArgMatches, CommandFactory, FromArgMatches};
use serde_json::{Map, Value};

use args::{Cli, Command, Format};
use output::{OutputRecord, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Runs the CLI against the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with_io<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::merge(argv) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_INVALID;
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_INVALID;
        }
    };
    let parameters = matches
        .subcommand()
        .map(|(name, sub)| echo_parameters(name, sub))
        .unwrap_or_default();

    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return match e {
                fblrate::Error::Infeasible(_) => EXIT_INFEASIBLE,
                _ => EXIT_INVALID,
            };
        }
    };
    let record = OutputRecord {
        schema_version: SCHEMA_VERSION.into(),
        command: cli.command.name().into(),
        parameters,
        results: outcome.results.to_json(),
        mc_metadata: outcome.mc,
    };
    let opts = cli.command.output();
    let written = match &opts.out {
        Some(path) => File::create(path).and_then(|f| {
            let mut w = BufWriter::new(f);
            emit(opts.format, &record, &outcome.results, &mut w)?;
            w.flush()
        }),
        None => emit(opts.format, &record, &outcome.results, out),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: cannot write output: {e}");
            EXIT_IO
        }
    }
}

fn emit<W: Write + ?Sized>(
    format: Format,
    record: &OutputRecord,
    results: &output::Results,
    w: &mut W,
) -> io::Result<()> {
    match format {
        Format::Json => output::write_json(record, w),
        Format::Csv => output::write_csv(results, w),
    }
}

fn dispatch(cmd: &Command) -> fblrate::Result<commands::Outcome> {
    match cmd {
        Command::Rate(a) => commands::rate(a),
        Command::Errprob(a) => commands::errprob(a),
        Command::SweepT(a) => commands::sweep_t(a),
        Command::SweepSnr(a) => commands::sweep_snr(a),
        Command::Antennas(a) => commands::antennas(a),
        Command::Aloha(a) => commands::aloha_plan(a),
        Command::Converse(a) => commands::converse(a),
        Command::McValidate(a) => commands::mc_validate(a),
    }
}

/// Every effective flag of the subcommand (explicit, from config, from the
/// environment or defaulted), keyed by its long name.
fn echo_parameters(name: &str, sub: &ArgMatches) -> Map<String, Value> {
    let mut params = Map::new();
    let root = Cli::command();
    let Some(def) = root.find_subcommand(name) else {
        return params;
    };
    for arg in def.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if matches!(long, "out" | "config") {
            continue;
        }
        let id = arg.get_id().as_str();
        let Ok(Some(raw)) = sub.try_get_raw(id) else { continue };
        let values: Vec<Value> = raw.map(|v| typed(&v.to_string_lossy())).collect();
        let value = if arg.get_value_delimiter().is_some() {
            Value::Array(values)
        } else {
            values.into_iter().next().unwrap_or(Value::Null)
        };
        params.insert(long.to_string(), value);
    }
    params
}

fn typed(raw: &str) -> Value {
    if let Ok(u) = raw.parse::<u64>() {
        return Value::from(u);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Value::from(i);
    }
    match raw.parse::<f64>() {
        Ok(x) if x.is_finite() => Value::from(x),
        _ => Value::from(raw),
    }
}
