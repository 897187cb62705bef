//! `--config` handling: flat `key=value` files, or a JSON record written by an
//! earlier run. Config values are turned back into flags and appended to argv
//! only when the command line does not already set them.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;
use serde_json::Value;

use crate::args::Cli;

const SUBCOMMANDS: &[&str] = &[
    "rate",
    "errprob",
    "sweep-T",
    "sweep-snr",
    "antennas",
    "aloha",
    "converse",
    "mc-validate",
];

// keys that are never taken from a config file
const SKIPPED: &[&str] = &["config", "out"];

#[derive(Debug, Default)]
struct ConfigFile {
    command: Option<String>,
    entries: Vec<(String, String)>,
}

/// Returns argv with config entries merged in, or a diagnostic.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = find_config(&strings) else {
        return Ok(argv);
    };
    let cfg = read_config(Path::new(&path))?;

    let mut out = argv;
    let mut subcommand = strings.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned();
    if subcommand.is_none() {
        if let Some(cmd) = &cfg.command {
            if !SUBCOMMANDS.contains(&cmd.as_str()) {
                return Err(format!("config names unknown command {cmd:?}"));
            }
            out.insert(1.min(out.len()), OsString::from(cmd));
            subcommand = Some(cmd.clone());
        }
    }
    let Some(subcommand) = subcommand else {
        // let clap report the missing subcommand
        return Ok(out);
    };

    let root = Cli::command();
    let sub = root
        .find_subcommand(&subcommand)
        .ok_or_else(|| format!("unknown command {subcommand:?}"))?;
    let accepted: Vec<String> = sub.get_arguments().filter_map(|a| a.get_long()).map(String::from).collect();

    for (key, value) in cfg.entries {
        let key = key.trim_start_matches("--").to_string();
        if SKIPPED.contains(&key.as_str()) {
            continue;
        }
        if !accepted.contains(&key) {
            return Err(format!("config key {key:?} is not accepted by {subcommand}"));
        }
        if present(&strings, &key) || conflicts(&strings, &key) {
            continue;
        }
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(value));
    }
    Ok(out)
}

fn find_config(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn present(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefixed = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&prefixed))
}

// --snr and --snr-db exclude each other; whichever the command line uses wins
fn conflicts(args: &[String], key: &str) -> bool {
    match key {
        "snr" => present(args, "snr-db"),
        "snr-db" => present(args, "snr"),
        _ => false,
    }
}

fn read_config(path: &Path) -> Result<ConfigFile, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    if text.trim_start().starts_with('{') {
        parse_record(&text).map_err(|e| format!("config {}: {e}", path.display()))
    } else {
        parse_key_values(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

fn parse_key_values(text: &str) -> Result<ConfigFile, String> {
    let mut cfg = ConfigFile::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "command" {
            cfg.command = Some(value.to_string());
        } else {
            cfg.entries.push((key.to_string(), value.to_string()));
        }
    }
    Ok(cfg)
}

fn parse_record(text: &str) -> Result<ConfigFile, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut cfg = ConfigFile {
        command: v.get("command").and_then(Value::as_str).map(String::from),
        entries: Vec::new(),
    };
    let params = v
        .get("parameters")
        .and_then(Value::as_object)
        .ok_or("JSON config needs a \"parameters\" object")?;
    for (key, value) in params {
        if let Some(s) = flag_value(value) {
            cfg.entries.push((key.clone(), s));
        }
    }
    Ok(cfg)
}

fn flag_value(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(flag_value).collect();
            Some(parts.join(","))
        }
        Value::Object(_) => None,
    }
}
