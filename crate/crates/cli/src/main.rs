//! `expander-lab`: reproducible experiments on Cayley graphs of congruence
//! quotients of subgroups of `SL_d(Z)`.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::Command;
use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "expander-lab", version, about)]
struct Args {
    command: Command,
    /// INI-style `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Moduli: `5,7`, `3..9` or `primes:5..61`.
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Any config key, repeatable: `--set tol=1e-9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn overrides(args: &Args) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {kv}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let named = [
        ("q", args.q.clone()),
        ("seed", args.seed.map(|s| s.to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("format", args.format.clone()),
    ];
    out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    Ok(out)
}

fn execute(args: &Args) -> Result<(), CliError> {
    let cfg = Config::load(args.config.as_deref(), &overrides(args)?)?;
    let format = cfg.string("format").unwrap_or_else(|| "json".into());
    if format != "json" && format != "csv" {
        return Err(CliError::Config(format!("unknown format `{format}`")));
    }
    let report = commands::run(args.command, &cfg)?;
    let text = match format.as_str() {
        "csv" => report.to_csv().map_err(|e| CliError::Compute(e.to_string()))?,
        _ => report.to_json(),
    };
    match cfg.string("out") {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(
                PathBuf::from(dir).join(format!("{}.{format}", args.command.name())),
                text,
            )?;
        }
        None => print!("{text}"),
    }
    if !report.violations.is_empty() {
        return Err(CliError::Invariant(report.violations.join("; ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
                "command": args.command.name(),
            });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
