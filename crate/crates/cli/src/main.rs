#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod failure;
mod settings;

use args::{Cli, Command};
use failure::Failure;

fn common(cmd: &Command) -> &args::CommonArgs {
    match cmd {
        Command::Derive(c) => c,
        Command::RadialCheck(a) => &a.common,
        Command::Verdict(a) => &a.common,
        Command::Scan(a) => &a.common,
        Command::Minimize(a) => &a.common,
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let jobs = common(&cli.command).jobs;
    if jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::failed(format!("thread pool: {e}")))?;
    let report = pool.install(|| match &cli.command {
        Command::Derive(a) => commands::derive(a),
        Command::RadialCheck(a) => commands::radial_check(a),
        Command::Verdict(a) => commands::verdict(a),
        Command::Scan(a) => commands::scan(a),
        Command::Minimize(a) => commands::minimize(a),
    })?;

    let text = report.render();
    match &common(&cli.command).out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::failed(format!("stdout: {e}")))?;
        }
    }
    Ok(report.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
