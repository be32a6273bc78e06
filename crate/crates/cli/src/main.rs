//! `huepair` command-line front end.
//!
//! Every command writes `config.json` with its resolved arguments next to its
//! outputs and is a pure function of those arguments, its input files and
//! `--seed`.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Failure;

/// Root for outputs when `--out` is not given.
const OUT_ENV: &str = "HUEPAIR_OUT";

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sources(_) => "sources",
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Localize(_) => "localize",
        Command::Eval(_) => "eval",
        Command::Render(_) => "render",
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let name = command_name(&cli.command);
    let out = cli.global.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from).join(name)
    });
    let seed = cli.global.seed;
    match &cli.command {
        Command::Sources(a) => commands::sources(a, seed, &out),
        Command::Synth(a) => commands::synth(a, seed, &out),
        Command::Train(a) => commands::train(a, seed, &out),
        Command::Localize(a) => commands::localize(a, seed, &out),
        Command::Eval(a) => commands::eval(a, seed, &out),
        Command::Render(a) => commands::render(a, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
