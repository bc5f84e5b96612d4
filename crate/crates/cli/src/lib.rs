//! Batch command-line front-end: argument parsing, input loading, output
//! writing and run manifests.

pub mod args;
mod commands;
mod data;
mod error;
mod manifest;

use std::path::{Path, PathBuf};

use clap::Parser;

use args::{Cli, Command};
use data::Output;
use error::{CliError, CliResult};
use manifest::RunManifest;

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(p, e))
}

pub fn run(mut command: Command) -> CliResult<()> {
    if let Command::Rerun(r) = &command {
        let manifest = RunManifest::read(&r.manifest)?;
        let mut replay = manifest.flags;
        if let Some(dir) = &r.out {
            replay.set_out_dir(dir.clone());
        }
        return run(replay);
    }
    for p in command.inputs_mut() {
        *p = absolute(p)?;
    }
    let dir = absolute(command.out_dir().expect("every runnable command has an output directory"))?;
    command.set_out_dir(dir.clone());
    let out = Output::create(&dir)?;
    match &command {
        Command::Price(a) => commands::price(a, &out)?,
        Command::Moments(a) => commands::moments(a, &out)?,
        Command::Estimate(a) => commands::estimate(a, &out)?,
        Command::CompareStandards(a) => commands::compare(a, &out)?,
        Command::Fig1(a) => commands::fig1(a, &out)?,
        Command::Series(a) => commands::series(a, &out)?,
        Command::Rerun(_) => unreachable!(),
    }
    RunManifest::new(&command).write(out.dir())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code, reporting any error on stderr.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}
