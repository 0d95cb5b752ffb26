//! The `aidr` command-line tool: training, evaluation and scanning
//! commands for the three engines, plus the HTTP scan endpoint.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

pub mod args;
mod malware;
mod netclf;
mod report;
pub mod serve;
pub mod settings;
mod wids;

use std::ffi::OsString;
use std::path::Path;

use aidr_core::opsd::{AlertHub, JsonlSink, StdoutSink};
use anyhow::Result;
use clap::Parser;

use args::{AlertArgs, Cli, Command};
use settings::{Settings, UsageError};

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let s = Settings::from_cli(cli)?;
    match &cli.command {
        Command::Netclf { cmd } => netclf::run(&s, cmd),
        Command::Wids { cmd } => wids::run(&s, cmd),
        Command::Malware { cmd } => malware::run(&s, cmd),
        Command::Report { cmd } => report::run(cmd),
    }
}

fn alert_hub(s: &Settings, a: &AlertArgs) -> AlertHub {
    let mut hub = AlertHub::new();
    if !a.quiet {
        hub = hub.with(StdoutSink::default());
    }
    if let Some(p) = s.alerts_file(a.alerts.as_deref()) {
        hub = hub.with(JsonlSink::new(p));
    }
    hub
}

/// Regular files directly inside `dir`, sorted by name.
fn list_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            v.push(entry.path());
        }
    }
    v.sort();
    Ok(v)
}
