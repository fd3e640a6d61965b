mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, Settings};

/// Bad user input: a missing file, malformed data or an invalid setting.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser)]
#[command(
    name = "ciderbtw",
    version,
    about = "Caption distinctiveness metrics and reweighting artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load annotations and splits, build vocabulary and document frequencies into a cache
    Ingest,
    /// Build similar-image sets for each requested split
    Simsets,
    /// Score generated captions: CIDEr, CIDErBtw and optionally R@k
    Eval,
    /// Write the caption/word weight manifest for the training split
    Weights,
    /// Time similar-set construction and report pruning statistics
    Bench,
    /// Export vocabulary and word-frequency curve tables
    Stats,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ciderbtw_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(cli.settings)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Simsets => commands::simsets(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Weights => commands::weights(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Stats => commands::stats(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // skip causes whose text the outer message already repeats
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    msg = format!("{msg}: {text}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
