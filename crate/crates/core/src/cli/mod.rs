//! Command-line front end.
//!
//! Each subcommand reads its inputs, writes its artifacts into `--out`, and
//! finishes with a `manifest.json` recording the resolved configuration, input
//! digests, output digests, counters, and the conventions the run relied on.
//! Exit status: 0 success, 2 missing input, 3 validation failure, 4 internal
//! invariant breach, 1 other I/O failure.

mod commands;
mod config;
mod output;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use config::{parse_config_file, Flags, KList, RunConfig, WeightList, DEFAULT_THRESHOLD};
pub use output::{Manifest, Outputs, DECISIONS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fixation", version, about = "Topic-fixation scoring for interaction logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Validate and normalize an event log.
    Ingest,
    /// Cluster topic phrases and attach cluster ids to events.
    Cluster,
    /// Cluster-quality statistics over several K.
    SweepK,
    /// Windowed metrics, fixation timelines and per-user summaries.
    Score,
    /// Cross-validated threshold for the composite score.
    Calibrate,
    /// Cross-validated thresholds for every metric subset.
    Ablate,
    /// Topic diversity and coherence.
    TopicEval,
    /// Synthetic cohort with gold labels and embeddings.
    Synth,
    /// Flagged users, daily trends and frequency tables.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Cluster => "cluster",
            Command::SweepK => "sweep-k",
            Command::Score => "score",
            Command::Calibrate => "calibrate",
            Command::Ablate => "ablate",
            Command::TopicEval => "topic-eval",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// Runs one command with resolved settings, returning the manifest.
pub fn execute(command: Command, config: &RunConfig) -> Result<Manifest, CliError> {
    let run = || commands::dispatch(command, config);
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invariant(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = RunConfig::resolve(cli.flags).and_then(|config| execute(cli.command, &config));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("fixation {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
