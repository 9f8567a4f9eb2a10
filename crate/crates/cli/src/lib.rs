//! Command-line front end for suppresskit.
//!
//! Every subcommand resolves its options from flags, an optional JSON config
//! file and defaults (in that order of precedence), echoes the resolved
//! configuration to stderr and records it as `run.json` in its output
//! directory. Passing that `run.json` back through `--config` with no
//! subcommand replays the run.

pub mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{Map, Value};

pub use config::{ConfigFile, Global, OutputFormat, RunRecord};
use commands::{overlay, report, stats, sweep, transform, validate};

#[derive(Debug, Parser)]
#[command(name = "suppresskit", version, about = "Feature-suppression transforms, metrics and reliance curves")]
pub struct Cli {
    /// Global seed mixed into every per-image seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Suppress the config echo and summaries.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// JSON config file. A `run.json` with no subcommand replays that run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply one transform to every image of a corpus.
    Transform(transform::Args),
    /// Suppression metrics of transforms on a corpus.
    Validate(validate::Args),
    /// Relative-accuracy curves from predictor outputs.
    Sweep(sweep::Args),
    /// Grid-overlay versus patch-shuffle accuracies.
    OverlayControl(overlay::Args),
    /// Paired t-test, Cohen's d and confidence intervals for two CSV columns.
    Stats(stats::Args),
    /// Aggregate reliance curves across datasets.
    Report(report::Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transform(_) => transform::NAME,
            Command::Validate(_) => validate::NAME,
            Command::Sweep(_) => sweep::NAME,
            Command::OverlayControl(_) => overlay::NAME,
            Command::Stats(_) => stats::NAME,
            Command::Report(_) => report::NAME,
        }
    }

    fn overrides(&self) -> CliResult<Map<String, Value>> {
        match self {
            Command::Transform(a) => a.overrides(),
            Command::Validate(a) => a.overrides(),
            Command::Sweep(a) => a.overrides(),
            Command::OverlayControl(a) => a.overrides(),
            Command::Stats(a) => a.overrides(),
            Command::Report(a) => a.overrides(),
        }
    }
}

#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl From<suppresskit::Error> for CliError {
    fn from(e: suppresskit::Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<String> for CliError {
    fn from(s: String) -> Self {
        CliError(s)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Result of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcome {
    /// Items that failed without aborting the run.
    pub failures: usize,
}

enum Resolved {
    Transform(transform::Config),
    Validate(validate::Config),
    Sweep(sweep::Config),
    Overlay(overlay::Config),
    Stats(stats::Config),
    Report(report::Config),
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, map: Map<String, Value>) -> CliResult<T> {
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError(format!("{name} options: {e}")))
}

impl Resolved {
    fn new(name: &str, map: Map<String, Value>) -> CliResult<Self> {
        Ok(match name {
            transform::NAME => Resolved::Transform(parse::<transform::Config>(name, map)?.normalized()?),
            validate::NAME => Resolved::Validate(parse::<validate::Config>(name, map)?.normalized()?),
            sweep::NAME => Resolved::Sweep(parse::<sweep::Config>(name, map)?.normalized()?),
            overlay::NAME => Resolved::Overlay(parse::<overlay::Config>(name, map)?.normalized()?),
            stats::NAME => Resolved::Stats(parse::<stats::Config>(name, map)?.normalized()?),
            report::NAME => Resolved::Report(parse::<report::Config>(name, map)?.normalized()?),
            other => return Err(CliError(format!("unknown command {other:?}"))),
        })
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Resolved::Transform(c) => serde_json::to_value(c),
            Resolved::Validate(c) => serde_json::to_value(c),
            Resolved::Sweep(c) => serde_json::to_value(c),
            Resolved::Overlay(c) => serde_json::to_value(c),
            Resolved::Stats(c) => serde_json::to_value(c),
            Resolved::Report(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize")
    }

    fn execute(&self, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
        match self {
            Resolved::Transform(c) => transform::run(c, global, record),
            Resolved::Validate(c) => validate::run(c, global, record),
            Resolved::Sweep(c) => sweep::run(c, global, record),
            Resolved::Overlay(c) => overlay::run(c, global, record),
            Resolved::Stats(c) => stats::run(c, global, record),
            Resolved::Report(c) => report::run(c, global, record),
        }
    }
}

/// Resolves options and runs the selected command.
pub fn run(cli: Cli) -> CliResult<Outcome> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let name = match (&cli.command, file.as_ref().and_then(|f| f.command.as_deref())) {
        (Some(c), Some(f)) if f != c.name() => {
            return Err(CliError(format!(
                "config file is for `{f}`, not `{}`",
                c.name()
            )))
        }
        (Some(c), _) => c.name().to_string(),
        (None, Some(f)) => f.to_string(),
        (None, None) => {
            return Err(CliError(
                "no subcommand given (and no replayable --config); see --help".into(),
            ))
        }
    };

    let mut map = file.as_ref().map(|f| f.config.clone()).unwrap_or_default();
    if let Some(c) = &cli.command {
        map.extend(c.overrides()?);
    }
    let global = Global::resolve(&cli, file.as_ref().map(|f| &f.global))?;
    let resolved = Resolved::new(&name, map)?;
    let record = RunRecord::new(&name, &global, resolved.to_value());
    if !global.quiet {
        eprintln!(
            "suppresskit {name}: jobs={} {}",
            global.jobs,
            serde_json::to_string(&record).expect("record serializes")
        );
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(global.jobs)
        .build()
        .map_err(|e| CliError(format!("cannot start {} worker threads: {e}", global.jobs)))?;
    pool.install(|| resolved.execute(&global, &record))
}
