use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Cli, CliError, CliResult};

pub const TOOL: &str = "suppresskit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Global options as they may appear in a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiet: Option<bool>,
}

/// A JSON config file. `run.json` records have the same shape.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub version: Option<String>,
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub global: GlobalFile,
    #[serde(default)]
    pub config: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError(format!("cannot read config {}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| CliError(format!("config {}: {e}", path.display())))?;
        if let Some(tool) = &file.tool {
            if tool != TOOL {
                return Err(CliError(format!("config {} was written by {tool:?}", path.display())));
            }
        }
        Ok(file)
    }
}

/// Resolved global options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Global {
    pub seed: u64,
    pub jobs: usize,
    pub format: OutputFormat,
    pub quiet: bool,
}

impl Global {
    pub fn resolve(cli: &Cli, file: Option<&GlobalFile>) -> CliResult<Self> {
        let file = file.cloned().unwrap_or_default();
        let jobs = match cli.jobs.or(file.jobs) {
            Some(0) => return Err(CliError("--jobs must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(Self {
            seed: cli.seed.or(file.seed).unwrap_or(0),
            jobs,
            format: cli.format.or(file.format).unwrap_or_default(),
            quiet: cli.quiet || file.quiet.unwrap_or(false),
        })
    }
}

/// Everything needed to replay a run. Worker count is left out because it
/// never changes outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub global: GlobalFile,
    pub config: Value,
}

impl RunRecord {
    pub fn new(command: &str, global: &Global, config: Value) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            global: GlobalFile {
                seed: Some(global.seed),
                jobs: None,
                format: Some(global.format),
                quiet: Some(global.quiet),
            },
            config,
        }
    }
}

/// Makes a path absolute against the current directory so a run record
/// replays from anywhere.
pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(|e| CliError(format!("cannot resolve {}: {e}", path.display())))
}

/// Inserts `value` under `key` when present.
pub fn put<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
    }
}
