use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::manifest::Manifest;
use suppresskit::metrics::{corpus_metrics, write_metrics_csv, Aggregation, CorpusMetrics, MetricParams};

use super::{put_path, SpecInput};
use crate::config::{absolute, put, Global, OutputFormat, RunRecord};
use crate::output::{create_dir, text_table, write_file, write_json, write_run_record};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "validate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AggregationFlag {
    Arithmetic,
    Harmonic,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Image directory or JSON-lines manifest.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory; receives `metrics.csv` (or `.json`) and `run.json`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Spec list: inline JSON array, spec file or preset [default: validation].
    #[arg(long)]
    pub specs: Option<String>,
    /// Local-variance tile side [default: 11].
    #[arg(long)]
    pub w: Option<usize>,
    /// High-frequency radius in frequency bins [default: 11].
    #[arg(long)]
    pub r: Option<f64>,
    /// Sobel kernel size [default: 11].
    #[arg(long)]
    pub k: Option<usize>,
    /// How texture and shape scores combine their metrics [default: arithmetic].
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationFlag>,
}

impl Args {
    pub fn overrides(&self) -> CliResult<Map<String, Value>> {
        let mut map = Map::new();
        put_path(&mut map, "input", &self.input);
        put_path(&mut map, "output", &self.output);
        put(&mut map, "specs", self.specs.clone());
        put(&mut map, "w", self.w);
        put(&mut map, "r", self.r);
        put(&mut map, "k", self.k);
        put(
            &mut map,
            "aggregation",
            self.aggregation.map(|a| match a {
                AggregationFlag::Arithmetic => Aggregation::Arithmetic,
                AggregationFlag::Harmonic => Aggregation::Harmonic,
            }),
        );
        Ok(map)
    }
}

fn default_specs() -> SpecInput {
    SpecInput::Text("validation".into())
}

fn default_w() -> usize {
    MetricParams::default().w
}

fn default_r() -> f64 {
    MetricParams::default().r
}

fn default_k() -> usize {
    MetricParams::default().k
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_specs")]
    pub specs: SpecInput,
    #[serde(default = "default_w")]
    pub w: usize,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        self.params().validate()?;
        let specs = self.specs.resolve()?;
        if specs.is_empty() {
            return Err(CliError("validate needs at least one spec".into()));
        }
        Ok(Self {
            input: absolute(&self.input)?,
            output: absolute(&self.output)?,
            specs: SpecInput::List(specs),
            ..self
        })
    }

    pub fn params(&self) -> MetricParams {
        MetricParams {
            w: self.w,
            r: self.r,
            k: self.k,
        }
    }
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let SpecInput::List(specs) = &config.specs else {
        unreachable!("normalized config holds a list")
    };
    let manifest = Manifest::open(&config.input)?;
    let ids = manifest.ids();
    let params = config.params();
    let runs: Vec<CorpusMetrics> = specs
        .iter()
        .map(|spec| {
            corpus_metrics(
                &ids,
                |id| manifest.load_image(id),
                spec,
                &params,
                config.aggregation,
                global.seed,
            )
        })
        .collect::<Result<_, _>>()?;

    create_dir(&config.output)?;
    let path = config.output.join(format!("metrics.{}", global.format.extension()));
    match global.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &runs)?;
            write_file(&path, buf)?;
        }
        OutputFormat::Json => write_json(&path, &runs)?,
    }
    write_run_record(&config.output, record)?;

    let mut failures = 0;
    for run in &runs {
        for (id, e) in &run.failures {
            eprintln!("failed: {} {}: {id}: {e}", run.transform, run.param_id);
            failures += 1;
        }
    }
    if !global.quiet {
        let rows: Vec<Vec<String>> = runs
            .iter()
            .map(|r| {
                let mut row = vec![r.transform.clone(), r.param_id.clone(), r.rows.len().to_string()];
                match &r.aggregate {
                    Some(a) => row.extend(a.fields().iter().map(|v| format!("{v:.3}"))),
                    None => row.extend(std::iter::repeat_n("-".to_string(), 6)),
                }
                row
            })
            .collect();
        print!(
            "{}",
            text_table(
                &["transform", "params", "n", "lv", "hfe", "essim", "gc", "texture", "shape"],
                &rows
            )
        );
        println!("wrote {}", path.display());
    }
    Ok(Outcome { failures })
}
