use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::manifest::Manifest;
use suppresskit::predictor::open_predictor;
use suppresskit::reliance::{evaluate_condition, DecisionRule, EvalConfig, Task};
use suppresskit::transforms::TransformSpec;

use super::{absolute_opt, load_mapping, put_path, resolve_predictors, rule_override, PredictorInput, RuleFlag};
use crate::config::{absolute, put, Global, RunRecord};
use crate::output::{create_dir, num, text_table, write_run_record, write_table};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "overlay-control";

pub const HEADER: [&str; 4] = ["model", "grid", "overlay", "patch_shuffle"];

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Labelled JSON-lines manifest.
    #[arg(long, short)]
    pub manifest: Option<PathBuf>,
    /// `[name=]file:<dir>` or `[name=]cmd:<command>`; repeat for several models.
    #[arg(long = "predictor", short)]
    pub predictors: Vec<String>,
    /// Grid sizes [default: 2,4,8].
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    /// Fine-to-entry category mapping JSON.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Decision rule [default: threshold].
    #[arg(long, value_enum)]
    pub rule: Option<RuleFlag>,
    /// Threshold on the summed category softmax [default: 0.5].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Where transformed images go for subprocess predictors [default: <output>/images].
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

impl Args {
    pub fn overrides(&self) -> CliResult<Map<String, Value>> {
        let mut map = Map::new();
        put_path(&mut map, "manifest", &self.manifest);
        if !self.predictors.is_empty() {
            put(&mut map, "predictors", Some(&self.predictors));
        }
        put(&mut map, "grids", self.grids.clone());
        put_path(&mut map, "mapping", &self.mapping);
        put(&mut map, "decision_rule", rule_override(self.rule, self.theta)?);
        put_path(&mut map, "output", &self.output);
        put_path(&mut map, "work_dir", &self.work_dir);
        Ok(map)
    }
}

fn default_grids() -> Vec<usize> {
    vec![2, 4, 8]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifest: PathBuf,
    pub predictors: Vec<PredictorInput>,
    #[serde(default = "default_grids")]
    pub grids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub decision_rule: DecisionRule,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_dir: Option<PathBuf>,
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        if self.grids.is_empty() {
            return Err(CliError("--grids lists no grid sizes".into()));
        }
        let mut sorted = self.grids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.grids.len() {
            return Err(CliError("--grids lists a grid size twice".into()));
        }
        for &g in &self.grids {
            TransformSpec::grid_overlay(g).validate()?;
        }
        self.decision_rule.validate()?;
        let output = absolute(&self.output)?;
        Ok(Self {
            manifest: absolute(&self.manifest)?,
            predictors: resolve_predictors(self.predictors)?
                .into_iter()
                .map(PredictorInput::Handle)
                .collect(),
            mapping: absolute_opt(self.mapping)?,
            work_dir: Some(match self.work_dir {
                Some(d) => absolute(&d)?,
                None => output.join("images"),
            }),
            output,
            ..self
        })
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub model: String,
    pub grid: usize,
    pub overlay: f64,
    pub patch_shuffle: f64,
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let manifest = Manifest::open(&config.manifest)?;
    let mapping = load_mapping(config.mapping.as_ref())?;
    let eval = EvalConfig {
        decision_rule: config.decision_rule,
        task: Task::SingleLabel,
    };
    let mut rows = Vec::new();
    for input in &config.predictors {
        let PredictorInput::Handle(handle) = input else {
            unreachable!("normalized config holds handles")
        };
        let mut predictor = open_predictor(handle)?;
        for &grid in &config.grids {
            let mut accuracy = |spec: TransformSpec| {
                evaluate_condition(
                    &manifest,
                    predictor.as_mut(),
                    &spec,
                    &eval,
                    mapping.as_ref(),
                    config.work_dir.as_deref(),
                    global.seed,
                )
                .map(|c| c.accuracy)
            };
            let overlay = accuracy(TransformSpec::grid_overlay(grid))?;
            let patch_shuffle = accuracy(TransformSpec::patch_shuffle(grid))?;
            rows.push(OverlayRow {
                model: handle.name.clone(),
                grid,
                overlay,
                patch_shuffle,
            });
        }
    }

    create_dir(&config.output)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.model.clone(), r.grid.to_string(), num(r.overlay), num(r.patch_shuffle)])
        .collect();
    let path = write_table(&config.output, "overlay", global.format, &HEADER, &table, &rows)?;
    write_run_record(&config.output, record)?;
    if !global.quiet {
        let shown: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.grid.to_string(),
                    format!("{:.3}", r.overlay),
                    format!("{:.3}", r.patch_shuffle),
                ]
            })
            .collect();
        print!("{}", text_table(&HEADER, &shown));
        println!("wrote {}", path.display());
    }
    Ok(Outcome::default())
}
