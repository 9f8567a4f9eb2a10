use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::manifest::Manifest;
use suppresskit::plot::{line_plot_svg, Series};
use suppresskit::predictor::open_predictor;
use suppresskit::reliance::{
    per_class_curves, sweep, DecisionRule, EvalConfig, Normalization, RelianceCurve, SweepOptions,
    SweepResult, Task, DEFAULT_TRIALS,
};

use super::{
    absolute_opt, default_true, load_mapping, put_path, resolve_predictors, rule_override, NormalizationFlag,
    PredictorInput, RuleFlag, SpecInput, TaskFlag,
};
use crate::config::{absolute, put, Global, RunRecord};
use crate::output::{create_dir, num, text_table, write_file, write_json, write_run_record, write_table};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "sweep";

pub const CURVE_HEADER: [&str; 4] = ["strength", "a_sup", "rel_acc", "label"];

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Labelled JSON-lines manifest.
    #[arg(long, short)]
    pub manifest: Option<PathBuf>,
    /// `[name=]file:<dir>` or `[name=]cmd:<command>`; repeat for several models.
    #[arg(long = "predictor", short)]
    pub predictors: Vec<String>,
    /// Spec list: inline JSON array, spec file or preset name.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Fine-to-entry category mapping JSON.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Decision rule [default: threshold].
    #[arg(long, value_enum)]
    pub rule: Option<RuleFlag>,
    /// Threshold on the summed category softmax [default: 0.5].
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub task: Option<TaskFlag>,
    /// Relative-accuracy normalization [default: chance].
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationFlag>,
    /// Class count for the chance level; defaults to the mapping or score width.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Monte-Carlo trials for the multi-label chance level [default: 1000].
    #[arg(long)]
    pub chance_trials: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Skip the SVG plots.
    #[arg(long)]
    pub no_svg: bool,
    /// Also write per-class curves.
    #[arg(long)]
    pub per_class: bool,
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
        put(&mut map, "sweep", self.sweep.clone());
        put_path(&mut map, "mapping", &self.mapping);
        put(&mut map, "decision_rule", rule_override(self.rule, self.theta)?);
        put(&mut map, "task", self.task.map(Task::from));
        put(&mut map, "normalization", self.normalization.map(Normalization::from));
        put(&mut map, "num_classes", self.num_classes);
        put(&mut map, "chance_trials", self.chance_trials);
        put_path(&mut map, "output", &self.output);
        if self.no_svg {
            map.insert("svg".into(), Value::Bool(false));
        }
        if self.per_class {
            map.insert("per_class".into(), Value::Bool(true));
        }
        put_path(&mut map, "work_dir", &self.work_dir);
        Ok(map)
    }
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifest: PathBuf,
    pub predictors: Vec<PredictorInput>,
    pub sweep: SpecInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(default)]
    pub decision_rule: DecisionRule,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default = "default_trials")]
    pub chance_trials: usize,
    pub output: PathBuf,
    #[serde(default = "default_true")]
    pub svg: bool,
    #[serde(default)]
    pub per_class: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_dir: Option<PathBuf>,
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        let specs = self.sweep.resolve()?;
        if specs.is_empty() {
            return Err(CliError("the sweep lists no specs".into()));
        }
        self.decision_rule.validate()?;
        let output = absolute(&self.output)?;
        Ok(Self {
            manifest: absolute(&self.manifest)?,
            predictors: resolve_predictors(self.predictors)?
                .into_iter()
                .map(PredictorInput::Handle)
                .collect(),
            sweep: SpecInput::List(specs),
            mapping: absolute_opt(self.mapping)?,
            work_dir: Some(match self.work_dir {
                Some(d) => absolute(&d)?,
                None => output.join("images"),
            }),
            output,
            ..self
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            decision_rule: self.decision_rule,
            task: self.task,
        }
    }
}

pub fn curve_rows(curve: &RelianceCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| vec![num(p.strength), num(p.accuracy), num(p.relative_accuracy), p.label.clone()])
        .collect()
}

pub fn curve_svg(transform: &str, curves: &[(String, &RelianceCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(name, c)| Series {
            name: name.clone(),
            points: c.points.iter().map(|p| (p.strength, p.relative_accuracy)).collect(),
        })
        .collect();
    line_plot_svg(transform, "strength", "relative accuracy", &series)
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let SpecInput::List(specs) = &config.sweep else {
        unreachable!("normalized config holds a list")
    };
    let manifest = Manifest::open(&config.manifest)?;
    let mapping = load_mapping(config.mapping.as_ref())?;
    let options = SweepOptions {
        normalization: config.normalization,
        global_seed: global.seed,
        work_dir: config.work_dir.clone(),
        num_classes: config.num_classes,
        chance_trials: config.chance_trials,
    };

    let mut results: Vec<SweepResult> = Vec::new();
    for input in &config.predictors {
        let PredictorInput::Handle(handle) = input else {
            unreachable!("normalized config holds handles")
        };
        let mut predictor = open_predictor(handle)?;
        let result = sweep(
            &manifest,
            predictor.as_mut(),
            specs,
            &config.eval_config(),
            mapping.as_ref(),
            &options,
        )?;
        results.push(result);
    }

    create_dir(&config.output)?;
    let mut summary = Vec::new();
    for result in &results {
        let dir = config.output.join(&result.model);
        write_json(&dir.join("sweep.json"), result)?;
        for curve in &result.curves {
            let stem = format!("curve-{}", curve.transform);
            write_table(&dir, &stem, global.format, &CURVE_HEADER, &curve_rows(curve), curve)?;
            if config.per_class {
                let report = per_class_curves(result, &curve.transform, config.normalization)?;
                write_json(&dir.join(format!("per_class-{}.json", curve.transform)), &report)?;
            }
            for p in &curve.points {
                summary.push(vec![
                    result.model.clone(),
                    p.label.clone(),
                    format!("{:.4}", p.accuracy),
                    format!("{:.4}", p.relative_accuracy),
                ]);
            }
        }
    }
    if config.svg {
        let mut transforms: Vec<&str> = Vec::new();
        for c in results.iter().flat_map(|r| &r.curves) {
            if !transforms.contains(&c.transform.as_str()) {
                transforms.push(&c.transform);
            }
        }
        for t in transforms {
            let curves: Vec<(String, &RelianceCurve)> = results
                .iter()
                .flat_map(|r| r.curves.iter().filter(|c| c.transform == t).map(|c| (r.model.clone(), c)))
                .collect();
            write_file(&config.output.join(format!("curve-{t}.svg")), curve_svg(t, &curves))?;
        }
    }
    write_run_record(&config.output, record)?;

    if !global.quiet {
        for r in &results {
            println!(
                "{}: baseline accuracy {:.4}, chance {:.4}",
                r.model, r.baseline.accuracy, r.chance
            );
        }
        print!("{}", text_table(&["model", "condition", "a_sup", "rel_acc"], &summary));
    }
    Ok(Outcome::default())
}
