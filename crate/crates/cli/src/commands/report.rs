use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use suppresskit::reliance::{
    aggregate_domain, fraction_more_reliant, per_class_curves, DomainSummary, Normalization, RelianceCurve,
    SweepResult,
};

use super::NormalizationFlag;
use crate::config::{absolute, put, Global, RunRecord};
use crate::output::{create_dir, num, text_table, write_file, write_run_record, write_table};
use crate::{CliError, CliResult, Outcome};

pub const NAME: &str = "report";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `[dataset=]<path>`: a sweep output directory, a `sweep.json` or a curve JSON file.
    #[arg(long = "input", short)]
    pub inputs: Vec<String>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Relative-accuracy normalization [default: chance].
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationFlag>,
    /// Two transform kinds `A,B`: per model, the fraction of classes more reliant on A than on B.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub compare: Option<Vec<String>>,
}

impl Args {
    pub fn overrides(&self) -> CliResult<Map<String, Value>> {
        let mut map = Map::new();
        if !self.inputs.is_empty() {
            put(&mut map, "inputs", Some(&self.inputs));
        }
        if let Some(o) = &self.output {
            put(&mut map, "output", Some(o));
        }
        put(&mut map, "normalization", self.normalization.map(Normalization::from));
        put(&mut map, "compare", self.compare.clone());
        Ok(map)
    }
}

/// A dataset name and the file or directory holding its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub dataset: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Resolved(ReportInput),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub inputs: Vec<InputSpec>,
    pub output: PathBuf,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<Vec<String>>,
}

fn default_dataset(path: &Path) -> String {
    let dir = if path.is_dir() {
        Some(path)
    } else {
        // <dataset>/<model>/<file>.json
        path.parent().and_then(Path::parent)
    };
    dir.and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

impl Config {
    pub fn normalized(self) -> CliResult<Self> {
        if self.inputs.is_empty() {
            return Err(CliError("report needs at least one --input".into()));
        }
        if let Some(c) = &self.compare {
            if c.len() != 2 || c[0] == c[1] {
                return Err(CliError("--compare takes two different transform kinds, A,B".into()));
            }
        }
        let inputs = self
            .inputs
            .into_iter()
            .map(|i| {
                Ok(InputSpec::Resolved(match i {
                    InputSpec::Resolved(r) => ReportInput {
                        path: absolute(&r.path)?,
                        ..r
                    },
                    InputSpec::Text(t) => {
                        let (name, path) = match t.split_once('=') {
                            Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
                            None => (None, PathBuf::from(&t)),
                        };
                        let path = absolute(&path)?;
                        ReportInput {
                            dataset: name.unwrap_or_else(|| default_dataset(&path)),
                            path,
                        }
                    }
                }))
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self {
            inputs,
            output: absolute(&self.output)?,
            ..self
        })
    }
}

/// Results found under one input.
enum Loaded {
    Sweep(SweepResult),
    Curve(RelianceCurve),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn load_input(path: &Path) -> CliResult<Vec<Loaded>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path().join("sweep.json")))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError(format!("{} holds no <model>/sweep.json", path.display())));
        }
        return files.iter().map(|f| Ok(Loaded::Sweep(read_json(f)?))).collect();
    }
    let value: Value = read_json(path)?;
    let loaded = if value.get("curves").is_some() {
        Loaded::Sweep(serde_json::from_value(value).map_err(|e| CliError(format!("{}: {e}", path.display())))?)
    } else {
        Loaded::Curve(serde_json::from_value(value).map_err(|e| CliError(format!("{}: {e}", path.display())))?)
    };
    Ok(vec![loaded])
}

/// Aggregate of one transform across datasets and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    /// `dataset:model` of every member curve, in input order.
    pub curves: Vec<String>,
    #[serde(flatten)]
    pub summary: DomainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub model: String,
    pub more_reliant_on: String,
    pub than: String,
    pub fraction: Option<f64>,
}

pub fn run(config: &Config, global: &Global, record: &RunRecord) -> CliResult<Outcome> {
    let mut curves: Vec<(String, RelianceCurve)> = Vec::new();
    let mut sweeps: Vec<(String, SweepResult)> = Vec::new();
    for input in &config.inputs {
        let InputSpec::Resolved(input) = input else {
            unreachable!("normalized config holds resolved inputs")
        };
        for loaded in load_input(&input.path)? {
            match loaded {
                Loaded::Sweep(s) => {
                    for c in &s.curves {
                        curves.push((format!("{}:{}", input.dataset, s.model), c.renormalized(config.normalization)?));
                    }
                    sweeps.push((input.dataset.clone(), s));
                }
                Loaded::Curve(c) => {
                    curves.push((format!("{}:{}", input.dataset, c.model), c.renormalized(config.normalization)?))
                }
            }
        }
    }

    let mut transforms: Vec<String> = Vec::new();
    for (_, c) in &curves {
        if !transforms.contains(&c.transform) {
            transforms.push(c.transform.clone());
        }
    }
    create_dir(&config.output)?;
    let mut summary = Vec::new();
    for t in &transforms {
        let members: Vec<&(String, RelianceCurve)> = curves.iter().filter(|(_, c)| &c.transform == t).collect();
        let owned: Vec<RelianceCurve> = members.iter().map(|(_, c)| c.clone()).collect();
        let domain = aggregate_domain(&owned)?;
        let report = DomainReport {
            curves: members.iter().map(|(n, _)| n.clone()).collect(),
            summary: domain,
        };
        let rows: Vec<Vec<String>> = (0..report.summary.strengths.len())
            .map(|i| {
                vec![
                    num(report.summary.strengths[i]),
                    num(report.summary.mean[i]),
                    num(report.summary.std[i]),
                    report.summary.members.to_string(),
                ]
            })
            .collect();
        write_table(
            &config.output,
            &format!("domain-{t}"),
            global.format,
            &["strength", "mean", "std", "members"],
            &rows,
            &report,
        )?;
        let named: Vec<(String, &RelianceCurve)> = members.iter().map(|(n, c)| (n.clone(), c)).collect();
        write_file(
            &config.output.join(format!("domain-{t}.svg")),
            super::sweep::curve_svg(t, &named),
        )?;
        for i in 0..report.summary.strengths.len() {
            summary.push(vec![
                t.clone(),
                format!("{}", report.summary.strengths[i]),
                format!("{:.4}", report.summary.mean[i]),
                format!("{:.4}", report.summary.std[i]),
                report.summary.members.to_string(),
            ]);
        }
    }

    let mut comparisons = Vec::new();
    if let Some(pair) = &config.compare {
        for (dataset, s) in &sweeps {
            let a = per_class_curves(s, &pair[0], config.normalization)?;
            let b = per_class_curves(s, &pair[1], config.normalization)?;
            comparisons.push(ComparisonRow {
                dataset: dataset.clone(),
                model: s.model.clone(),
                more_reliant_on: pair[0].clone(),
                than: pair[1].clone(),
                fraction: fraction_more_reliant(&a, &b),
            });
        }
        if comparisons.is_empty() {
            return Err(CliError("--compare needs sweep results, not bare curve files".into()));
        }
        let rows: Vec<Vec<String>> = comparisons
            .iter()
            .map(|c| {
                vec![
                    c.dataset.clone(),
                    c.model.clone(),
                    c.more_reliant_on.clone(),
                    c.than.clone(),
                    c.fraction.map(num).unwrap_or_default(),
                ]
            })
            .collect();
        write_table(
            &config.output,
            "class-reliance",
            global.format,
            &["dataset", "model", "more_reliant_on", "than", "fraction"],
            &rows,
            &comparisons,
        )?;
    }
    write_run_record(&config.output, record)?;

    if !global.quiet {
        print!("{}", text_table(&["transform", "strength", "mean", "std", "members"], &summary));
        for c in &comparisons {
            println!(
                "{} {}: {} of classes more reliant on {} than {}",
                c.dataset,
                c.model,
                c.fraction.map_or("n/a".into(), |f| format!("{f:.3}")),
                c.more_reliant_on,
                c.than
            );
        }
    }
    Ok(Outcome::default())
}
