//! Subcommands. Each module has clap `Args`, a serde `Config` holding the
//! resolved options, and `run`.

pub mod overlay;
pub mod report;
pub mod stats;
pub mod sweep;
pub mod transform;
pub mod validate;

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use suppresskit::predictor::{PredictorHandle, PredictorMode};
use suppresskit::reliance::{CategoryMapping, DecisionRule, Normalization, Task};
use suppresskit::transforms::presets::{preset, PRESET_NAMES};
use suppresskit::transforms::TransformSpec;

use crate::config::absolute;
use crate::{CliError, CliResult};

/// Transform specs: inline JSON (object or array), a preset name, or a
/// JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecInput {
    List(Vec<TransformSpec>),
    One(TransformSpec),
    Text(String),
}

fn specs_from_value(value: Value, origin: &str) -> CliResult<Vec<TransformSpec>> {
    let specs = match value {
        Value::Array(_) => serde_json::from_value(value),
        other => serde_json::from_value(other).map(|s| vec![s]),
    }
    .map_err(|e| CliError(format!("{origin}: {e}")))?;
    Ok(specs)
}

impl SpecInput {
    pub fn resolve(self) -> CliResult<Vec<TransformSpec>> {
        let specs = match self {
            SpecInput::List(v) => v,
            SpecInput::One(s) => vec![s],
            SpecInput::Text(text) => {
                let t = text.trim();
                if let Some(specs) = preset(t) {
                    specs
                } else if t.starts_with('[') || t.starts_with('{') {
                    let v: Value = serde_json::from_str(t).map_err(|e| CliError(format!("spec JSON: {e}")))?;
                    specs_from_value(v, "spec JSON")?
                } else {
                    let raw = fs::read_to_string(t).map_err(|e| {
                        CliError(format!(
                            "{t:?} is neither a preset ({}) nor a readable spec file: {e}",
                            PRESET_NAMES.join(", ")
                        ))
                    })?;
                    let v: Value = serde_json::from_str(&raw).map_err(|e| CliError(format!("{t}: {e}")))?;
                    specs_from_value(v, t)?
                }
            }
        };
        for s in &specs {
            s.validate()?;
        }
        Ok(specs)
    }
}

/// A predictor given as a handle object or as `[name=]file:<dir>` /
/// `[name=]cmd:<command>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictorInput {
    Handle(PredictorHandle),
    Text(String),
}

pub fn resolve_predictors(inputs: Vec<PredictorInput>) -> CliResult<Vec<PredictorHandle>> {
    if inputs.is_empty() {
        return Err(CliError("at least one --predictor is required".into()));
    }
    let mut names = BTreeSet::new();
    let mut handles = Vec::with_capacity(inputs.len());
    for input in inputs {
        let mut h = match input {
            PredictorInput::Handle(h) => h,
            PredictorInput::Text(t) => t.parse()?,
        };
        if let PredictorMode::File(dir) = &h.mode {
            h.mode = PredictorMode::File(absolute(dir)?);
        }
        if !h.name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) || h.name.starts_with('.') {
            return Err(CliError(format!(
                "predictor name {:?} is used as a directory name; use letters, digits, '.', '_' or '-'",
                h.name
            )));
        }
        if !names.insert(h.name.clone()) {
            return Err(CliError(format!(
                "predictor name {:?} is used twice; name them with name=file:... or name=cmd:...",
                h.name
            )));
        }
        handles.push(h);
    }
    Ok(handles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleFlag {
    /// Summed category softmax must exceed --theta.
    Threshold,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationFlag {
    Ratio,
    #[value(alias = "chance-rescaled")]
    Chance,
}

impl From<NormalizationFlag> for Normalization {
    fn from(f: NormalizationFlag) -> Self {
        match f {
            NormalizationFlag::Ratio => Normalization::Ratio,
            NormalizationFlag::Chance => Normalization::ChanceRescaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskFlag {
    SingleLabel,
    MultiLabel,
}

impl From<TaskFlag> for Task {
    fn from(f: TaskFlag) -> Self {
        match f {
            TaskFlag::SingleLabel => Task::SingleLabel,
            TaskFlag::MultiLabel => Task::MultiLabel,
        }
    }
}

/// Decision-rule override from `--rule` / `--theta`.
pub fn rule_override(rule: Option<RuleFlag>, theta: Option<f64>) -> CliResult<Option<Value>> {
    Ok(match (rule, theta) {
        (None, None) => None,
        (Some(RuleFlag::Argmax), Some(_)) => {
            return Err(CliError("--theta only applies to --rule threshold".into()))
        }
        (Some(RuleFlag::Argmax), None) => Some(serde_json::to_value(DecisionRule::Argmax).expect("serializes")),
        (_, theta) => Some(json!({"rule": "summed_softmax_threshold", "theta": theta.unwrap_or(0.5)})),
    })
}

pub fn put_path(map: &mut Map<String, Value>, key: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        map.insert(key.into(), Value::String(p.to_string_lossy().into_owned()));
    }
}

pub fn absolute_opt(path: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
    path.as_deref().map(absolute).transpose()
}

pub fn load_mapping(path: Option<&PathBuf>) -> CliResult<Option<CategoryMapping>> {
    Ok(path.map(|p| CategoryMapping::load(p)).transpose()?)
}

pub fn default_true() -> bool {
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_text_forms() {
        let one = SpecInput::Text(r#"{"kind":"grayscale"}"#.into()).resolve().unwrap();
        assert_eq!(one, vec![TransformSpec::grayscale()]);
        let preset = SpecInput::Text("validation".into()).resolve().unwrap();
        assert_eq!(preset.len(), 7);
        let list = SpecInput::Text(r#"[{"kind":"patch_shuffle","params":{"grid":4}}]"#.into())
            .resolve()
            .unwrap();
        assert_eq!(list, vec![TransformSpec::patch_shuffle(4)]);
        assert!(SpecInput::Text("no-such-file.json".into()).resolve().is_err());
        assert!(SpecInput::Text(r#"{"kind":"box_blur","params":{"k":4}}"#.into()).resolve().is_err());
    }

    #[test]
    fn rule_flags() {
        assert_eq!(rule_override(None, None).unwrap(), None);
        assert_eq!(rule_override(Some(RuleFlag::Argmax), None).unwrap(), Some(json!({"rule": "argmax"})));
        assert_eq!(
            rule_override(None, Some(0.3)).unwrap(),
            Some(json!({"rule": "summed_softmax_threshold", "theta": 0.3}))
        );
        assert!(rule_override(Some(RuleFlag::Argmax), Some(0.3)).is_err());
    }

    #[test]
    fn duplicate_predictor_names_rejected() {
        let inputs = vec![
            PredictorInput::Text("a=file:/x".into()),
            PredictorInput::Text("a=file:/y".into()),
        ];
        assert!(resolve_predictors(inputs).is_err());
        assert!(resolve_predictors(vec![]).is_err());
    }
}
