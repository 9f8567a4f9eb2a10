//! Reliance evaluation: decision rules, accuracy, chance levels, relative
//! accuracy and suppression sweeps.

mod chance;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageId;
use crate::manifest::Label;
use crate::predictor::PredictionRecord;

pub use chance::{average_precision, chance_map_multilabel, mean_average_precision, ChanceMap, DEFAULT_TRIALS};
pub use sweep::{
    aggregate_domain, compare_decision_rules, evaluate_condition, fraction_more_reliant, per_class_accuracy,
    per_class_curves, sweep, ClassCurve, ClassTally, ConditionResult, Counts, CurvePoint, DomainSummary,
    PerClassReport, RawPoint, RelianceCurve, RuleComparison, SweepOptions, SweepResult,
};

/// Probability mass may exceed 1 by this much (float32 softmax heads).
const MASS_TOLERANCE: f64 = 1e-4;

/// Maps fine classes onto coarser entry-level categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMapping {
    fine_to_entry: Vec<usize>,
    entry_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MappingFile {
    fine_to_entry: BTreeMap<String, usize>,
    entry_names: Vec<String>,
}

impl CategoryMapping {
    pub fn new(fine_to_entry: Vec<usize>, entry_names: Vec<String>) -> Result<Self> {
        if fine_to_entry.is_empty() || entry_names.is_empty() {
            return Err(Error::InvalidParameter("category mapping must be non-empty".into()));
        }
        if let Some((fine, entry)) = fine_to_entry
            .iter()
            .enumerate()
            .find(|(_, e)| **e >= entry_names.len())
        {
            return Err(Error::InvalidParameter(format!(
                "fine class {fine} maps to entry {entry}, but only {} entries exist",
                entry_names.len()
            )));
        }
        Ok(Self {
            fine_to_entry,
            entry_names,
        })
    }

    /// Parses `{"fine_to_entry": {"<fine>": entry}, "entry_names": [...]}`.
    /// Fine indices must be exactly `0..n`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MappingFile = serde_json::from_str(text).map_err(|e| Error::json("category mapping", e))?;
        let mut table = vec![None; file.fine_to_entry.len()];
        for (key, entry) in &file.fine_to_entry {
            let fine: usize = key.parse().map_err(|_| {
                Error::InvalidParameter(format!("fine class key {key:?} is not an index"))
            })?;
            let slot = table.get_mut(fine).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "fine class indices must be 0..{}, found {fine}",
                    file.fine_to_entry.len()
                ))
            })?;
            if slot.replace(*entry).is_some() {
                return Err(Error::InvalidParameter(format!("fine class {fine} listed twice")));
            }
        }
        let table = table.into_iter().map(|e| e.expect("every slot filled")).collect();
        Self::new(table, file.entry_names)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = MappingFile {
            fine_to_entry: self
                .fine_to_entry
                .iter()
                .enumerate()
                .map(|(f, e)| (f.to_string(), *e))
                .collect(),
            entry_names: self.entry_names.clone(),
        };
        serde_json::to_string(&file).expect("mapping serializes")
    }

    pub fn num_fine(&self) -> usize {
        self.fine_to_entry.len()
    }

    pub fn num_entry(&self) -> usize {
        self.entry_names.len()
    }

    pub fn entry_of(&self, fine: usize) -> Option<usize> {
        self.fine_to_entry.get(fine).copied()
    }

    pub fn entry_names(&self) -> &[String] {
        &self.entry_names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecisionRule {
    /// Predict the top category only if its mass exceeds `theta`.
    SummedSoftmaxThreshold { theta: f64 },
    Argmax,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule::SummedSoftmaxThreshold { theta: 0.5 }
    }
}

impl DecisionRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            DecisionRule::SummedSoftmaxThreshold { theta } if !(*theta > 0.0 && *theta < 1.0) => Err(
                Error::InvalidParameter(format!("threshold must lie in (0, 1), got {theta}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    SingleLabel,
    MultiLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default)]
    pub decision_rule: DecisionRule,
    #[serde(default)]
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `a_sup / a_orig`.
    Ratio,
    /// `(a_sup - a_chance) / (a_orig - a_chance)`.
    #[default]
    ChanceRescaled,
}

/// `1 / C`.
pub fn chance_accuracy(classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "chance accuracy needs at least 2 classes, got {classes}"
        )));
    }
    Ok(1.0 / classes as f64)
}

/// Suppressed accuracy on a scale where the baseline is 1 and, for the
/// chance-rescaled form, chance is 0. Values below chance stay negative.
pub fn relative_accuracy(a_sup: f64, a_orig: f64, a_chance: f64, normalization: Normalization) -> Result<f64> {
    if !(a_sup.is_finite() && a_orig.is_finite() && a_chance.is_finite()) {
        return Err(Error::InvalidParameter("accuracies must be finite".into()));
    }
    match normalization {
        Normalization::Ratio => {
            if a_orig <= 0.0 {
                return Err(Error::Undefined(format!(
                    "ratio normalization needs a positive baseline, got {a_orig}"
                )));
            }
            Ok(a_sup / a_orig)
        }
        Normalization::ChanceRescaled => {
            if a_orig <= a_chance {
                return Err(Error::Undefined(format!(
                    "baseline accuracy {a_orig} does not exceed chance {a_chance}"
                )));
            }
            Ok((a_sup - a_chance) / (a_orig - a_chance))
        }
    }
}

/// [`relative_accuracy`] for count fractions `correct / total` with chance
/// `1 / classes`, evaluated in integers and divided once, so results such
/// as 0.4375 come out exact. `classes` is only needed for the
/// chance-rescaled form.
pub fn relative_accuracy_counts(
    sup: (usize, usize),
    orig: (usize, usize),
    classes: Option<usize>,
    normalization: Normalization,
) -> Result<f64> {
    let [cs, ns, co, no] = [sup.0, sup.1, orig.0, orig.1].map(|v| v as i128);
    if ns == 0 || no == 0 || cs > ns || co > no {
        return Err(Error::InvalidParameter(format!(
            "invalid counts {}/{} and {}/{}",
            sup.0, sup.1, orig.0, orig.1
        )));
    }
    let (num, den) = match (normalization, classes) {
        (Normalization::Ratio, _) => (cs * no, co * ns),
        (Normalization::ChanceRescaled, Some(c)) => {
            let c = c as i128;
            ((cs * c - ns) * no, (co * c - no) * ns)
        }
        (Normalization::ChanceRescaled, None) => {
            return Err(Error::InvalidParameter("chance rescaling needs a class count".into()))
        }
    };
    if den <= 0 {
        return Err(Error::Undefined(match normalization {
            Normalization::Ratio => "ratio normalization needs a positive baseline, got 0".to_string(),
            Normalization::ChanceRescaled => format!(
                "baseline accuracy {} does not exceed chance {}",
                orig.0 as f64 / orig.1 as f64,
                1.0 / classes.unwrap_or(1) as f64
            ),
        }));
    }
    Ok(num as f64 / den as f64)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-category probability mass: fine probabilities summed by category,
/// or the probabilities themselves without a mapping.
pub fn entry_masses(probs: &[f64], mapping: Option<&CategoryMapping>) -> Result<Vec<f64>> {
    let total: f64 = probs.iter().sum();
    if total > 1.0 + MASS_TOLERANCE {
        return Err(Error::InvalidPredictions(format!("probabilities sum to {total}")));
    }
    let Some(m) = mapping else {
        return Ok(probs.to_vec());
    };
    if probs.len() != m.num_fine() {
        return Err(Error::InvalidPredictions(format!(
            "expected {} fine-class probabilities, got {}",
            m.num_fine(),
            probs.len()
        )));
    }
    let mut masses = vec![0.0; m.num_entry()];
    for (p, e) in probs.iter().zip(&m.fine_to_entry) {
        masses[*e] += p;
    }
    Ok(masses)
}

/// The predicted category, or `None` when the threshold rule abstains.
pub fn entry_level_decide(
    probs: &[f64],
    mapping: Option<&CategoryMapping>,
    rule: DecisionRule,
) -> Result<Option<usize>> {
    let masses = entry_masses(probs, mapping)?;
    if masses.is_empty() {
        return Err(Error::InvalidPredictions("empty probability vector".into()));
    }
    let top = argmax(&masses);
    Ok(match rule {
        DecisionRule::Argmax => Some(top),
        DecisionRule::SummedSoftmaxThreshold { theta } => (masses[top] > theta).then_some(top),
    })
}

/// Pairs each truth id with its record; every id must have exactly one.
pub(crate) fn match_records<'a>(
    records: &'a [PredictionRecord],
    truth: &'a [(ImageId, Label)],
) -> Result<Vec<(&'a Label, &'a PredictionRecord)>> {
    let mut by_id: BTreeMap<&ImageId, &PredictionRecord> = BTreeMap::new();
    for r in records {
        if by_id.insert(&r.image_id, r).is_some() {
            return Err(Error::InvalidPredictions(format!(
                "duplicate prediction for id {}",
                r.image_id
            )));
        }
    }
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(truth.len());
    for (id, label) in truth {
        if !seen.insert(id) {
            return Err(Error::InvalidParameter(format!("duplicate ground-truth id {id}")));
        }
        match by_id.get(id) {
            Some(r) => pairs.push((label, *r)),
            None => missing.push(id.as_str()),
        }
    }
    if truth.is_empty() {
        return Err(Error::Evaluation("no ground-truth labels".into()));
    }
    if !missing.is_empty() {
        return Err(Error::Evaluation(format!("missing predictions: {missing:?}")));
    }
    Ok(pairs)
}

fn single_label(label: &Label) -> Result<usize> {
    label.single().ok_or_else(|| {
        Error::Evaluation("single-label evaluation given a multi-label ground truth".into())
    })
}

/// Per-sample category scores and binary ground truth for the multi-label
/// task, in truth order.
pub(crate) fn multilabel_matrices(
    pairs: &[(&Label, &PredictionRecord)],
    mapping: Option<&CategoryMapping>,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    let mut scores = Vec::with_capacity(pairs.len());
    for (_, r) in pairs {
        scores.push(entry_masses(&r.scores, mapping)?);
    }
    let classes = scores[0].len();
    let mut labels = Vec::with_capacity(pairs.len());
    for (label, r) in pairs {
        let mut row = vec![false; classes];
        for c in label.positives() {
            *row.get_mut(c).ok_or_else(|| {
                Error::Evaluation(format!("{}: label {c} outside {classes} classes", r.image_id))
            })? = true;
        }
        labels.push(row);
    }
    Ok((scores, labels))
}

/// Fraction correct (single label) or macro mAP (multi label).
pub fn accuracy(
    records: &[PredictionRecord],
    truth: &[(ImageId, Label)],
    config: &EvalConfig,
    mapping: Option<&CategoryMapping>,
) -> Result<f64> {
    config.decision_rule.validate()?;
    let pairs = match_records(records, truth)?;
    match config.task {
        Task::SingleLabel => {
            let mut correct = 0usize;
            for (label, r) in &pairs {
                let want = single_label(label)?;
                if entry_level_decide(&r.scores, mapping, config.decision_rule)? == Some(want) {
                    correct += 1;
                }
            }
            Ok(correct as f64 / pairs.len() as f64)
        }
        Task::MultiLabel => {
            let (scores, labels) = multilabel_matrices(&pairs, mapping)?;
            Ok(mean_average_precision(&scores, &labels)?.0)
        }
    }
}
