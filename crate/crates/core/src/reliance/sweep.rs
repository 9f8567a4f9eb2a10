use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    accuracy, chance_accuracy, chance_map_multilabel, entry_level_decide, match_records,
    multilabel_matrices, relative_accuracy, relative_accuracy_counts, single_label, CategoryMapping, DecisionRule, EvalConfig,
    Normalization, Task, DEFAULT_TRIALS,
};
use crate::error::{Error, Result};
use crate::image::{write_png, ImageId};
use crate::manifest::{output_path, Label, Manifest};
use crate::predictor::{PredictRequest, PredictionRecord, Predictor, BASELINE};
use crate::transforms::{apply, TransformSpec};

/// `correct / total` behind an accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strength: f64,
    /// Condition label of the transform spec.
    pub label: String,
    pub accuracy: f64,
    pub relative_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Counts>,
}

/// Relative accuracy against suppression strength for one transform family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelianceCurve {
    pub transform: String,
    pub model: String,
    pub normalization: Normalization,
    pub baseline_accuracy: f64,
    pub chance: f64,
    /// Sorted by strength; ties keep sweep order.
    pub points: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_counts: Option<Counts>,
    /// Class count when `chance` is `1 / classes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

/// Raw material for one curve point.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoint {
    pub strength: f64,
    pub label: String,
    pub accuracy: f64,
    pub counts: Option<Counts>,
}

impl RelianceCurve {
    /// Builds a curve from raw `(strength, label, accuracy)` triples.
    pub fn from_accuracies(
        transform: impl Into<String>,
        model: impl Into<String>,
        normalization: Normalization,
        baseline_accuracy: f64,
        chance: f64,
        raw: Vec<(f64, String, f64)>,
    ) -> Result<Self> {
        let raw = raw
            .into_iter()
            .map(|(strength, label, accuracy)| RawPoint {
                strength,
                label,
                accuracy,
                counts: None,
            })
            .collect();
        Self::build(transform.into(), model.into(), normalization, baseline_accuracy, None, chance, None, raw)
    }

    /// Builds a curve, using exact count arithmetic wherever the baseline
    /// and a point both carry counts (and, for chance rescaling, the class
    /// count is known).
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        transform: String,
        model: String,
        normalization: Normalization,
        baseline_accuracy: f64,
        baseline_counts: Option<Counts>,
        chance: f64,
        classes: Option<usize>,
        raw: Vec<RawPoint>,
    ) -> Result<Self> {
        let mut points = raw
            .into_iter()
            .map(|p| {
                let exact = match (p.counts, baseline_counts) {
                    (Some(s), Some(o)) if classes.is_some() || normalization == Normalization::Ratio => {
                        Some(relative_accuracy_counts(
                            (s.correct, s.total),
                            (o.correct, o.total),
                            classes,
                            normalization,
                        ))
                    }
                    _ => None,
                };
                let rel = match exact {
                    Some(r) => r?,
                    None => relative_accuracy(p.accuracy, baseline_accuracy, chance, normalization)?,
                };
                Ok(CurvePoint {
                    strength: p.strength,
                    label: p.label,
                    accuracy: p.accuracy,
                    relative_accuracy: rel,
                    counts: p.counts,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        points.sort_by(|a, b| a.strength.total_cmp(&b.strength));
        Ok(Self {
            transform,
            model,
            normalization,
            baseline_accuracy,
            chance,
            points,
            baseline_counts,
            classes,
        })
    }

    /// Same raw accuracies under another normalization.
    pub fn renormalized(&self, normalization: Normalization) -> Result<Self> {
        Self::build(
            self.transform.clone(),
            self.model.clone(),
            normalization,
            self.baseline_accuracy,
            self.baseline_counts,
            self.chance,
            self.classes,
            self.points
                .iter()
                .map(|p| RawPoint {
                    strength: p.strength,
                    label: p.label.clone(),
                    accuracy: p.accuracy,
                    counts: p.counts,
                })
                .collect(),
        )
    }

    pub fn strengths(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.strength).collect()
    }
}

/// Correct decisions for one ground-truth class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub class: usize,
    pub correct: usize,
    pub total: usize,
}

impl ClassTally {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Accuracy broken down by ground-truth class (single-label task).
pub fn per_class_accuracy(
    records: &[PredictionRecord],
    truth: &[(ImageId, Label)],
    rule: DecisionRule,
    mapping: Option<&CategoryMapping>,
) -> Result<Vec<ClassTally>> {
    let mut tallies: BTreeMap<usize, ClassTally> = BTreeMap::new();
    for (label, r) in match_records(records, truth)? {
        let class = single_label(label)?;
        let t = tallies.entry(class).or_insert(ClassTally {
            class,
            correct: 0,
            total: 0,
        });
        t.total += 1;
        if entry_level_decide(&r.scores, mapping, rule)? == Some(class) {
            t.correct += 1;
        }
    }
    Ok(tallies.into_values().collect())
}

/// Outcome of evaluating one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub label: String,
    pub transform: String,
    pub strength: f64,
    pub accuracy: f64,
    /// Empty for the multi-label task.
    pub per_class: Vec<ClassTally>,
}

impl ConditionResult {
    /// Totals over the per-class tallies (single-label only).
    pub fn counts(&self) -> Option<Counts> {
        if self.per_class.is_empty() {
            return None;
        }
        Some(Counts {
            correct: self.per_class.iter().map(|t| t.correct).sum(),
            total: self.per_class.iter().map(|t| t.total).sum(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub normalization: Normalization,
    pub global_seed: u64,
    /// Where transformed images are written for predictors that read them.
    pub work_dir: Option<PathBuf>,
    /// Class count for single-label chance; defaults to the mapping's
    /// category count or the score width.
    pub num_classes: Option<usize>,
    /// Monte-Carlo trials for multi-label chance.
    pub chance_trials: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::default(),
            global_seed: 0,
            work_dir: None,
            num_classes: None,
            chance_trials: DEFAULT_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: String,
    pub baseline: ConditionResult,
    /// In sweep order.
    pub conditions: Vec<ConditionResult>,
    pub chance: f64,
    /// Monte-Carlo standard error of `chance` (multi-label only).
    pub chance_std_error: Option<f64>,
    /// One curve per transform kind, in order of first appearance.
    pub curves: Vec<RelianceCurve>,
}

fn evaluate(
    label: &str,
    transform: &str,
    strength: f64,
    records: &[PredictionRecord],
    truth: &[(ImageId, Label)],
    config: &EvalConfig,
    mapping: Option<&CategoryMapping>,
) -> Result<ConditionResult> {
    let acc = accuracy(records, truth, config, mapping)?;
    let per_class = match config.task {
        Task::SingleLabel => per_class_accuracy(records, truth, config.decision_rule, mapping)?,
        Task::MultiLabel => Vec::new(),
    };
    Ok(ConditionResult {
        label: label.to_string(),
        transform: transform.to_string(),
        strength,
        accuracy: acc,
        per_class,
    })
}

fn write_condition_images(
    manifest: &Manifest,
    spec: &TransformSpec,
    dir: &std::path::Path,
    global_seed: u64,
) -> Result<Vec<PredictRequest>> {
    let outcomes: Vec<(ImageId, Result<PathBuf>)> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let path = output_path(dir, &entry.id);
            let outcome = manifest
                .load_image(&entry.id)
                .and_then(|img| apply(spec, &img, &entry.id, global_seed))
                .and_then(|out| write_png(&out, &path))
                .map(|_| path);
            (entry.id.clone(), outcome)
        })
        .collect();
    let mut requests = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(path) => requests.push(PredictRequest { id, path }),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Evaluation(format!(
            "failed to transform {} images: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(requests)
}

#[allow(clippy::too_many_arguments)]
fn run_condition(
    manifest: &Manifest,
    predictor: &mut dyn Predictor,
    spec: &TransformSpec,
    truth: &[(ImageId, Label)],
    config: &EvalConfig,
    mapping: Option<&CategoryMapping>,
    work_dir: &Path,
    global_seed: u64,
) -> Result<ConditionResult> {
    let label = spec.label();
    let requests = if predictor.needs_images() {
        write_condition_images(manifest, spec, &work_dir.join(&label), global_seed)?
    } else {
        manifest
            .entries()
            .iter()
            .map(|e| PredictRequest {
                id: e.id.clone(),
                path: output_path(&work_dir.join(&label), &e.id),
            })
            .collect()
    };
    let records = predictor.predict(&label, &requests)?;
    evaluate(
        &label,
        spec.kind.as_str(),
        spec.default_strength(),
        &records,
        truth,
        config,
        mapping,
    )
}

/// Accuracy of one predictor on one transformed condition, without a
/// baseline or curve.
pub fn evaluate_condition(
    manifest: &Manifest,
    predictor: &mut dyn Predictor,
    spec: &TransformSpec,
    config: &EvalConfig,
    mapping: Option<&CategoryMapping>,
    work_dir: Option<&Path>,
    global_seed: u64,
) -> Result<ConditionResult> {
    config.decision_rule.validate()?;
    spec.validate()?;
    let truth = manifest.labels()?;
    let work_dir = match (predictor.needs_images(), work_dir) {
        (true, None) => {
            return Err(Error::InvalidParameter(
                "this predictor reads images; a work directory is required".into(),
            ))
        }
        (_, dir) => dir.map(Path::to_path_buf).unwrap_or_default(),
    };
    run_condition(manifest, predictor, spec, &truth, config, mapping, &work_dir, global_seed)
        .map_err(|e| Error::Evaluation(format!("{}: condition {}: {e}", predictor.name(), spec.label())))
}

/// Evaluates the baseline and every spec, then assembles one curve per
/// transform kind. Any predictor or evaluation failure aborts the sweep
/// with the offending condition named.
pub fn sweep(
    manifest: &Manifest,
    predictor: &mut dyn Predictor,
    specs: &[TransformSpec],
    config: &EvalConfig,
    mapping: Option<&CategoryMapping>,
    options: &SweepOptions,
) -> Result<SweepResult> {
    config.decision_rule.validate()?;
    for spec in specs {
        spec.validate()?;
    }
    let mut labels: Vec<String> = specs.iter().map(TransformSpec::label).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidSpec(format!("sweep lists {} twice", w[0])));
    }
    if labels.iter().any(|l| l == BASELINE) {
        return Err(Error::InvalidSpec(format!("{BASELINE} is reserved")));
    }
    let truth = manifest.labels()?;
    let work_dir = match (predictor.needs_images(), &options.work_dir) {
        (true, None) => {
            return Err(Error::InvalidParameter(
                "this predictor reads images; a work directory is required".into(),
            ))
        }
        (_, dir) => dir.clone().unwrap_or_default(),
    };

    let model = predictor.name().to_string();
    let context = |cond: &str, e: Error| Error::Evaluation(format!("{model}: condition {cond}: {e}"));

    let baseline_requests: Vec<PredictRequest> = manifest
        .entries()
        .iter()
        .map(|e| PredictRequest {
            id: e.id.clone(),
            path: e.path.clone(),
        })
        .collect();
    let records = predictor
        .predict(BASELINE, &baseline_requests)
        .map_err(|e| context(BASELINE, e))?;
    let baseline = evaluate(BASELINE, BASELINE, 0.0, &records, &truth, config, mapping)
        .map_err(|e| context(BASELINE, e))?;

    let (chance, chance_std_error, classes) = match config.task {
        Task::SingleLabel => {
            let classes = options
                .num_classes
                .or(mapping.map(CategoryMapping::num_entry))
                .or(records.first().map(|r| r.scores.len()))
                .unwrap_or(0);
            (chance_accuracy(classes)?, None, Some(classes))
        }
        Task::MultiLabel => {
            let pairs = match_records(&records, &truth)?;
            let (_, labels) = multilabel_matrices(&pairs, mapping)?;
            let c = chance_map_multilabel(&labels, options.chance_trials, options.global_seed)?;
            (c.mean, Some(c.std_error), None)
        }
    };

    let mut conditions = Vec::with_capacity(specs.len());
    for spec in specs {
        let result = run_condition(manifest, predictor, spec, &truth, config, mapping, &work_dir, options.global_seed)
            .map_err(|e| context(&spec.label(), e))?;
        conditions.push(result);
    }

    let mut families: Vec<(String, Vec<RawPoint>)> = Vec::new();
    for c in &conditions {
        let raw = RawPoint {
            strength: c.strength,
            label: c.label.clone(),
            accuracy: c.accuracy,
            counts: c.counts(),
        };
        match families.iter_mut().find(|(k, _)| *k == c.transform) {
            Some((_, v)) => v.push(raw),
            None => families.push((c.transform.clone(), vec![raw])),
        }
    }
    let curves = families
        .into_iter()
        .map(|(kind, raw)| {
            RelianceCurve::build(
                kind,
                model.clone(),
                options.normalization,
                baseline.accuracy,
                baseline.counts(),
                chance,
                classes,
                raw,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult {
        model,
        baseline,
        conditions,
        chance,
        chance_std_error,
        curves,
    })
}

/// Pointwise mean and population standard deviation across curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub transform: String,
    pub strengths: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub members: usize,
}

/// Values are sorted before summing so the result does not depend on curve
/// order; a point where every curve agrees has exactly that mean and zero
/// spread.
pub fn aggregate_domain(curves: &[RelianceCurve]) -> Result<DomainSummary> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidParameter("no curves to aggregate".into()))?;
    let strengths = first.strengths();
    if let Some(c) = curves.iter().find(|c| c.strengths() != strengths) {
        return Err(Error::InvalidParameter(format!(
            "curve {} / {} has a different strength grid",
            c.model, c.transform
        )));
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(strengths.len());
    let mut std = Vec::with_capacity(strengths.len());
    for i in 0..strengths.len() {
        let mut values: Vec<f64> = curves.iter().map(|c| c.points[i].relative_accuracy).collect();
        values.sort_by(f64::total_cmp);
        let (lo, hi) = (values[0], values[values.len() - 1]);
        if lo == hi {
            mean.push(lo);
            std.push(0.0);
            continue;
        }
        let m = (values.iter().sum::<f64>() / n).clamp(lo, hi);
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(DomainSummary {
        transform: first.transform.clone(),
        strengths,
        mean,
        std,
        members: curves.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    pub class: usize,
    pub baseline_accuracy: f64,
    /// `(strength, relative accuracy)`, sorted by strength.
    pub points: Vec<(f64, f64)>,
}

impl ClassCurve {
    pub fn mean_relative_accuracy(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    pub transform: String,
    pub classes: Vec<ClassCurve>,
    /// Classes whose baseline accuracy does not exceed chance; no curve.
    pub flagged: Vec<usize>,
}

/// Per-class relative accuracy for the conditions of one transform kind.
pub fn per_class_curves(result: &SweepResult, transform: &str, normalization: Normalization) -> Result<PerClassReport> {
    let mut conditions: Vec<&ConditionResult> =
        result.conditions.iter().filter(|c| c.transform == transform).collect();
    if conditions.is_empty() {
        return Err(Error::InvalidParameter(format!("sweep has no {transform} conditions")));
    }
    if result.baseline.per_class.is_empty() {
        return Err(Error::Evaluation("per-class curves need a single-label sweep".into()));
    }
    conditions.sort_by(|a, b| a.strength.total_cmp(&b.strength));
    let class_count = result.curves.iter().find_map(|c| c.classes);
    let mut classes = Vec::new();
    let mut flagged = Vec::new();
    for base in &result.baseline.per_class {
        let a_orig = base.accuracy();
        if a_orig <= result.chance {
            flagged.push(base.class);
            continue;
        }
        let mut points = Vec::with_capacity(conditions.len());
        for c in &conditions {
            let tally = c
                .per_class
                .iter()
                .find(|t| t.class == base.class)
                .ok_or_else(|| Error::Evaluation(format!("class {} missing in {}", base.class, c.label)))?;
            let rel = match (normalization, class_count) {
                (Normalization::ChanceRescaled, None) => {
                    relative_accuracy(tally.accuracy(), a_orig, result.chance, normalization)?
                }
                _ => relative_accuracy_counts(
                    (tally.correct, tally.total),
                    (base.correct, base.total),
                    class_count,
                    normalization,
                )?,
            };
            points.push((c.strength, rel));
        }
        classes.push(ClassCurve {
            class: base.class,
            baseline_accuracy: a_orig,
            points,
        });
    }
    Ok(PerClassReport {
        transform: transform.to_string(),
        classes,
        flagged,
    })
}

/// Share of classes, among those with curves in both reports, that rely
/// more on the cue suppressed in `a` than on the one in `b`: their mean
/// relative accuracy under `a` is lower. `None` without common classes.
pub fn fraction_more_reliant(a: &PerClassReport, b: &PerClassReport) -> Option<f64> {
    let b_by_class: BTreeMap<usize, &ClassCurve> = b.classes.iter().map(|c| (c.class, c)).collect();
    let mut common = 0usize;
    let mut more = 0usize;
    for ca in &a.classes {
        if let Some(cb) = b_by_class.get(&ca.class) {
            common += 1;
            if ca.mean_relative_accuracy() < cb.mean_relative_accuracy() {
                more += 1;
            }
        }
    }
    (common > 0).then(|| more as f64 / common as f64)
}

/// The same predictions scored under both decision rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleComparison {
    pub argmax: f64,
    pub thresholded: f64,
    pub abstentions: usize,
    pub samples: usize,
}

pub fn compare_decision_rules(
    records: &[PredictionRecord],
    truth: &[(ImageId, Label)],
    mapping: Option<&CategoryMapping>,
    theta: f64,
) -> Result<RuleComparison> {
    let threshold = DecisionRule::SummedSoftmaxThreshold { theta };
    threshold.validate()?;
    let pairs = match_records(records, truth)?;
    let (mut arg_ok, mut thr_ok, mut abstain) = (0usize, 0usize, 0usize);
    for (label, r) in &pairs {
        let want = single_label(label)?;
        if entry_level_decide(&r.scores, mapping, DecisionRule::Argmax)? == Some(want) {
            arg_ok += 1;
        }
        match entry_level_decide(&r.scores, mapping, threshold)? {
            Some(c) if c == want => thr_ok += 1,
            Some(_) => {}
            None => abstain += 1,
        }
    }
    let n = pairs.len() as f64;
    Ok(RuleComparison {
        argmax: arg_ok as f64 / n,
        thresholded: thr_ok as f64 / n,
        abstentions: abstain,
        samples: pairs.len(),
    })
}
