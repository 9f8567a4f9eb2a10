use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::seeded_rng;

pub const DEFAULT_TRIALS: usize = 1000;

/// Average precision of one class: mean of precision@k over the ranks `k`
/// of the positives, ranking by descending score with ties broken by
/// sample index. `None` without positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let total = positives.iter().filter(|p| **p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

fn check_matrix(scores_len: usize, labels: &[Vec<bool>]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::Evaluation("no samples".into()));
    }
    let classes = labels[0].len();
    if labels.iter().any(|row| row.len() != classes) || scores_len != labels.len() {
        return Err(Error::Evaluation("ragged score or label matrix".into()));
    }
    Ok(classes)
}

fn column<T: Copy>(rows: &[Vec<T>], c: usize) -> Vec<T> {
    rows.iter().map(|r| r[c]).collect()
}

/// Macro mAP over classes that have at least one positive. Returns the mAP
/// and the excluded (positive-free) class indices.
pub fn mean_average_precision(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<(f64, Vec<usize>)> {
    let classes = check_matrix(scores.len(), labels)?;
    if scores.iter().any(|r| r.len() != classes) {
        return Err(Error::Evaluation("score and label widths differ".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for c in 0..classes {
        match average_precision(&column(scores, c), &column(labels, c)) {
            Some(ap) => {
                sum += ap;
                used += 1;
            }
            None => excluded.push(c),
        }
    }
    if used == 0 {
        return Err(Error::Evaluation("no class has a positive sample".into()));
    }
    Ok((sum / used as f64, excluded))
}

/// Monte-Carlo estimate of the mAP obtained by uniform random scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceMap {
    pub mean: f64,
    /// Standard error of `mean` across trials (0 for a single trial).
    pub std_error: f64,
    pub trials: usize,
    /// Classes without positives, left out of every trial.
    pub excluded_classes: Vec<usize>,
}

/// Draws scores class by class, sample by sample, within each trial.
pub fn chance_map_multilabel(labels: &[Vec<bool>], trials: usize, seed: u64) -> Result<ChanceMap> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let classes = check_matrix(labels.len(), labels)?;
    let columns: Vec<(usize, Vec<bool>)> = (0..classes).map(|c| (c, column(labels, c))).collect();
    let (active, excluded): (Vec<_>, Vec<_>) = columns.into_iter().partition(|(_, col)| col.iter().any(|p| *p));
    if active.is_empty() {
        return Err(Error::Evaluation("no class has a positive sample".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut scores = vec![0.0; labels.len()];
    let mut estimates = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut sum = 0.0;
        for (_, col) in &active {
            for s in scores.iter_mut() {
                *s = rng.random::<f64>();
            }
            sum += average_precision(&scores, col).expect("active class has positives");
        }
        estimates.push(sum / active.len() as f64);
    }
    let n = trials as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let std_error = if trials > 1 {
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(ChanceMap {
        mean,
        std_error,
        trials,
        excluded_classes: excluded.into_iter().map(|(c, _)| c).collect(),
    })
}
