//! Suppression-validation metrics.
//!
//! Every metric compares an original `x` with its transformed `x_hat` on
//! the grayscale versions of both and is normalised so that `m(x, x) = 1`:
//!
//! * `lv`: mean variance over non-overlapping `w x w` tiles, as a ratio
//!   `min(1, phi(x_hat) / phi(x))`.
//! * `hfe`: fraction of DFT energy farther than `r` bins from DC, same ratio.
//! * `essim`: SSIM between Sobel (kernel `k`) gradient-magnitude maps.
//! * `gc`: mean Pearson correlation of horizontal and vertical central
//!   differences.
//!
//! Texture combines `lv` and `hfe`, shape combines `essim` and `gc`.

mod edge;
mod gradient;
mod local_variance;
mod spectral;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{to_grayscale, ImageBuffer, ImageId};
use crate::transforms::{apply, TransformSpec};

/// Ratios whose reference value is at or below this count as "no feature".
const ZERO_REFERENCE: f64 = 1e-12;

/// Grayscale working plane.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn luma(img: &ImageBuffer) -> Self {
        let g = to_grayscale(img);
        Plane {
            width: g.width(),
            height: g.height(),
            data: g.into_data(),
        }
    }
}

/// `min(1, num / den)`, defined as 1 when the reference is zero.
pub(crate) fn clamped_ratio(num: f64, den: f64) -> f64 {
    if den <= ZERO_REFERENCE {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Tile side for local variance.
    pub w: usize,
    /// Frequency radius (in bins) for the high-frequency share.
    pub r: f64,
    /// Sobel kernel size; odd.
    pub k: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { w: 11, r: 11.0, k: 11 }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.w < 2 {
            return Err(Error::InvalidParameter(format!("w must be >= 2, got {}", self.w)));
        }
        if !(self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!("r must be >= 1, got {}", self.r)));
        }
        if self.k < 3 || self.k % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "k must be odd and >= 3, got {}",
                self.k
            )));
        }
        Ok(())
    }

    fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.w > width.min(height) {
            return Err(Error::InvalidParameter(format!(
                "variance window {} exceeds image {width}x{height}",
                self.w
            )));
        }
        Ok(())
    }
}

/// How texture and shape scores combine their two metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Harmonic,
}

impl Aggregation {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Aggregation::Arithmetic => (a + b) / 2.0,
            Aggregation::Harmonic => {
                if a + b == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub lv: f64,
    pub hfe: f64,
    pub essim: f64,
    pub gc: f64,
    pub texture: f64,
    pub shape: f64,
}

impl MetricReport {
    /// Builds the report from the four base metrics.
    pub fn from_parts(lv: f64, hfe: f64, essim: f64, gc: f64, aggregation: Aggregation) -> Self {
        Self {
            lv,
            hfe,
            essim,
            gc,
            texture: aggregation.combine(lv, hfe),
            shape: aggregation.combine(essim, gc),
        }
    }

    pub fn fields(&self) -> [f64; 6] {
        [self.lv, self.hfe, self.essim, self.gc, self.texture, self.shape]
    }
}

fn planes(x: &ImageBuffer, x_hat: &ImageBuffer) -> Result<(Plane, Plane)> {
    if x.width() != x_hat.width() || x.height() != x_hat.height() {
        return Err(Error::DimensionMismatch(
            x.width(),
            x.height(),
            x.channels(),
            x_hat.width(),
            x_hat.height(),
            x_hat.channels(),
        ));
    }
    Ok((Plane::luma(x), Plane::luma(x_hat)))
}

pub fn local_variance_ratio(x: &ImageBuffer, x_hat: &ImageBuffer, w: usize) -> Result<f64> {
    let (a, b) = planes(x, x_hat)?;
    if w == 0 || w > a.width.min(a.height) {
        return Err(Error::InvalidParameter(format!(
            "variance window {w} does not fit {}x{}",
            a.width, a.height
        )));
    }
    Ok(local_variance::local_variance(&a, &b, w))
}

pub fn high_frequency_energy_ratio(x: &ImageBuffer, x_hat: &ImageBuffer, r: f64) -> Result<f64> {
    let (a, b) = planes(x, x_hat)?;
    Ok(spectral::high_frequency_energy(&a, &b, r))
}

pub fn edge_ssim(x: &ImageBuffer, x_hat: &ImageBuffer, k: usize) -> Result<f64> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "Sobel kernel must be odd and >= 3, got {k}"
        )));
    }
    let (a, b) = planes(x, x_hat)?;
    Ok(edge::edge_ssim(&a, &b, k))
}

pub fn gradient_correlation(x: &ImageBuffer, x_hat: &ImageBuffer) -> Result<f64> {
    let (a, b) = planes(x, x_hat)?;
    Ok(gradient::gradient_correlation(&a, &b))
}

/// All four metrics plus texture/shape aggregates.
pub fn report(
    x: &ImageBuffer,
    x_hat: &ImageBuffer,
    params: &MetricParams,
    aggregation: Aggregation,
) -> Result<MetricReport> {
    params.validate()?;
    let (a, b) = planes(x, x_hat)?;
    params.check_fits(a.width, a.height)?;
    Ok(MetricReport::from_parts(
        local_variance::local_variance(&a, &b, params.w),
        spectral::high_frequency_energy(&a, &b, params.r),
        edge::edge_ssim(&a, &b, params.k),
        gradient::gradient_correlation(&a, &b),
        aggregation,
    ))
}

/// One per-image result of a corpus run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub image_id: ImageId,
    pub transform: String,
    pub param_id: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub transform: String,
    pub param_id: String,
    /// Rows sorted by image id.
    pub rows: Vec<MetricRow>,
    /// Field-wise mean over `rows`; `None` when every image failed.
    pub aggregate: Option<MetricReport>,
    /// Images that could not be loaded or transformed, with the reason.
    pub failures: Vec<(ImageId, String)>,
}

/// Field-wise arithmetic mean, summed in the given order. Texture and shape
/// are recombined from the averaged base metrics.
pub fn mean_report(reports: &[MetricReport], aggregation: Aggregation) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricReport::from_parts(
        mean(|r| r.lv),
        mean(|r| r.hfe),
        mean(|r| r.essim),
        mean(|r| r.gc),
        aggregation,
    ))
}

/// Applies `spec` to every image and averages the reports.
///
/// `load` is called once per id, possibly from several threads. Failures are
/// collected rather than aborting the run. Results do not depend on thread
/// count: reduction happens in image-id order.
pub fn corpus_metrics<F>(
    ids: &[ImageId],
    load: F,
    spec: &TransformSpec,
    params: &MetricParams,
    aggregation: Aggregation,
    global_seed: u64,
) -> Result<CorpusMetrics>
where
    F: Fn(&ImageId) -> Result<ImageBuffer> + Sync,
{
    spec.validate()?;
    params.validate()?;
    let transform = spec.kind.to_string();
    let param_id = spec.param_id();
    let mut results: Vec<(ImageId, Result<MetricReport>)> = ids
        .par_iter()
        .map(|id| {
            let outcome = load(id).and_then(|x| {
                let x_hat = apply(spec, &x, id, global_seed)?;
                report(&x, &x_hat, params, aggregation)
            });
            (id.clone(), outcome)
        })
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (image_id, outcome) in results {
        match outcome {
            Ok(report) => rows.push(MetricRow {
                image_id,
                transform: transform.clone(),
                param_id: param_id.clone(),
                report,
            }),
            Err(e) => failures.push((image_id, e.to_string())),
        }
    }
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.report).collect();
    Ok(CorpusMetrics {
        transform,
        param_id,
        aggregate: mean_report(&reports, aggregation),
        rows,
        failures,
    })
}

/// Image id used for the aggregate row in CSV output.
pub const AGGREGATE_ROW_ID: &str = "__mean__";

pub const CSV_HEADER: [&str; 9] = [
    "image_id", "transform", "param_id", "lv", "hfe", "essim", "gc", "texture", "shape",
];

/// Writes per-image rows followed by one aggregate row per run.
pub fn write_metrics_csv<W: Write>(out: W, runs: &[CorpusMetrics]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv write failed: {e}"));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    let fmt = |r: &MetricReport| r.fields().map(|v| format!("{v}"));
    for run in runs {
        for row in &run.rows {
            let mut record = vec![
                row.image_id.to_string(),
                row.transform.clone(),
                row.param_id.clone(),
            ];
            record.extend(fmt(&row.report));
            writer.write_record(&record).map_err(csv_err)?;
        }
        if let Some(agg) = &run.aggregate {
            let mut record = vec![
                AGGREGATE_ROW_ID.to_string(),
                run.transform.clone(),
                run.param_id.clone(),
            ];
            record.extend(fmt(agg));
            writer.write_record(&record).map_err(csv_err)?;
        }
    }
    writer.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}
